//! Axisymmetric scalar fields, cylindrical difference operators, and norms.
//!
//! All derivatives are second order: centered in the interior, one-sided
//! (second order) at non-periodic edges, wrap-around in periodic z. The
//! collocated layout makes the discrete divergence of a stream-derived
//! velocity vanish to round-off, which is the discrete form of the
//! incompressibility constraint.

use crate::error::{Error, Result};
use crate::geometry::{region_mask, Grid, Region};

/// Scalar samples on the nodes of a [`Grid`]. Value-semantic.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub name: String,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid, name: &str) -> ScalarField {
        ScalarField {
            grid,
            name: name.to_string(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, name: &str, c: f64) -> ScalarField {
        ScalarField {
            grid,
            name: name.to_string(),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, name: &str, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.n_z {
            let z = grid.z(j);
            for i in 0..grid.n_r {
                values.push(f(grid.r(i), z));
            }
        }
        ScalarField {
            grid,
            name: name.to_string(),
            values,
        }
    }

    pub fn from_values(grid: Grid, name: &str, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "field `{name}`: {} values for a {}x{} grid",
                values.len(),
                grid.n_r,
                grid.n_z
            )));
        }
        Ok(ScalarField {
            grid,
            name: name.to_string(),
            values,
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn renamed(mut self, name: &str) -> ScalarField {
        self.name = name.to_string();
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Errors if any sample is NaN or infinite.
    pub fn check_finite(&self, t: f64) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::BlowUp {
                field: self.name.clone(),
                t,
            })
        }
    }

    /// self + c * other, elementwise.
    pub fn add_scaled(&self, other: &ScalarField, c: f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        ScalarField {
            grid: self.grid,
            name: self.name.clone(),
            values,
        }
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        let values = self.values.iter().map(|v| c * v).collect();
        ScalarField {
            grid: self.grid,
            name: self.name.clone(),
            values,
        }
    }

    pub fn zip_map(&self, other: &ScalarField, name: &str, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f(*a, *b))
            .collect();
        ScalarField {
            grid: self.grid,
            name: name.to_string(),
            values,
        }
    }

    /// Bilinear interpolation at (r, z); None outside the grid. Periodic in z
    /// when the grid is.
    pub fn interp(&self, r: f64, z: f64) -> Option<f64> {
        let g = &self.grid;
        let slack_r = 1e-9 * g.h_r;
        if r < g.r_min - slack_r || r > g.r_max + slack_r {
            return None;
        }
        let tr = ((r - g.r_min) / g.h_r).clamp(0.0, (g.n_r - 1) as f64);
        let i0 = (tr.floor() as usize).min(g.n_r - 2);
        let fr = (tr - i0 as f64).clamp(0.0, 1.0);

        let (j0, j1, fz) = if g.z_periodic {
            let period = g.z_max - g.z_min;
            let zeta = (z - g.z_min).rem_euclid(period);
            let tz = zeta / g.h_z;
            let j0 = (tz.floor() as usize).min(g.n_z - 1);
            let fz = (tz - j0 as f64).clamp(0.0, 1.0);
            (j0, (j0 + 1) % g.n_z, fz)
        } else {
            let slack_z = 1e-9 * g.h_z;
            if z < g.z_min - slack_z || z > g.z_max + slack_z {
                return None;
            }
            let tz = ((z - g.z_min) / g.h_z).clamp(0.0, (g.n_z - 1) as f64);
            let j0 = (tz.floor() as usize).min(g.n_z - 2);
            let fz = (tz - j0 as f64).clamp(0.0, 1.0);
            (j0, j0 + 1, fz)
        };

        let v00 = self.get(i0, j0);
        let v10 = self.get(i0 + 1, j0);
        let v01 = self.get(i0, j1);
        let v11 = self.get(i0 + 1, j1);
        Some(
            (1.0 - fr) * (1.0 - fz) * v00
                + fr * (1.0 - fz) * v10
                + (1.0 - fr) * fz * v01
                + fr * fz * v11,
        )
    }
}

/// Time-stamped bundle of prognostic fields (gamma = r*v_theta and the reduced
/// vorticity omega = omega_theta/r) plus the derived stream function and
/// velocity components.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    /// Swirl moment gamma = r * v_theta.
    pub gamma: ScalarField,
    /// Reduced vorticity omega = omega_theta / r.
    pub omega: ScalarField,
    /// Angular stream function.
    pub l_theta: ScalarField,
    pub v_r: ScalarField,
    pub v_theta: ScalarField,
    pub v_z: ScalarField,
    pub omega_theta: ScalarField,
    /// True when (v_r, v_z) came from the current l_theta and l_theta from the
    /// current omega_theta.
    pub derived_fresh: bool,
}

impl FlowState {
    /// State carrying prognostic fields only; derived fields zeroed and marked
    /// stale until a stepper derives them.
    pub fn from_prognostic(t: f64, gamma: ScalarField, omega: ScalarField) -> FlowState {
        let grid = gamma.grid;
        debug_assert_eq!(grid, omega.grid);
        FlowState {
            t,
            gamma,
            omega,
            l_theta: ScalarField::zeros(grid, "l_theta"),
            v_r: ScalarField::zeros(grid, "v_r"),
            v_theta: ScalarField::zeros(grid, "v_theta"),
            v_z: ScalarField::zeros(grid, "v_z"),
            omega_theta: ScalarField::zeros(grid, "omega_theta"),
            derived_fresh: false,
        }
    }

    pub fn grid(&self) -> Grid {
        self.gamma.grid
    }

    /// Pointwise kinetic energy density |v|^2 integrated over the whole grid
    /// under the volume measure.
    pub fn kinetic_energy(&self) -> f64 {
        let g = self.grid();
        let mut e = 0.0;
        for j in 0..g.n_z {
            for i in 0..g.n_r {
                let w = g.volume_weight(i, j);
                let vr = self.v_r.get(i, j);
                let vt = self.v_theta.get(i, j);
                let vz = self.v_z.get(i, j);
                e += w * (vr * vr + vt * vt + vz * vz);
            }
        }
        e
    }

    /// Largest |(v_r, v_z)| over the grid.
    pub fn max_meridional_speed(&self) -> f64 {
        let mut m = 0.0_f64;
        for (vr, vz) in self.v_r.values().iter().zip(self.v_z.values()) {
            m = m.max((vr * vr + vz * vz).sqrt());
        }
        m
    }

    pub fn check_finite(&self) -> Result<()> {
        self.gamma.check_finite(self.t)?;
        self.omega.check_finite(self.t)?;
        self.l_theta.check_finite(self.t)?;
        self.v_r.check_finite(self.t)?;
        self.v_theta.check_finite(self.t)?;
        self.v_z.check_finite(self.t)?;
        self.omega_theta.check_finite(self.t)
    }
}

// ---------------------------------------------------------------------------
// difference operators
// ---------------------------------------------------------------------------

/// d/dr, second order.
pub fn ddr(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let n = g.n_r;
    let h = g.h_r;
    let mut out = ScalarField::zeros(g, &format!("ddr({})", f.name));
    for j in 0..g.n_z {
        out.set(0, j, (-3.0 * f.get(0, j) + 4.0 * f.get(1, j) - f.get(2, j)) / (2.0 * h));
        for i in 1..n - 1 {
            out.set(i, j, (f.get(i + 1, j) - f.get(i - 1, j)) / (2.0 * h));
        }
        out.set(
            n - 1,
            j,
            (3.0 * f.get(n - 1, j) - 4.0 * f.get(n - 2, j) + f.get(n - 3, j)) / (2.0 * h),
        );
    }
    out
}

/// d/dz, second order; wraps around on periodic grids.
pub fn ddz(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let n = g.n_z;
    let h = g.h_z;
    let mut out = ScalarField::zeros(g, &format!("ddz({})", f.name));
    if g.z_periodic {
        for j in 0..n {
            let jp = (j + 1) % n;
            let jm = (j + n - 1) % n;
            for i in 0..g.n_r {
                out.set(i, j, (f.get(i, jp) - f.get(i, jm)) / (2.0 * h));
            }
        }
    } else {
        for i in 0..g.n_r {
            out.set(i, 0, (-3.0 * f.get(i, 0) + 4.0 * f.get(i, 1) - f.get(i, 2)) / (2.0 * h));
            out.set(
                i,
                n - 1,
                (3.0 * f.get(i, n - 1) - 4.0 * f.get(i, n - 2) + f.get(i, n - 3)) / (2.0 * h),
            );
        }
        for j in 1..n - 1 {
            for i in 0..g.n_r {
                out.set(i, j, (f.get(i, j + 1) - f.get(i, j - 1)) / (2.0 * h));
            }
        }
    }
    out
}

/// d2/dr2, second order (4-point one-sided stencil at the edges).
pub fn d2dr2(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let n = g.n_r;
    let h2 = g.h_r * g.h_r;
    let mut out = ScalarField::zeros(g, &format!("d2dr2({})", f.name));
    for j in 0..g.n_z {
        out.set(
            0,
            j,
            (2.0 * f.get(0, j) - 5.0 * f.get(1, j) + 4.0 * f.get(2, j) - f.get(3, j)) / h2,
        );
        for i in 1..n - 1 {
            out.set(i, j, (f.get(i + 1, j) - 2.0 * f.get(i, j) + f.get(i - 1, j)) / h2);
        }
        out.set(
            n - 1,
            j,
            (2.0 * f.get(n - 1, j) - 5.0 * f.get(n - 2, j) + 4.0 * f.get(n - 3, j)
                - f.get(n - 4, j))
                / h2,
        );
    }
    out
}

/// d2/dz2, second order; wraps around on periodic grids.
pub fn d2dz2(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let n = g.n_z;
    let h2 = g.h_z * g.h_z;
    let mut out = ScalarField::zeros(g, &format!("d2dz2({})", f.name));
    if g.z_periodic {
        for j in 0..n {
            let jp = (j + 1) % n;
            let jm = (j + n - 1) % n;
            for i in 0..g.n_r {
                out.set(i, j, (f.get(i, jp) - 2.0 * f.get(i, j) + f.get(i, jm)) / h2);
            }
        }
    } else {
        for i in 0..g.n_r {
            out.set(
                i,
                0,
                (2.0 * f.get(i, 0) - 5.0 * f.get(i, 1) + 4.0 * f.get(i, 2) - f.get(i, 3)) / h2,
            );
            out.set(
                i,
                n - 1,
                (2.0 * f.get(i, n - 1) - 5.0 * f.get(i, n - 2) + 4.0 * f.get(i, n - 3)
                    - f.get(i, n - 4))
                    / h2,
            );
        }
        for j in 1..n - 1 {
            for i in 0..g.n_r {
                out.set(i, j, (f.get(i, j + 1) - 2.0 * f.get(i, j) + f.get(i, j - 1)) / h2);
            }
        }
    }
    out
}

/// Axisymmetric cylindrical Laplacian: d2/dr2 + (1/r) d/dr + d2/dz2.
pub fn cyl_laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let frr = d2dr2(f);
    let fr = ddr(f);
    let fzz = d2dz2(f);
    let mut out = ScalarField::zeros(g, &format!("lap({})", f.name));
    for j in 0..g.n_z {
        for i in 0..g.n_r {
            let r = g.r(i);
            out.set(i, j, frr.get(i, j) + fr.get(i, j) / r + fzz.get(i, j));
        }
    }
    out
}

/// Cylindrical divergence of the meridional field: (1/r) d(r v_r)/dr + d v_z/dz.
pub fn divergence_cyl(v_r: &ScalarField, v_z: &ScalarField) -> ScalarField {
    let g = v_r.grid;
    debug_assert_eq!(g, v_z.grid);
    let mut rvr = ScalarField::zeros(g, "r_v_r");
    for j in 0..g.n_z {
        for i in 0..g.n_r {
            rvr.set(i, j, g.r(i) * v_r.get(i, j));
        }
    }
    let drvr = ddr(&rvr);
    let dvz = ddz(v_z);
    let mut out = ScalarField::zeros(g, "div_b");
    for j in 0..g.n_z {
        for i in 0..g.n_r {
            out.set(i, j, drvr.get(i, j) / g.r(i) + dvz.get(i, j));
        }
    }
    out
}

/// Azimuthal vorticity of the meridional field: d v_r/dz - d v_z/dr.
pub fn curl_theta(v_r: &ScalarField, v_z: &ScalarField) -> ScalarField {
    debug_assert_eq!(v_r.grid, v_z.grid);
    let a = ddz(v_r);
    let b = ddr(v_z);
    a.zip_map(&b, "omega_theta", |x, y| x - y)
}

// ---------------------------------------------------------------------------
// norms
// ---------------------------------------------------------------------------

/// L^p norm of a field over a spatial region (p = f64::INFINITY for the sup).
/// Space-time (parabolic) norms live with the trajectory diagnostics.
pub fn norm(f: &ScalarField, region: &Region, p: f64) -> Result<f64> {
    let mask = region_mask(&f.grid, region)?;
    norm_masked(f, &mask.nodes, &mask.weights, p)
}

pub fn norm_masked(
    f: &ScalarField,
    nodes: &[(usize, usize)],
    weights: &[f64],
    p: f64,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Invalid(format!("norm exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        let mut m = 0.0_f64;
        for &(i, j) in nodes {
            m = m.max(f.get(i, j).abs());
        }
        return Ok(m);
    }
    let mut s = 0.0;
    if p == 2.0 {
        for (&(i, j), &w) in nodes.iter().zip(weights) {
            let v = f.get(i, j);
            s += w * v * v;
        }
        Ok(s.sqrt())
    } else if p == 1.0 {
        for (&(i, j), &w) in nodes.iter().zip(weights) {
            s += w * f.get(i, j).abs();
        }
        Ok(s)
    } else {
        for (&(i, j), &w) in nodes.iter().zip(weights) {
            s += w * f.get(i, j).abs().powf(p);
        }
        Ok(s.powf(1.0 / p))
    }
}
