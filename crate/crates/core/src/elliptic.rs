//! Stream-function recovery and the localized Biot-Savart estimate.
//!
//! The angular stream function solves
//!     (d2/dr2 + (1/r) d/dr - 1/r^2 + d2/dz2) L = -omega_theta
//! with Dirichlet data on the r boundaries (and z boundaries when not
//! periodic). The discrete operator is pre-factored once per grid: a banded
//! LU for Dirichlet z, or an FFT in z plus tridiagonal solves in r for
//! periodic z. Both are direct; the contract is on the residual.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::Fft;

use crate::error::{Error, Result};
use crate::field::{ddr, ddz, ScalarField};
use crate::field::FlowState;
use crate::geometry::Grid;

/// Outcome of one elliptic solve. `residual_norm <= tolerance` on success.
#[derive(Debug, Clone, Copy)]
pub struct EllipticSolveReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub tolerance: f64,
}

/// Dirichlet data for the stream solve.
pub enum StreamBc<'a> {
    Zero,
    /// Boundary values read off another field's boundary nodes.
    Field(&'a ScalarField),
    /// Boundary values from a closure of (r, z).
    Func(Box<dyn Fn(f64, f64) -> f64 + 'a>),
}

impl StreamBc<'_> {
    #[inline]
    fn value(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        match self {
            StreamBc::Zero => 0.0,
            StreamBc::Field(f) => f.get(i, j),
            StreamBc::Func(f) => f(grid.r(i), grid.z(j)),
        }
    }
}

enum Backend {
    Banded(BandedLu),
    PeriodicZ(FftTridiag),
}

/// Pre-factored solver for the stream operator on one grid.
///
/// Solves take `&self`; concurrent solves on the same factorization are fine.
pub struct StreamSolver {
    grid: Grid,
    backend: Backend,
}

impl StreamSolver {
    pub fn new(grid: &Grid) -> Result<StreamSolver> {
        let backend = if grid.z_periodic {
            Backend::PeriodicZ(FftTridiag::new(grid))
        } else {
            Backend::Banded(BandedLu::factor_stream_operator(grid)?)
        };
        Ok(StreamSolver {
            grid: *grid,
            backend,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solve for the stream function given omega_theta and Dirichlet data.
    pub fn solve(
        &self,
        omega_theta: &ScalarField,
        bc: &StreamBc,
    ) -> Result<(ScalarField, EllipticSolveReport)> {
        let g = &self.grid;
        if omega_theta.grid != *g {
            return Err(Error::Invalid("omega_theta grid mismatch".into()));
        }
        let solution = match &self.backend {
            Backend::Banded(lu) => {
                let mut rhs = vec![0.0; g.len()];
                for j in 0..g.n_z {
                    for i in 0..g.n_r {
                        let k = g.idx(i, j);
                        rhs[k] = if is_dirichlet(g, i, j) {
                            bc.value(g, i, j)
                        } else {
                            -omega_theta.get(i, j)
                        };
                    }
                }
                lu.solve(&mut rhs);
                ScalarField::from_values(*g, "l_theta", rhs)?
            }
            Backend::PeriodicZ(fft) => fft.solve(g, omega_theta, bc)?,
        };

        let (residual, scale) = self.residual(&solution, omega_theta, bc);
        let tolerance = 1e-10 * scale + 1e-14;
        if residual > tolerance {
            return Err(Error::EllipticFailure {
                residual,
                tolerance,
                iterations: 1,
            });
        }
        Ok((
            solution,
            EllipticSolveReport {
                iterations: 1,
                residual_norm: residual,
                tolerance,
            },
        ))
    }

    /// Discrete-L2 residual of the five-point system, plus a norm scale for
    /// the relative tolerance.
    fn residual(&self, l: &ScalarField, omega_theta: &ScalarField, bc: &StreamBc) -> (f64, f64) {
        let g = &self.grid;
        let cell = g.h_r * g.h_z;
        let hr2 = g.h_r * g.h_r;
        let hz2 = g.h_z * g.h_z;
        let mut res2 = 0.0;
        let mut rhs2 = 0.0;
        let mut sol2 = 0.0;
        for j in 0..g.n_z {
            for i in 0..g.n_r {
                let (row, b) = if is_dirichlet(g, i, j) {
                    (l.get(i, j), bc.value(g, i, j))
                } else {
                    let r = g.r(i);
                    let jp = if g.z_periodic { (j + 1) % g.n_z } else { j + 1 };
                    let jm = if g.z_periodic {
                        (j + g.n_z - 1) % g.n_z
                    } else {
                        j - 1
                    };
                    let lr = (l.get(i + 1, j) - 2.0 * l.get(i, j) + l.get(i - 1, j)) / hr2
                        + (l.get(i + 1, j) - l.get(i - 1, j)) / (2.0 * r * g.h_r)
                        - l.get(i, j) / (r * r)
                        + (l.get(i, jp) - 2.0 * l.get(i, j) + l.get(i, jm)) / hz2;
                    (lr, -omega_theta.get(i, j))
                };
                let d = row - b;
                res2 += cell * d * d;
                rhs2 += cell * b * b;
                sol2 += cell * l.get(i, j) * l.get(i, j);
            }
        }
        let r_min = g.r_min;
        let op_norm = 2.0 / hr2 + 2.0 / hz2 + 1.0 / (r_min * r_min) + 1.0 / (r_min * g.h_r);
        (res2.sqrt(), rhs2.sqrt() + op_norm * sol2.sqrt())
    }
}

#[inline]
fn is_dirichlet(g: &Grid, i: usize, j: usize) -> bool {
    i == 0 || i == g.n_r - 1 || (!g.z_periodic && (j == 0 || j == g.n_z - 1))
}

/// Meridional velocity from the stream function:
/// v_r = -dL/dz, v_z = (1/r) d(rL)/dr.
pub fn velocity_from_stream(l_theta: &ScalarField) -> (ScalarField, ScalarField) {
    let g = l_theta.grid;
    let v_r = ddz(l_theta).scaled(-1.0).renamed("v_r");
    let mut rl = ScalarField::zeros(g, "r_l_theta");
    for j in 0..g.n_z {
        for i in 0..g.n_r {
            rl.set(i, j, g.r(i) * l_theta.get(i, j));
        }
    }
    let drl = ddr(&rl);
    let mut v_z = ScalarField::zeros(g, "v_z");
    for j in 0..g.n_z {
        for i in 0..g.n_r {
            v_z.set(i, j, drl.get(i, j) / g.r(i));
        }
    }
    (v_r, v_z)
}

/// Max interior discrepancy of |grad(r L)|^2 - r^2 (v_r^2 + v_z^2).
///
/// For velocity derived discretely from the same L this vanishes to
/// round-off; for analytically sampled velocity it measures the stencil
/// truncation, O(h^2).
pub fn stream_gradient_identity(
    l_theta: &ScalarField,
    v_r: &ScalarField,
    v_z: &ScalarField,
) -> f64 {
    let g = l_theta.grid;
    let mut rl = ScalarField::zeros(g, "r_l_theta");
    for j in 0..g.n_z {
        for i in 0..g.n_r {
            rl.set(i, j, g.r(i) * l_theta.get(i, j));
        }
    }
    let dr = ddr(&rl);
    let dz = ddz(&rl);
    let mut sup = 0.0_f64;
    let j_range = if g.z_periodic {
        0..g.n_z
    } else {
        1..g.n_z - 1
    };
    for j in j_range {
        for i in 1..g.n_r - 1 {
            let r = g.r(i);
            let lhs = dr.get(i, j) * dr.get(i, j) + dz.get(i, j) * dz.get(i, j);
            let rhs =
                r * r * (v_r.get(i, j) * v_r.get(i, j) + v_z.get(i, j) * v_z.get(i, j));
            sup = sup.max((lhs - rhs).abs());
        }
    }
    sup
}

// ---------------------------------------------------------------------------
// banded LU backend
// ---------------------------------------------------------------------------

/// Row-major band storage, no pivoting. The stream operator is strictly
/// diagonally dominant on annular grids, so elimination is stable.
struct BandedLu {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedLu {
    fn factor_stream_operator(g: &Grid) -> Result<BandedLu> {
        let n = g.len();
        let bw = g.n_r;
        let width = 2 * bw + 1;
        let mut data = vec![0.0; n * width];
        let hr2 = g.h_r * g.h_r;
        let hz2 = g.h_z * g.h_z;

        for j in 0..g.n_z {
            for i in 0..g.n_r {
                let row = g.idx(i, j);
                let base = row * width;
                if is_dirichlet(g, i, j) {
                    data[base + bw] = 1.0;
                } else {
                    let r = g.r(i);
                    data[base + bw - g.n_r] = 1.0 / hz2;
                    data[base + bw - 1] = 1.0 / hr2 - 1.0 / (2.0 * r * g.h_r);
                    data[base + bw] = -2.0 / hr2 - 2.0 / hz2 - 1.0 / (r * r);
                    data[base + bw + 1] = 1.0 / hr2 + 1.0 / (2.0 * r * g.h_r);
                    data[base + bw + g.n_r] = 1.0 / hz2;
                }
            }
        }

        let mut lu = BandedLu { n, bw, data };
        lu.factor()?;
        Ok(lu)
    }

    fn factor(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        let width = 2 * bw + 1;
        for k in 0..n {
            let pivot = self.data[k * width + bw];
            if pivot.abs() < 1e-300 {
                return Err(Error::EllipticFailure {
                    residual: f64::INFINITY,
                    tolerance: 0.0,
                    iterations: 0,
                });
            }
            let i_max = (k + bw).min(n - 1);
            for i in k + 1..=i_max {
                // a[i][k] sits at offset k - i + bw of row i.
                let off = k + bw - i;
                let l = self.data[i * width + off] / pivot;
                if l != 0.0 {
                    let j_max = (k + bw).min(n - 1);
                    for j in k + 1..=j_max {
                        let a_kj = self.data[k * width + (j - k) + bw];
                        if a_kj != 0.0 {
                            self.data[i * width + (j + bw - i)] -= l * a_kj;
                        }
                    }
                }
                self.data[i * width + off] = l;
            }
        }
        Ok(())
    }

    fn solve(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let width = 2 * bw + 1;
        for i in 0..n {
            let k_lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in k_lo..i {
                s -= self.data[i * width + (k + bw - i)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let k_hi = (i + bw).min(n - 1);
            let mut s = x[i];
            for k in i + 1..=k_hi {
                s -= self.data[i * width + (k - i) + bw] * x[k];
            }
            x[i] = s / self.data[i * width + bw];
        }
    }
}

// ---------------------------------------------------------------------------
// FFT-in-z backend (periodic z)
// ---------------------------------------------------------------------------

struct FftTridiag {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Eigenvalue of -D_zz per z mode.
    lambda: Vec<f64>,
}

impl FftTridiag {
    fn new(g: &Grid) -> FftTridiag {
        let mut planner = rustfft::FftPlanner::new();
        let forward = planner.plan_fft_forward(g.n_z);
        let inverse = planner.plan_fft_inverse(g.n_z);
        let hz2 = g.h_z * g.h_z;
        let lambda = (0..g.n_z)
            .map(|m| {
                let c = (2.0 * PI * m as f64 / g.n_z as f64).cos();
                (2.0 - 2.0 * c) / hz2
            })
            .collect();
        FftTridiag {
            forward,
            inverse,
            lambda,
        }
    }

    fn solve(&self, g: &Grid, omega_theta: &ScalarField, bc: &StreamBc) -> Result<ScalarField> {
        let (n_r, n_z) = (g.n_r, g.n_z);
        // Modal storage: one z-line per radial index.
        let mut modal = vec![Complex::new(0.0, 0.0); n_r * n_z];
        let mut line = vec![Complex::new(0.0, 0.0); n_z];
        for i in 0..n_r {
            let dirichlet_r = i == 0 || i == n_r - 1;
            for (j, slot) in line.iter_mut().enumerate() {
                let v = if dirichlet_r {
                    bc.value(g, i, j)
                } else {
                    -omega_theta.get(i, j)
                };
                *slot = Complex::new(v, 0.0);
            }
            self.forward.process(&mut line);
            for j in 0..n_z {
                modal[i * n_z + j] = line[j];
            }
        }

        // Per-mode tridiagonal solve in r (Thomas; diagonally dominant).
        let hr2 = g.h_r * g.h_r;
        let mut diag = vec![0.0; n_r];
        let mut rhs = vec![Complex::new(0.0, 0.0); n_r];
        for m in 0..n_z {
            for i in 0..n_r {
                rhs[i] = modal[i * n_z + m];
                diag[i] = if i == 0 || i == n_r - 1 {
                    1.0
                } else {
                    let r = g.r(i);
                    -2.0 / hr2 - 1.0 / (r * r) - self.lambda[m]
                };
            }
            // Forward elimination. Sub/super coefficients vanish on the
            // identity rows, which decouples the boundary values.
            for i in 1..n_r {
                let sub = if i == n_r - 1 {
                    0.0
                } else {
                    let r = g.r(i);
                    1.0 / hr2 - 1.0 / (2.0 * r * g.h_r)
                };
                let sup_prev = if i - 1 == 0 {
                    0.0
                } else {
                    let r = g.r(i - 1);
                    1.0 / hr2 + 1.0 / (2.0 * r * g.h_r)
                };
                let w = sub / diag[i - 1];
                diag[i] -= w * sup_prev;
                rhs[i] = rhs[i] - rhs[i - 1] * w;
            }
            let mut x_prev = rhs[n_r - 1] / diag[n_r - 1];
            modal[(n_r - 1) * n_z + m] = x_prev;
            for i in (0..n_r - 1).rev() {
                let sup = if i == 0 {
                    0.0
                } else {
                    let r = g.r(i);
                    1.0 / hr2 + 1.0 / (2.0 * r * g.h_r)
                };
                let x = (rhs[i] - x_prev * sup) / diag[i];
                modal[i * n_z + m] = x;
                x_prev = x;
            }
        }

        // Inverse transforms, rustfft leaves them unscaled.
        let mut values = vec![0.0; g.len()];
        let scale = 1.0 / n_z as f64;
        for i in 0..n_r {
            line.copy_from_slice(&modal[i * n_z..(i + 1) * n_z]);
            self.inverse.process(&mut line);
            for j in 0..n_z {
                values[g.idx(i, j)] = line[j].re * scale;
            }
        }
        ScalarField::from_values(*g, "l_theta", values)
    }
}

// ---------------------------------------------------------------------------
// ball quadrature and the localized Biot-Savart report
// ---------------------------------------------------------------------------

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n and P_n' by recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for j in 2..=n {
            let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Product rule over a 3D ball in (rho, cos phi, theta) coordinates.
/// Axisymmetric integrands are sampled at the cylindrical radius of each
/// quadrature point, expressed in the local frame of the ball center so the
/// result is exactly invariant under rotations about the z axis.
pub struct BallRule {
    rho: Vec<(f64, f64)>,
    mu: Vec<(f64, f64)>,
    n_theta: usize,
}

impl BallRule {
    pub fn standard() -> BallRule {
        let (rn, rw) = gauss_legendre(16);
        let (mn, mw) = gauss_legendre(16);
        BallRule {
            rho: rn.into_iter().zip(rw).collect(),
            mu: mn.into_iter().zip(mw).collect(),
            n_theta: 32,
        }
    }

    /// Integral of `f` over the ball of given radius centered at cylindrical
    /// (r_c, z_c), clipped to where `f` returns Some. Returns the integral
    /// and whether any sample fell outside.
    pub fn integrate(
        &self,
        r_c: f64,
        z_c: f64,
        radius: f64,
        mut f: impl FnMut(f64, f64) -> Option<f64>,
    ) -> (f64, bool) {
        let w_theta = 2.0 * PI / self.n_theta as f64;
        let half = radius / 2.0;
        let mut total = 0.0;
        let mut clipped = false;
        for &(xi, w_xi) in &self.rho {
            let rho = half * (1.0 + xi);
            let w_rho = w_xi * half * rho * rho;
            for &(mu, w_mu) in &self.mu {
                let s = (1.0 - mu * mu).sqrt();
                let z_y = z_c + rho * mu;
                for it in 0..self.n_theta {
                    let th = 2.0 * PI * it as f64 / self.n_theta as f64;
                    let u1 = s * th.cos();
                    let u2 = s * th.sin();
                    let a = r_c + rho * u1;
                    let b = rho * u2;
                    let r_y = (a * a + b * b).sqrt();
                    match f(r_y, z_y) {
                        Some(v) => total += w_rho * w_mu * w_theta * v,
                        None => clipped = true,
                    }
                }
            }
        }
        (total, clipped)
    }

    /// Lattice supremum of |f| over the ball (same sample set, plus center).
    pub fn sup(
        &self,
        r_c: f64,
        z_c: f64,
        radius: f64,
        mut f: impl FnMut(f64, f64) -> Option<f64>,
    ) -> (f64, bool) {
        let half = radius / 2.0;
        let mut sup = 0.0_f64;
        let mut clipped = false;
        match f(r_c, z_c) {
            Some(v) => sup = sup.max(v.abs()),
            None => clipped = true,
        }
        for &(xi, _) in &self.rho {
            let rho = half * (1.0 + xi);
            for &(mu, _) in &self.mu {
                let s = (1.0 - mu * mu).sqrt();
                let z_y = z_c + rho * mu;
                for it in 0..self.n_theta {
                    let th = 2.0 * PI * it as f64 / self.n_theta as f64;
                    let a = r_c + rho * s * th.cos();
                    let b = rho * s * th.sin();
                    let r_y = (a * a + b * b).sqrt();
                    match f(r_y, z_y) {
                        Some(v) => sup = sup.max(v.abs()),
                        None => clipped = true,
                    }
                }
            }
        }
        (sup, clipped)
    }
}

/// Both sides of the localized Biot-Savart inequality
///     sup_{B_{r0}} |b| <= C r0^{-3/p} ||b||_{L^p(B_{2 r0})}
///                       + C r0 sup_{B_{2 r0}} |omega_theta|
/// with r0 = r^{3/2} |ln r|^{-1/2}, plus the torus-covering energy bookkeeping.
#[derive(Debug, Clone)]
pub struct BiotSavartReport {
    pub r: f64,
    pub r0: f64,
    pub p: f64,
    pub lhs_sup_b: f64,
    pub term_lp: f64,
    pub term_vort: f64,
    pub implied_constant: f64,
    /// ceil(r / (2 r0)) disjoint balls fit around the torus.
    pub n_balls: usize,
    /// ||b||^2_{L^2(B_{2 r0})}.
    pub ball_energy: f64,
    /// ball_energy / ||b||^2_{L^2(grid, volume)}.
    pub ring_energy_ratio: f64,
    /// The factor r^{1/2} |ln r|^{-1/2} the ratio is compared against.
    pub covering_factor: f64,
    pub clipped: bool,
}

/// The ball radius r0 = r^{3/2} |ln r|^{-1/2}.
pub fn biot_savart_r0(r: f64) -> f64 {
    r.powf(1.5) / r.ln().abs().sqrt()
}

/// Evaluate the Biot-Savart report at a 3D point with cylindrical radius in
/// (0, 1/2]. Clipped balls are flagged and the constants are lower bounds.
pub fn biot_savart_report(state: &FlowState, x: [f64; 3], p: f64) -> Result<BiotSavartReport> {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let z = x[2];
    if !(r > 0.0 && r <= 0.5) {
        return Err(Error::Invalid(format!(
            "biot-savart point must have cylindrical radius in (0, 1/2], got {r}"
        )));
    }
    if !(p >= 1.0) {
        return Err(Error::Invalid(format!("exponent p must be >= 1, got {p}")));
    }
    let r0 = biot_savart_r0(r);
    let n_balls = (r / (2.0 * r0)).ceil() as usize;

    let rule = BallRule::standard();
    let b_mag = |ry: f64, zy: f64| -> Option<f64> {
        let vr = state.v_r.interp(ry, zy)?;
        let vz = state.v_z.interp(ry, zy)?;
        Some((vr * vr + vz * vz).sqrt())
    };

    let (lhs_sup_b, c1) = rule.sup(r, z, r0, b_mag);
    let (bp_int, c2) = rule.integrate(r, z, 2.0 * r0, |ry, zy| {
        b_mag(ry, zy).map(|m| if p == 2.0 { m * m } else { m.powf(p) })
    });
    let term_lp = r0.powf(-3.0 / p) * bp_int.max(0.0).powf(1.0 / p);
    let (sup_w, c3) = rule.sup(r, z, 2.0 * r0, |ry, zy| state.omega_theta.interp(ry, zy));
    let term_vort = r0 * sup_w;

    let (ball_energy, c4) = if p == 2.0 {
        (bp_int, c2)
    } else {
        rule.integrate(r, z, 2.0 * r0, |ry, zy| b_mag(ry, zy).map(|m| m * m))
    };

    let g = state.grid();
    let mut total_energy = 0.0;
    for j in 0..g.n_z {
        for i in 0..g.n_r {
            let vr = state.v_r.get(i, j);
            let vz = state.v_z.get(i, j);
            total_energy += g.volume_weight(i, j) * (vr * vr + vz * vz);
        }
    }

    let denom = term_lp + term_vort;
    Ok(BiotSavartReport {
        r,
        r0,
        p,
        lhs_sup_b,
        term_lp,
        term_vort,
        implied_constant: if denom > 0.0 { lhs_sup_b / denom } else { 0.0 },
        n_balls,
        ball_energy,
        ring_energy_ratio: if total_energy > 0.0 {
            ball_energy / total_energy
        } else {
            0.0
        },
        covering_factor: r.sqrt() / r.ln().abs().sqrt(),
        clipped: c1 || c2 || c3 || c4,
    })
}
