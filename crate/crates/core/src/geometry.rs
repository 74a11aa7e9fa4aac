//! Cylindrical grids and measurement regions.
//!
//! The computational domain is an annulus in the (r, z) half-plane: the axis
//! r = 0 is always excluded, so 1/r factors stay finite. Regions are hollow
//! cylinders C_{AR,BR} = {AR <= r <= BR, |z - zc| <= BR}, balls, and parabolic
//! (space-time) regions C x (-S^2 R^2, 0]. Quadrature over a region is the
//! trapezoid rule on the node lattice with half-weighted end nodes.

use crate::error::{Error, Result};

/// Tolerance, in index units, for deciding whether a node sits on a region
/// boundary. Scale-free so that exact dyadic rescaling preserves membership.
const INDEX_EPS: f64 = 1e-9;

/// Uniform annular grid in (r, z). Immutable after construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub r_min: f64,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub n_r: usize,
    pub n_z: usize,
    pub z_periodic: bool,
    pub h_r: f64,
    pub h_z: f64,
}

impl Grid {
    /// Build a grid with node coordinates r_i = r_min + i*h_r, z_j analogous.
    ///
    /// For periodic z the spacing is (z_max - z_min)/n_z and the node z_max is
    /// not duplicated; otherwise (z_max - z_min)/(n_z - 1).
    pub fn new(
        r_min: f64,
        r_max: f64,
        z_min: f64,
        z_max: f64,
        n_r: usize,
        n_z: usize,
        z_periodic: bool,
    ) -> Result<Grid> {
        if !(r_min > 0.0) {
            return Err(Error::AxisExcluded(r_min));
        }
        if !(r_max > r_min) {
            return Err(Error::Grid(format!(
                "r_max ({r_max}) must exceed r_min ({r_min})"
            )));
        }
        if !(z_max > z_min) {
            return Err(Error::Grid(format!(
                "z_max ({z_max}) must exceed z_min ({z_min})"
            )));
        }
        if n_r < 8 {
            return Err(Error::Grid(format!("n_r must be >= 8, got {n_r}")));
        }
        if n_z < 8 {
            return Err(Error::Grid(format!("n_z must be >= 8, got {n_z}")));
        }
        let h_r = (r_max - r_min) / (n_r - 1) as f64;
        let h_z = if z_periodic {
            (z_max - z_min) / n_z as f64
        } else {
            (z_max - z_min) / (n_z - 1) as f64
        };
        if !(h_r.is_finite() && h_r > 0.0 && h_z.is_finite() && h_z > 0.0) {
            return Err(Error::Grid("non-positive or non-finite spacing".into()));
        }
        Ok(Grid {
            r_min,
            r_max,
            z_min,
            z_max,
            n_r,
            n_z,
            z_periodic,
            h_r,
            h_z,
        })
    }

    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.h_r
    }

    #[inline]
    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.h_z
    }

    /// Flat index, r-fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_r && j < self.n_z);
        j * self.n_r + i
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h_min(&self) -> f64 {
        self.h_r.min(self.h_z)
    }

    /// Largest node coordinate in z (z_max - h_z on periodic grids).
    pub fn z_node_max(&self) -> f64 {
        self.z(self.n_z - 1)
    }

    /// Trapezoid weight in r for full-grid quadrature.
    #[inline]
    pub fn weight_r(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_r - 1 {
            0.5 * self.h_r
        } else {
            self.h_r
        }
    }

    /// Trapezoid weight in z; on periodic grids every node carries h_z.
    #[inline]
    pub fn weight_z(&self, j: usize) -> f64 {
        if !self.z_periodic && (j == 0 || j == self.n_z - 1) {
            0.5 * self.h_z
        } else {
            self.h_z
        }
    }

    /// Full-grid quadrature weight under the 3D measure r dr dz dtheta.
    #[inline]
    pub fn volume_weight(&self, i: usize, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.r(i) * self.weight_r(i) * self.weight_z(j)
    }

    pub fn contains(&self, r: f64, z: f64) -> bool {
        let sr = INDEX_EPS * self.h_r;
        if r < self.r_min - sr || r > self.r_max + sr {
            return false;
        }
        if self.z_periodic {
            true
        } else {
            let sz = INDEX_EPS * self.h_z;
            z >= self.z_min - sz && z <= self.z_max + sz
        }
    }

    /// Grid with all coordinates divided by k, spacing included, same node
    /// counts. Spacings are set directly rather than re-derived so that for
    /// power-of-two k every node maps exactly to r(i)/k.
    pub(crate) fn scaled_down(&self, k: f64) -> Grid {
        Grid {
            r_min: self.r_min / k,
            r_max: self.r_max / k,
            z_min: self.z_min / k,
            z_max: self.z_max / k,
            n_r: self.n_r,
            n_z: self.n_z,
            z_periodic: self.z_periodic,
            h_r: self.h_r / k,
            h_z: self.h_z / k,
        }
    }
}

/// Measure used for region quadrature: d(r,z) area or the full cylindrical
/// volume element r dr dz dtheta.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Area,
    Volume,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionKind {
    /// C_{AR,BR}: AR <= r <= BR, |z - z_center| <= BR.
    AnnularCylinder {
        a: f64,
        b: f64,
        r_scale: f64,
        z_center: f64,
    },
    /// P_{AR,BR,SR}: the cylinder above crossed with the time window
    /// (-S^2 R^2, 0] relative to the evaluation time.
    Parabolic {
        a: f64,
        b: f64,
        s: f64,
        r_scale: f64,
        z_center: f64,
    },
    /// 3D ball; the mask covers its meridian disk in (r, z).
    Ball {
        center_r: f64,
        center_z: f64,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub kind: RegionKind,
    pub measure: Measure,
}

impl Region {
    pub fn annular(a: f64, b: f64, r_scale: f64, measure: Measure) -> Result<Region> {
        if !(a > 0.0 && b > a) {
            return Err(Error::Invalid(format!(
                "annular cylinder needs 0 < A < B, got A={a}, B={b}"
            )));
        }
        if !(r_scale > 0.0) {
            return Err(Error::Invalid(format!("region scale must be > 0, got {r_scale}")));
        }
        Ok(Region {
            kind: RegionKind::AnnularCylinder {
                a,
                b,
                r_scale,
                z_center: 0.0,
            },
            measure,
        })
    }

    pub fn parabolic(a: f64, b: f64, s: f64, r_scale: f64, measure: Measure) -> Result<Region> {
        if !(a > 0.0 && b > a && s > 0.0 && r_scale > 0.0) {
            return Err(Error::Invalid(format!(
                "parabolic region needs 0 < A < B, S > 0, R > 0; got A={a}, B={b}, S={s}, R={r_scale}"
            )));
        }
        Ok(Region {
            kind: RegionKind::Parabolic {
                a,
                b,
                s,
                r_scale,
                z_center: 0.0,
            },
            measure,
        })
    }

    pub fn ball(center_r: f64, center_z: f64, radius: f64, measure: Measure) -> Result<Region> {
        if !(radius > 0.0) {
            return Err(Error::Invalid(format!("ball radius must be > 0, got {radius}")));
        }
        if !(center_r > 0.0) {
            return Err(Error::Invalid(format!(
                "ball center must be off-axis, got r = {center_r}"
            )));
        }
        Ok(Region {
            kind: RegionKind::Ball {
                center_r,
                center_z,
                radius,
            },
            measure,
        })
    }

    /// Recenter the region in z (cylinders and parabolic regions).
    pub fn with_z_center(mut self, z_center: f64) -> Region {
        match &mut self.kind {
            RegionKind::AnnularCylinder { z_center: zc, .. }
            | RegionKind::Parabolic { z_center: zc, .. } => *zc = z_center,
            RegionKind::Ball { .. } => {}
        }
        self
    }

    /// Radial footprint [lo, hi].
    pub fn r_interval(&self) -> (f64, f64) {
        match &self.kind {
            RegionKind::AnnularCylinder { a, b, r_scale, .. }
            | RegionKind::Parabolic { a, b, r_scale, .. } => (a * r_scale, b * r_scale),
            RegionKind::Ball {
                center_r, radius, ..
            } => (center_r - radius, center_r + radius),
        }
    }

    /// Axial footprint [lo, hi].
    pub fn z_interval(&self) -> (f64, f64) {
        match &self.kind {
            RegionKind::AnnularCylinder {
                b,
                r_scale,
                z_center,
                ..
            }
            | RegionKind::Parabolic {
                b,
                r_scale,
                z_center,
                ..
            } => (z_center - b * r_scale, z_center + b * r_scale),
            RegionKind::Ball {
                center_z, radius, ..
            } => (center_z - radius, center_z + radius),
        }
    }

    /// Length of the time window for parabolic regions: S^2 R^2.
    pub fn lookback(&self) -> Option<f64> {
        match &self.kind {
            RegionKind::Parabolic { s, r_scale, .. } => {
                let sr = s * r_scale;
                Some(sr * sr)
            }
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            RegionKind::AnnularCylinder { a, b, r_scale, .. } => {
                format!("C[{};{}]x{}", a, b, r_scale)
            }
            RegionKind::Parabolic { a, b, s, r_scale, .. } => {
                format!("P[{};{};{}]x{}", a, b, s, r_scale)
            }
            RegionKind::Ball {
                center_r,
                center_z,
                radius,
            } => format!("B(r={};z={};rho={})", center_r, center_z, radius),
        }
    }
}

/// Multiply every length of a region by k; parabolic time windows pick up k^2
/// through S*R. Exact round trips are guaranteed for power-of-two k.
pub fn scale_region(region: &Region, k: f64) -> Result<Region> {
    if !(k > 0.0) {
        return Err(Error::Invalid(format!("scale factor must be > 0, got {k}")));
    }
    let kind = match &region.kind {
        RegionKind::AnnularCylinder {
            a,
            b,
            r_scale,
            z_center,
        } => RegionKind::AnnularCylinder {
            a: *a,
            b: *b,
            r_scale: r_scale * k,
            z_center: z_center * k,
        },
        RegionKind::Parabolic {
            a,
            b,
            s,
            r_scale,
            z_center,
        } => RegionKind::Parabolic {
            a: *a,
            b: *b,
            s: *s,
            r_scale: r_scale * k,
            z_center: z_center * k,
        },
        RegionKind::Ball {
            center_r,
            center_z,
            radius,
        } => RegionKind::Ball {
            center_r: center_r * k,
            center_z: center_z * k,
            radius: radius * k,
        },
    };
    Ok(Region {
        kind,
        measure: region.measure,
    })
}

/// Node index set of a region together with quadrature weights.
#[derive(Debug, Clone)]
pub struct RegionMask {
    pub nodes: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    /// True when the region's footprint extends past the grid.
    pub clipped: bool,
}

impl RegionMask {
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Indices i with lo <= coord(i) <= hi, where coord(i) = origin + i*h.
/// Returns None when the intersection is empty.
fn index_range(origin: f64, h: f64, n: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
    let t_lo = (lo - origin) / h;
    let t_hi = (hi - origin) / h;
    let i0 = (t_lo - INDEX_EPS).ceil().max(0.0);
    let i1 = (t_hi + INDEX_EPS).floor().min((n - 1) as f64);
    if i1 < i0 {
        return None;
    }
    Some((i0 as usize, i1 as usize))
}

/// Trapezoid weight along one axis for a node interval [i0, i1].
#[inline]
fn interval_weight(i: usize, i0: usize, i1: usize, h: f64) -> f64 {
    if i0 == i1 {
        h
    } else if i == i0 || i == i1 {
        0.5 * h
    } else {
        h
    }
}

/// Nodes inside a region plus their quadrature weights.
///
/// The weight of a node is h_r*h_z under the area measure and
/// 2*pi*r_i*h_r*h_z under the volume measure, with end nodes of each masked
/// interval half-weighted (trapezoid rule). For parabolic regions the mask
/// covers the spatial footprint; the time window is handled by trajectory
/// consumers.
pub fn region_mask(grid: &Grid, region: &Region) -> Result<RegionMask> {
    let (r_lo, r_hi) = region.r_interval();
    let (z_lo, z_hi) = region.z_interval();

    let sr = INDEX_EPS * grid.h_r;
    let sz = INDEX_EPS * grid.h_z;
    let mut clipped = r_lo < grid.r_min - sr || r_hi > grid.r_max + sr;
    if !grid.z_periodic {
        clipped |= z_lo < grid.z_min - sz || z_hi > grid.z_node_max() + sz;
    } else {
        clipped |= (z_hi - z_lo) > (grid.z_max - grid.z_min) + sz;
    }

    let z_range = index_range(grid.z_min, grid.h_z, grid.n_z, z_lo, z_hi).ok_or(Error::EmptyRegion)?;
    let full_z = grid.z_periodic && z_range == (0, grid.n_z - 1);

    let mut nodes = Vec::new();
    let mut weights = Vec::new();

    match &region.kind {
        RegionKind::AnnularCylinder { .. } | RegionKind::Parabolic { .. } => {
            let r_range =
                index_range(grid.r_min, grid.h_r, grid.n_r, r_lo, r_hi).ok_or(Error::EmptyRegion)?;
            for j in z_range.0..=z_range.1 {
                let wz = if full_z {
                    grid.h_z
                } else {
                    interval_weight(j, z_range.0, z_range.1, grid.h_z)
                };
                for i in r_range.0..=r_range.1 {
                    let wr = interval_weight(i, r_range.0, r_range.1, grid.h_r);
                    nodes.push((i, j));
                    weights.push(measure_factor(grid, i, region.measure) * wr * wz);
                }
            }
        }
        RegionKind::Ball {
            center_r,
            center_z,
            radius,
        } => {
            for j in z_range.0..=z_range.1 {
                let dz = grid.z(j) - center_z;
                let half2 = radius * radius - dz * dz;
                if half2 < 0.0 {
                    continue;
                }
                let half = half2.sqrt();
                let row = index_range(
                    grid.r_min,
                    grid.h_r,
                    grid.n_r,
                    center_r - half,
                    center_r + half,
                );
                let Some((i0, i1)) = row else { continue };
                let wz = interval_weight(j, z_range.0, z_range.1, grid.h_z);
                for i in i0..=i1 {
                    let wr = interval_weight(i, i0, i1, grid.h_r);
                    nodes.push((i, j));
                    weights.push(measure_factor(grid, i, region.measure) * wr * wz);
                }
            }
            if nodes.is_empty() {
                return Err(Error::EmptyRegion);
            }
        }
    }

    if nodes.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(RegionMask {
        nodes,
        weights,
        clipped,
    })
}

#[inline]
fn measure_factor(grid: &Grid, i: usize, measure: Measure) -> f64 {
    match measure {
        Measure::Area => 1.0,
        Measure::Volume => 2.0 * std::f64::consts::PI * grid.r(i),
    }
}
