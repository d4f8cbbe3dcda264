//! Axis-aligned boxes and the set geometries (box, ball, cylinder) used for
//! sampling regions and initial uncertainty sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box given by per-axis (lower, upper) bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub bounds: Vec<(f64, f64)>,
}

impl BoxDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidRegion("box has no axes".into()));
        }
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidRegion(format!(
                    "axis {i}: bounds ({lo}, {hi}) must be finite with lower < upper"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Length of axis `a`.
    pub fn extent(&self, a: usize) -> f64 {
        self.bounds[a].1 - self.bounds[a].0
    }
}

/// Geometric region carrying a uniform density. The cylinder is a disc over
/// two coordinates crossed with an interval on a third; the three axes must
/// be disjoint and together cover every state coordinate, so cylinders live
/// in 3-D state spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Region {
    Box {
        bounds: Vec<(f64, f64)>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Cylinder {
        disc_axes: (usize, usize),
        disc_center: (f64, f64),
        radius: f64,
        interval_axis: usize,
        interval: (f64, f64),
    },
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        match self {
            Region::Box { bounds } => {
                BoxDomain::new(bounds.clone())?;
            }
            Region::Ball { center, radius } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidRegion("ball center must be finite".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidRegion(format!(
                        "ball radius {radius} must be positive"
                    )));
                }
            }
            Region::Cylinder {
                disc_axes,
                radius,
                interval_axis,
                interval,
                ..
            } => {
                let (a, b) = *disc_axes;
                let axes = [a, b, *interval_axis];
                if a == b || a == *interval_axis || b == *interval_axis {
                    return Err(Error::InvalidRegion(format!(
                        "cylinder axes {axes:?} must be disjoint"
                    )));
                }
                if a.max(b).max(*interval_axis) != 2 {
                    return Err(Error::InvalidRegion(format!(
                        "cylinder axes {axes:?} must cover exactly the coordinates 0..3"
                    )));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidRegion(format!(
                        "cylinder radius {radius} must be positive"
                    )));
                }
                if !(interval.0.is_finite() && interval.1.is_finite() && interval.0 < interval.1) {
                    return Err(Error::InvalidRegion(format!(
                        "cylinder interval {interval:?} must satisfy lower < upper"
                    )));
                }
            }
        }
        if self.volume() <= 0.0 {
            return Err(Error::InvalidRegion("region has zero volume".into()));
        }
        Ok(())
    }

    /// State dimension the region lives in.
    pub fn dim(&self) -> usize {
        match self {
            Region::Box { bounds } => bounds.len(),
            Region::Ball { center, .. } => center.len(),
            Region::Cylinder {
                disc_axes,
                interval_axis,
                ..
            } => 1 + disc_axes.0.max(disc_axes.1).max(*interval_axis),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Region::Box { bounds } => bounds.iter().map(|(lo, hi)| hi - lo).product(),
            Region::Ball { center, radius } => ball_volume(center.len(), *radius),
            Region::Cylinder {
                radius, interval, ..
            } => std::f64::consts::PI * radius * radius * (interval.1 - interval.0),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box { bounds } => {
                x.len() == bounds.len()
                    && x.iter()
                        .zip(bounds)
                        .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
            }
            Region::Ball { center, radius } => {
                x.len() == center.len() && {
                    let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
                    r2 <= radius * radius
                }
            }
            Region::Cylinder {
                disc_axes,
                disc_center,
                radius,
                interval_axis,
                interval,
            } => {
                let du = x[disc_axes.0] - disc_center.0;
                let dv = x[disc_axes.1] - disc_center.1;
                du * du + dv * dv <= radius * radius
                    && x[*interval_axis] >= interval.0
                    && x[*interval_axis] <= interval.1
            }
        }
    }

    /// Smallest axis-aligned box containing the region.
    pub fn bounding_box(&self) -> BoxDomain {
        let bounds = match self {
            Region::Box { bounds } => bounds.clone(),
            Region::Ball { center, radius } => {
                center.iter().map(|c| (c - radius, c + radius)).collect()
            }
            Region::Cylinder {
                disc_axes,
                disc_center,
                radius,
                interval_axis,
                interval,
            } => {
                let d = self.dim();
                let mut bounds = vec![(0.0, 0.0); d];
                bounds[disc_axes.0] = (disc_center.0 - radius, disc_center.0 + radius);
                bounds[disc_axes.1] = (disc_center.1 - radius, disc_center.1 + radius);
                bounds[*interval_axis] = *interval;
                bounds
            }
        };
        BoxDomain { bounds }
    }

    /// One uniform sample from the region. Ball sampling uses a Gaussian
    /// direction with radius proportional to U^(1/d), which is volume-uniform.
    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Region::Box { bounds } => bounds
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect(),
            Region::Ball { center, radius } => {
                let d = center.len();
                let dir = gaussian_direction(d, rng);
                let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
                center.iter().zip(dir).map(|(c, u)| c + r * u).collect()
            }
            Region::Cylinder {
                disc_axes,
                disc_center,
                radius,
                interval_axis,
                interval,
            } => {
                let d = self.dim();
                let dir = gaussian_direction(2, rng);
                let r = radius * rng.gen::<f64>().sqrt();
                let mut x = vec![0.0; d];
                x[disc_axes.0] = disc_center.0 + r * dir[0];
                x[disc_axes.1] = disc_center.1 + r * dir[1];
                x[*interval_axis] = rng.gen_range(interval.0..interval.1);
                x
            }
        }
    }
}

fn gaussian_direction<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    use rand_distr::StandardNormal;
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Volume of the d-ball of radius r.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    // V_d = pi^(d/2) / Gamma(d/2 + 1) * r^d, by the even/odd recurrence
    let mut v = match d % 2 {
        0 => 1.0,
        _ => 2.0,
    };
    let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v * r.powi(d as i32)
}
