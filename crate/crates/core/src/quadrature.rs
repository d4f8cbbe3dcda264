//! Numerical integration over boxes and set geometries.
//!
//! Boxes use tensor Gauss-Legendre grids. Discs and cylinders use polar
//! rules (Gauss-Legendre in radius with the r Jacobian, Gauss-Legendre in
//! angle), so the integrands stay smooth and no indicator functions appear.
//! Higher-dimensional balls and boxes above 3-D fall back to seeded
//! Monte-Carlo nodes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Region};
use crate::numeric::{pairwise_reduce, substream};

/// Stream tag for Monte-Carlo quadrature nodes (see `numeric::substream`).
const QUAD_STREAM: u64 = 0x71;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes per axis for tensor grids (dim <= 3).
    pub nodes_per_axis: usize,
    /// Monte-Carlo node count for dim > 3.
    pub mc_nodes: usize,
    /// Seed for Monte-Carlo nodes.
    pub mc_seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_axis: 32,
            mc_nodes: 200_000,
            mc_seed: 0x9d2c_5681,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_axis == 0 || self.mc_nodes == 0 {
            return Err(Error::InvalidQuadrature(
                "node budget must be positive".into(),
            ));
        }
        if self.nodes_per_axis < 10 {
            log::warn!(
                "quadrature budget of {} nodes/axis is below the recommended 10",
                self.nodes_per_axis
            );
        }
        Ok(())
    }
}

/// How a quadrature was carried out, recorded in Gram-matrix metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMeta {
    pub method: String,
    pub nodes: usize,
    pub domain: Vec<(f64, f64)>,
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // Newton starts at decreasing cos arguments; flip to ascending order.
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    if n == 1 {
        return (x, 1.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes/weights of the n-point Gauss-Legendre rule mapped to [lo, hi].
pub fn gauss_legendre_on(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_legendre(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    (
        t.iter().map(|ti| mid + half * ti).collect(),
        w.iter().map(|wi| wi * half).collect(),
    )
}

/// A weighted node set in d dimensions, produced once and then consumed by
/// the deterministic reduction drivers below.
pub struct NodeSet {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub meta: QuadratureMeta,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Deterministic pairwise-reduced integral of a vector integrand.
    pub fn integrate_vec<F>(&self, k: usize, f: F) -> DVector<f64>
    where
        F: Fn(&[f64], &mut DVector<f64>) + Sync,
    {
        pairwise_reduce(
            0..self.len(),
            &|range: std::ops::Range<usize>| {
                let mut acc = DVector::zeros(k);
                let mut buf = DVector::zeros(k);
                for i in range {
                    f(&self.points[i], &mut buf);
                    acc.axpy(self.weights[i], &buf, 1.0);
                }
                acc
            },
            &|a, b| a + b,
        )
    }

    /// Deterministic pairwise-reduced integral of the outer product
    /// f(x) f(x)^T of a vector integrand (the Gram accumulation).
    pub fn integrate_outer<F>(&self, k: usize, f: F) -> DMatrix<f64>
    where
        F: Fn(&[f64], &mut DVector<f64>) + Sync,
    {
        pairwise_reduce(
            0..self.len(),
            &|range: std::ops::Range<usize>| {
                let mut acc = DMatrix::zeros(k, k);
                let mut buf = DVector::zeros(k);
                for i in range {
                    f(&self.points[i], &mut buf);
                    acc.ger(self.weights[i], &buf, &buf, 1.0);
                }
                acc
            },
            &|a, b| a + b,
        )
    }
}

/// Tensor Gauss-Legendre grid over a box.
pub fn box_grid(domain: &BoxDomain, nodes_per_axis: usize) -> NodeSet {
    let dim = domain.dim();
    let per_axis: Vec<(Vec<f64>, Vec<f64>)> = domain
        .bounds
        .iter()
        .map(|(lo, hi)| gauss_legendre_on(nodes_per_axis, *lo, *hi))
        .collect();
    let total = nodes_per_axis.pow(dim as u32);
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut x = vec![0.0; dim];
        let mut w = 1.0;
        for a in 0..dim {
            let idx = rem % nodes_per_axis;
            rem /= nodes_per_axis;
            x[a] = per_axis[a].0[idx];
            w *= per_axis[a].1[idx];
        }
        points.push(x);
        weights.push(w);
    }
    NodeSet {
        points,
        weights,
        meta: QuadratureMeta {
            method: "gauss_legendre".into(),
            nodes: total,
            domain: domain.bounds.clone(),
        },
    }
}

/// Seeded uniform Monte-Carlo nodes over a box; weights sum to the volume.
pub fn box_grid_mc(domain: &BoxDomain, n: usize, seed: u64) -> NodeSet {
    let w = domain.volume() / n as f64;
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            use rand::Rng;
            let mut rng = substream(seed, QUAD_STREAM, i as u64);
            domain
                .bounds
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect()
        })
        .collect();
    NodeSet {
        points,
        weights: vec![w; n],
        meta: QuadratureMeta {
            method: "monte_carlo".into(),
            nodes: n,
            domain: domain.bounds.clone(),
        },
    }
}

/// Quadrature nodes covering a region exactly (polar rules for disc and
/// cylinder). Balls above 2-D use seeded Monte-Carlo with uniform in-set
/// nodes. Weights always sum to the region volume.
pub fn region_grid(region: &Region, spec: &QuadratureSpec) -> Result<NodeSet> {
    spec.validate()?;
    region.validate()?;
    let n = spec.nodes_per_axis;
    match region {
        Region::Box { bounds } => {
            let b = BoxDomain::new(bounds.clone())?;
            if b.dim() <= 3 {
                Ok(box_grid(&b, n))
            } else {
                Ok(box_grid_mc(&b, spec.mc_nodes, spec.mc_seed))
            }
        }
        Region::Ball { center, radius } if center.len() == 2 => {
            Ok(disc_grid(center[0], center[1], *radius, n, &[0, 1], 2))
        }
        Region::Ball { .. } => Ok(region_grid_mc(region, spec.mc_nodes, spec.mc_seed)),
        Region::Cylinder {
            disc_axes,
            disc_center,
            radius,
            interval_axis,
            interval,
        } => {
            let disc = disc_grid(
                disc_center.0,
                disc_center.1,
                *radius,
                n,
                &[disc_axes.0, disc_axes.1],
                3,
            );
            let (z, wz) = gauss_legendre_on(n, interval.0, interval.1);
            let mut points = Vec::with_capacity(disc.len() * n);
            let mut weights = Vec::with_capacity(disc.len() * n);
            for (p, wp) in disc.points.iter().zip(&disc.weights) {
                for (zi, wzi) in z.iter().zip(&wz) {
                    let mut x = p.clone();
                    x[*interval_axis] = *zi;
                    points.push(x);
                    weights.push(wp * wzi);
                }
            }
            let nodes = points.len();
            Ok(NodeSet {
                points,
                weights,
                meta: QuadratureMeta {
                    method: "gauss_legendre_polar".into(),
                    nodes,
                    domain: region.bounding_box().bounds,
                },
            })
        }
    }
}

/// Polar Gauss-Legendre rule over a disc, embedded into `dim` coordinates at
/// the two given axes.
fn disc_grid(cx: f64, cy: f64, radius: f64, n: usize, axes: &[usize; 2], dim: usize) -> NodeSet {
    let (r, wr) = gauss_legendre_on(n, 0.0, radius);
    let (phi, wphi) = gauss_legendre_on(n, 0.0, 2.0 * std::f64::consts::PI);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (ri, wri) in r.iter().zip(&wr) {
        for (pj, wpj) in phi.iter().zip(&wphi) {
            let mut x = vec![0.0; dim];
            x[axes[0]] = cx + ri * pj.cos();
            x[axes[1]] = cy + ri * pj.sin();
            points.push(x);
            weights.push(wri * wpj * ri); // polar Jacobian
        }
    }
    NodeSet {
        points,
        weights,
        meta: QuadratureMeta {
            method: "gauss_legendre_polar".into(),
            nodes: n * n,
            domain: vec![(cx - radius, cx + radius), (cy - radius, cy + radius)],
        },
    }
}

/// Uniform in-region Monte-Carlo nodes; weights sum to the region volume.
pub fn region_grid_mc(region: &Region, n: usize, seed: u64) -> NodeSet {
    let w = region.volume() / n as f64;
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut rng = substream(seed, QUAD_STREAM, i as u64);
            region.sample_point(&mut rng)
        })
        .collect();
    NodeSet {
        points,
        weights: vec![w; n],
        meta: QuadratureMeta {
            method: "monte_carlo".into(),
            nodes: n,
            domain: region.bounding_box().bounds,
        },
    }
}
