//! Uncertainty sets, moment vectors, and reachable-set reconstruction.
//!
//! Moments are taken against probability measures: the initial set carries
//! a uniform density 1/volume, so the moment of the constant function is 1,
//! a built-in health check that propagation should approximately preserve.
//! Moments advance by m_{t+1} = K^T m_t; density coefficients w = Lambda^-1 m
//! reconstruct g(x) = Psi(x)^T w, whose thresholded support estimates the
//! reachable set.

use nalgebra::DVector;
use serde::Serialize;

use crate::dictionary::{Dictionary, GramMatrix};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::operator::OperatorModel;
use crate::quadrature::{gauss_legendre_on, region_grid, QuadratureSpec};

/// A geometric region carrying the uniform density 1/volume.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySet {
    pub region: Region,
}

impl UncertaintySet {
    pub fn new(region: Region) -> Result<Self> {
        region.validate()?;
        Ok(Self { region })
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn volume(&self) -> f64 {
        self.region.volume()
    }
}

/// Moments of the current uncertainty density against the dictionary,
/// m[k] = integral of phi_k d(mu_t).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub t: f64,
    pub m: DVector<f64>,
}

/// Scalar field sampled on a tensor grid. `values` is flat with axis 0
/// fastest: index = i0 + n0*(i1 + n1*(i2 + ...)).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    /// Tensor trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        let weights: Vec<Vec<f64>> = self.axes.iter().map(|a| trapezoid_weights(a)).collect();
        let mut total = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            let mut rem = flat;
            let mut w = 1.0;
            for axis_w in &weights {
                let idx = rem % axis_w.len();
                rem /= axis_w.len();
                w *= axis_w[idx];
            }
            total += w * v;
        }
        total
    }
}

pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    assert!(n >= 2, "trapezoid rule needs at least 2 nodes");
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (nodes[i + 1] - nodes[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Thresholded support of a density field: the grid mask where the value
/// exceeds `threshold_ratio` times the field maximum, summarized as
/// per-axis intervals of masked node coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachableSet {
    pub intervals: Vec<(f64, f64)>,
    pub threshold_ratio: f64,
    pub masked_nodes: usize,
}

/// Quadrature moments of the uniform density on a set:
/// m[k] = (1/vol) * integral of phi_k over the set, stamped t = 0.
pub fn initial_moments(
    set: &UncertaintySet,
    dict: &Dictionary,
    spec: &QuadratureSpec,
) -> Result<MomentVector> {
    if set.dim() != dict.dim {
        return Err(Error::InvalidRegion(format!(
            "set has dim {}, dictionary expects {}",
            set.dim(),
            dict.dim
        )));
    }
    if let Some(axes) = dict.rbf_axes() {
        // warn when the set pokes outside the span the basis covers
        let bbox = set.region.bounding_box();
        for ax in axes {
            let (lo, hi) = bbox.bounds[ax.axis];
            let span_lo = ax.centers.first().unwrap() - ax.width;
            let span_hi = ax.centers.last().unwrap() + ax.width;
            if lo < span_lo || hi > span_hi {
                log::warn!(
                    "uncertainty set exceeds the dictionary span on axis {}",
                    ax.axis
                );
            }
        }
    }
    let nodes = region_grid(&set.region, spec)?;
    let integral = nodes.integrate_vec(dict.k(), |x, out| dict.eval_into(x, out));
    Ok(MomentVector {
        t: 0.0,
        m: integral / set.volume(),
    })
}

/// All moment vectors m_0, ..., m_steps with m_{i+1} = K^T m_i and time
/// stamps i * dt.
pub fn propagate_moments(
    model: &OperatorModel,
    m0: &MomentVector,
    steps: usize,
) -> Vec<MomentVector> {
    assert_eq!(m0.m.len(), model.k_dim(), "moment length mismatch");
    let dt = model.meta.dt;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(MomentVector {
        t: m0.t,
        m: m0.m.clone(),
    });
    for i in 0..steps {
        let next = model.k.tr_mul(&out[i].m);
        out.push(MomentVector {
            t: m0.t + (i + 1) as f64 * dt,
            m: next,
        });
    }
    out
}

/// Solve (Lambda + eps I) w = m for the density-coefficient vector.
pub fn moments_to_coefficients(gram: &GramMatrix, m: &MomentVector) -> Result<DVector<f64>> {
    if m.m.len() != gram.k() {
        return Err(Error::SingularGram(format!(
            "moment vector has length {}, gram matrix is {}x{}",
            m.m.len(),
            gram.k(),
            gram.k()
        )));
    }
    let w = gram.solve_vec(&m.m);
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularGram("non-finite coefficient solve".into()));
    }
    Ok(w)
}

/// Evaluate g(x) = Psi(x)^T w on a tensor grid. Raw values are kept as-is
/// (the least-squares surrogate can go negative); clipping/normalizing is
/// the marginal writers' job.
pub fn reconstruct_density(dict: &Dictionary, w: &DVector<f64>, axes: &[Vec<f64>]) -> DensityField {
    assert_eq!(axes.len(), dict.dim, "grid must cover every state axis");
    assert_eq!(w.len(), dict.k(), "coefficient length mismatch");
    let counts: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let total: usize = counts.iter().product();
    let mut values = vec![0.0; total];
    let mut psi = DVector::zeros(dict.k());
    let mut x = vec![0.0; dict.dim];
    for (flat, value) in values.iter_mut().enumerate() {
        let mut rem = flat;
        for (a, count) in counts.iter().enumerate() {
            x[a] = axes[a][rem % count];
            rem /= count;
        }
        dict.eval_into(&x, &mut psi);
        *value = psi.dot(w);
    }
    DensityField {
        axes: axes.to_vec(),
        values,
    }
}

/// Nodes above `rel_threshold` of the field maximum, reduced to per-axis
/// coordinate intervals.
pub fn estimate_support(field: &DensityField, rel_threshold: f64) -> Result<ReachableSet> {
    assert!(
        rel_threshold > 0.0 && rel_threshold < 1.0,
        "threshold ratio must be in (0, 1)"
    );
    let max = field.values.iter().cloned().fold(f64::MIN, f64::max);
    if max <= 0.0 || max.is_nan() {
        return Err(Error::EmptySupport);
    }
    let cut = rel_threshold * max;
    let counts: Vec<usize> = field.axes.iter().map(|a| a.len()).collect();
    let dim = counts.len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    let mut masked = 0usize;
    for (flat, v) in field.values.iter().enumerate() {
        if *v > cut {
            masked += 1;
            let mut rem = flat;
            for a in 0..dim {
                let idx = rem % counts[a];
                rem /= counts[a];
                let coord = field.axes[a][idx];
                lo[a] = lo[a].min(coord);
                hi[a] = hi[a].max(coord);
            }
        }
    }
    if masked == 0 {
        return Err(Error::EmptySupport);
    }
    Ok(ReachableSet {
        intervals: lo.into_iter().zip(hi).collect(),
        threshold_ratio: rel_threshold,
        masked_nodes: masked,
    })
}

/// One reconstructed 1-D marginal: raw values, the clipped and
/// unit-integral-normalized curve, and its thresholded support interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub axis: usize,
    pub t: f64,
    pub nodes: Vec<f64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub support: (f64, f64),
    pub threshold_ratio: f64,
}

/// Axis-separable reachability: propagate moments, convert to density
/// coefficients, and reconstruct the per-axis 1-D marginals at the
/// requested step indices. Requires an rbf1d dictionary, whose basis
/// functions each depend on exactly one coordinate, making the density an
/// axis-sum f(x) = sum_a f_a(x_a). Integrating the other coordinates out
/// over the domain box then gives, for axis a,
///   M_a(z) = f_a(z) * prod_{b != a} L_b
///          + sum_{b != a} I_b * prod_{c != a, b} L_c
/// with L_b the axis-b interval length and I_b the integral of f_b over
/// it, so each block curve picks up a constant offset from the others.
pub fn reach_marginals(
    model: &OperatorModel,
    m0: &MomentVector,
    step_indices: &[usize],
    grid_nodes: usize,
    rel_threshold: f64,
) -> Result<Vec<Marginal>> {
    let dict = &model.dictionary;
    let axes = dict.rbf_axes().ok_or_else(|| {
        Error::UnsupportedDictionary(format!(
            "per-axis marginals need an rbf1d dictionary, got {}",
            dict.family()
        ))
    })?;
    assert!(grid_nodes >= 2);
    let max_step = step_indices.iter().copied().max().unwrap_or(0);
    let moments = propagate_moments(model, m0, max_step);

    let mut offsets = vec![0usize];
    for ax in axes {
        offsets.push(offsets.last().unwrap() + ax.centers.len());
    }
    let intervals: Vec<(f64, f64)> = axes
        .iter()
        .map(|ax| {
            model
                .gram
                .meta
                .domain
                .get(ax.axis)
                .copied()
                .unwrap_or_else(|| (*ax.centers.first().unwrap(), *ax.centers.last().unwrap()))
        })
        .collect();
    let lengths: Vec<f64> = intervals.iter().map(|(lo, hi)| hi - lo).collect();

    let mut out = Vec::with_capacity(step_indices.len() * axes.len());
    for &step in step_indices {
        let mt = &moments[step];
        let w = moments_to_coefficients(&model.gram, mt)?;
        let block = |b: usize, z: f64| -> f64 {
            let ax = &axes[b];
            let denom = 2.0 * ax.width * ax.width;
            ax.centers
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let d = z - c;
                    w[offsets[b] + j] * (-d * d / denom).exp()
                })
                .sum()
        };
        let integrals: Vec<f64> = (0..axes.len())
            .map(|b| {
                let (lo, hi) = intervals[b];
                let (qn, qw) = gauss_legendre_on(32, lo, hi);
                qn.iter().zip(&qw).map(|(z, qw)| block(b, *z) * qw).sum()
            })
            .collect();
        for (a, ax) in axes.iter().enumerate() {
            let (lo, hi) = intervals[a];
            let nodes: Vec<f64> = (0..grid_nodes)
                .map(|i| lo + (hi - lo) * i as f64 / (grid_nodes - 1) as f64)
                .collect();
            let other_volume: f64 = lengths
                .iter()
                .enumerate()
                .filter(|(b, _)| *b != a)
                .map(|(_, l)| l)
                .product();
            let cross_offset: f64 = (0..axes.len())
                .filter(|b| *b != a)
                .map(|b| {
                    integrals[b]
                        * lengths
                            .iter()
                            .enumerate()
                            .filter(|(c, _)| *c != a && *c != b)
                            .map(|(_, l)| l)
                            .product::<f64>()
                })
                .sum();
            let raw: Vec<f64> = nodes
                .iter()
                .map(|z| block(a, *z) * other_volume + cross_offset)
                .collect();
            let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
            let weights = trapezoid_weights(&nodes);
            let mass: f64 = clipped.iter().zip(&weights).map(|(v, w)| v * w).sum();
            if mass <= 0.0 || mass.is_nan() {
                log::debug!("axis {} at t = {} clipped to zero mass", ax.axis, mt.t);
                return Err(Error::EmptySupport);
            }
            let normalized: Vec<f64> = clipped.iter().map(|v| v / mass).collect();
            let field = DensityField {
                axes: vec![nodes.clone()],
                values: normalized.clone(),
            };
            let support = estimate_support(&field, rel_threshold)?;
            out.push(Marginal {
                axis: ax.axis,
                t: mt.t,
                nodes,
                raw,
                normalized,
                support: support.intervals[0],
                threshold_ratio: rel_threshold,
            });
        }
    }
    Ok(out)
}
