//! Sampling-based reference pipeline: ensemble simulation, empirical
//! moments, kernel density estimates, and the timing/error comparison
//! against operator-based moment propagation.
//!
//! Everything except wall-clock timings is a deterministic function of
//! (config, seed): sampling uses one stream per sample index, reductions
//! are order-fixed, and KDE sums samples in a canonical sorted order.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::dynamics::{simulate_trajectory, DynamicalSystem};
use crate::error::{Error, Result};
use crate::numeric::{pairwise_reduce, quantile, sample_std};
use crate::operator::OperatorModel;
use crate::quadrature::QuadratureSpec;
use crate::uncertainty::{
    initial_moments, propagate_moments, DensityField, MomentVector, UncertaintySet,
};

/// Per-time-index sample states: snapshots[i][j] is sample j at time i*dt.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub dt: f64,
    pub snapshots: Vec<Vec<Vec<f64>>>,
}

impl Ensemble {
    pub fn n_samples(&self) -> usize {
        self.snapshots.first().map_or(0, Vec::len)
    }

    pub fn n_times(&self) -> usize {
        self.snapshots.len()
    }
}

/// Uniform in-set samples, deterministic per seed.
pub fn sample_uncertainty_set(set: &UncertaintySet, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    crate::dynamics::sample_domain(&set.region, n, seed)
}

/// Simulate every sample for the horizon and transpose to per-time
/// snapshots.
pub fn ensemble_simulate(
    system: &DynamicalSystem,
    points: &[Vec<f64>],
    dt: f64,
    horizon: f64,
    substeps: usize,
) -> Result<Ensemble> {
    if points.is_empty() {
        return Err(Error::EmptyData);
    }
    let results: Vec<crate::error::Result<_>> = points
        .par_iter()
        .map(|x0| simulate_trajectory(system, x0, dt, horizon, substeps))
        .collect();
    let mut trajectories = Vec::with_capacity(points.len());
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => trajectories.push(t),
            Err(e) => {
                log::error!("sample {j} diverged: {e}");
                return Err(e);
            }
        }
    }
    let n_times = trajectories[0].len();
    let snapshots = (0..n_times)
        .map(|i| trajectories.iter().map(|t| t.states[i].clone()).collect())
        .collect();
    Ok(Ensemble { dt, snapshots })
}

fn lift_sum(samples: &[Vec<f64>], dict: &Dictionary) -> Result<DVector<f64>> {
    for (j, s) in samples.iter().enumerate() {
        if s.len() != dict.dim || !s.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData {
                index: j,
                reason: "non-finite or mis-sized sample".into(),
            });
        }
    }
    let k = dict.k();
    Ok(pairwise_reduce(
        0..samples.len(),
        &|range: std::ops::Range<usize>| {
            let mut acc = DVector::zeros(k);
            let mut buf = DVector::zeros(k);
            for j in range {
                dict.eval_into(&samples[j], &mut buf);
                acc += &buf;
            }
            acc
        },
        &|a, b| a + b,
    ))
}

/// Sample-mean moments m[k] = (1/n) sum phi_k(sample_j), stamped t = 0.
pub fn empirical_moments(samples: &[Vec<f64>], dict: &Dictionary) -> Result<MomentVector> {
    if samples.is_empty() {
        return Err(Error::EmptyData);
    }
    let sum = lift_sum(samples, dict)?;
    Ok(MomentVector {
        t: 0.0,
        m: sum / samples.len() as f64,
    })
}

/// Sample-mean moments plus their per-component standard errors
/// sqrt(sample variance / n).
pub fn empirical_moments_se(
    samples: &[Vec<f64>],
    dict: &Dictionary,
) -> Result<(MomentVector, DVector<f64>)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::EmptyData);
    }
    let mean = empirical_moments(samples, dict)?;
    let k = dict.k();
    let sq_sum: DVector<f64> = pairwise_reduce(
        0..n,
        &|range: std::ops::Range<usize>| {
            let mut acc = DVector::zeros(k);
            let mut buf = DVector::zeros(k);
            for j in range {
                dict.eval_into(&samples[j], &mut buf);
                for i in 0..k {
                    acc[i] += buf[i] * buf[i];
                }
            }
            acc
        },
        &|a, b| a + b,
    );
    let se = DVector::from_fn(k, |i, _| {
        let var =
            ((sq_sum[i] / n as f64) - mean.m[i] * mean.m[i]).max(0.0) * n as f64 / (n as f64 - 1.0);
        (var / n as f64).sqrt()
    });
    Ok((mean, se))
}

/// Moments of every snapshot of an ensemble, stamped with their times.
pub fn ensemble_moments(ensemble: &Ensemble, dict: &Dictionary) -> Result<Vec<MomentVector>> {
    ensemble
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, snap)| {
            let mut m = empirical_moments(snap, dict)?;
            m.t = i as f64 * ensemble.dt;
            Ok(m)
        })
        .collect()
}

fn silverman_from(std: f64, iqr: f64, n: usize) -> f64 {
    0.9 * std.min(iqr / 1.34) * (n as f64).powf(-0.2)
}

/// Silverman's rule of thumb for one coordinate:
/// h = 0.9 * min(std, IQR/1.34) * n^(-1/5).
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::DegenerateBandwidth("need at least 2 samples".into()));
    }
    let std = sample_std(values);
    let iqr = quantile(values, 0.75) - quantile(values, 0.25);
    let h = silverman_from(std, iqr, values.len());
    if h <= 0.0 || h.is_nan() {
        return Err(Error::DegenerateBandwidth(format!(
            "zero-variance samples (std = {std}, iqr = {iqr})"
        )));
    }
    Ok(h)
}

/// Product-Gaussian kernel density estimate on a tensor grid. Samples are
/// summed in a canonical lexicographic order, so the result is bitwise
/// independent of the input ordering.
pub fn kde_estimate(
    samples: &[Vec<f64>],
    bandwidths: &[f64],
    axes: &[Vec<f64>],
) -> Result<DensityField> {
    if samples.is_empty() {
        return Err(Error::EmptyData);
    }
    let dim = axes.len();
    if bandwidths.len() != dim || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidState("kde dimensions do not line up".into()));
    }
    if bandwidths.iter().any(|h| *h <= 0.0 || h.is_nan()) {
        return Err(Error::DegenerateBandwidth(
            "bandwidths must be positive".into(),
        ));
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        samples[a]
            .partial_cmp(&samples[b])
            .expect("finite sample coordinates")
    });

    let norm: f64 = bandwidths
        .iter()
        .map(|h| 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt()))
        .product();
    let counts: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let total: usize = counts.iter().product();
    let n = samples.len() as f64;

    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut z = vec![0.0; dim];
            let mut rem = flat;
            for a in 0..dim {
                z[a] = axes[a][rem % counts[a]];
                rem /= counts[a];
            }
            let mut acc = 0.0;
            for &j in &order {
                let mut e = 0.0;
                for a in 0..dim {
                    let d = (z[a] - samples[j][a]) / bandwidths[a];
                    e += d * d;
                }
                acc += (-0.5 * e).exp();
            }
            acc * norm / n
        })
        .collect();

    Ok(DensityField {
        axes: axes.to_vec(),
        values,
    })
}

/// 1-D KDE of one coordinate of a snapshot, with Silverman bandwidth, on a
/// grid covering the samples padded by 4 bandwidths.
pub fn marginal_projection(
    samples: &[Vec<f64>],
    axis: usize,
    grid_nodes: usize,
) -> Result<DensityField> {
    if samples.is_empty() {
        return Err(Error::EmptyData);
    }
    if axis >= samples[0].len() {
        return Err(Error::InvalidState(format!(
            "axis {axis} out of range for dim {}",
            samples[0].len()
        )));
    }
    let coords: Vec<f64> = samples.iter().map(|s| s[axis]).collect();
    let h = silverman_bandwidth(&coords)?;
    let lo = coords.iter().cloned().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = coords.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let nodes: Vec<f64> = (0..grid_nodes)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_nodes - 1) as f64)
        .collect();
    let single: Vec<Vec<f64>> = coords.into_iter().map(|c| vec![c]).collect();
    kde_estimate(&single, &[h], &[nodes])
}

/// Error and timing comparison between the sampling pipeline and
/// operator-based moment propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub example: String,
    /// Global max over time and components of |operator - MC| moments.
    pub max_error: f64,
    pub per_step_error: Vec<f64>,
    /// Median wall time of the full MC phase (sample + simulate + moments).
    pub mc_ms: f64,
    /// Median wall time of the operator phase (initial moments + propagation).
    pub op_ms: f64,
    pub speedup: f64,
    pub mc_sample_ms: f64,
    pub mc_sim_ms: f64,
    pub mc_moments_ms: f64,
    pub op_init_ms: f64,
    pub op_prop_ms: f64,
    /// MC phase time over the matrix-propagation time alone.
    pub prop_speedup: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

const TIMING_REPS: usize = 5;

/// Run both pipelines on one uncertainty set, timing each phase as the
/// median of 5 serial runs on a monotonic clock, and compare the moment
/// histories componentwise. Error figures are deterministic; timings are
/// not.
#[allow(clippy::too_many_arguments)]
pub fn compare_pipelines(
    system: &DynamicalSystem,
    model: &OperatorModel,
    set: &UncertaintySet,
    steps: usize,
    mc_samples: usize,
    mc_seed: u64,
    quadrature: &QuadratureSpec,
    substeps: usize,
    example: &str,
) -> Result<(ComparisonReport, Vec<MomentVector>, Vec<MomentVector>)> {
    let dict = &model.dictionary;
    let dt = model.meta.dt;
    let horizon = steps as f64 * dt;

    let mut mc_phase = (Vec::new(), Vec::new(), Vec::new());
    let mut mc_moments = Vec::new();
    for _ in 0..TIMING_REPS {
        let t0 = Instant::now();
        let points = sample_uncertainty_set(set, mc_samples, mc_seed)?;
        let t1 = Instant::now();
        let ensemble = if steps > 0 {
            ensemble_simulate(system, &points, dt, horizon, substeps)?
        } else {
            Ensemble {
                dt,
                snapshots: vec![points.clone()],
            }
        };
        let t2 = Instant::now();
        mc_moments = ensemble_moments(&ensemble, dict)?;
        let t3 = Instant::now();
        mc_phase.0.push((t1 - t0).as_secs_f64() * 1e3);
        mc_phase.1.push((t2 - t1).as_secs_f64() * 1e3);
        mc_phase.2.push((t3 - t2).as_secs_f64() * 1e3);
    }

    let mut op_phase = (Vec::new(), Vec::new());
    let mut op_moments = Vec::new();
    for _ in 0..TIMING_REPS {
        let t0 = Instant::now();
        let m0 = initial_moments(set, dict, quadrature)?;
        let t1 = Instant::now();
        op_moments = propagate_moments(model, &m0, steps);
        let t2 = Instant::now();
        op_phase.0.push((t1 - t0).as_secs_f64() * 1e3);
        op_phase.1.push((t2 - t1).as_secs_f64() * 1e3);
    }

    let per_step_error: Vec<f64> = op_moments
        .iter()
        .zip(&mc_moments)
        .map(|(a, b)| {
            a.m.iter()
                .zip(b.m.iter())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let max_error = per_step_error.iter().cloned().fold(0.0, f64::max);

    let mc_sample_ms = median(mc_phase.0.clone());
    let mc_sim_ms = median(mc_phase.1.clone());
    let mc_moments_ms = median(mc_phase.2.clone());
    let totals: Vec<f64> = (0..TIMING_REPS)
        .map(|i| mc_phase.0[i] + mc_phase.1[i] + mc_phase.2[i])
        .collect();
    let mc_ms = median(totals);
    let op_init_ms = median(op_phase.0.clone());
    let op_prop_ms = median(op_phase.1.clone());
    let op_totals: Vec<f64> = (0..TIMING_REPS)
        .map(|i| op_phase.0[i] + op_phase.1[i])
        .collect();
    let op_ms = median(op_totals);

    let report = ComparisonReport {
        example: example.to_string(),
        max_error,
        per_step_error,
        mc_ms,
        op_ms,
        speedup: mc_ms / op_ms.max(1e-9),
        mc_sample_ms,
        mc_sim_ms,
        mc_moments_ms,
        op_init_ms,
        op_prop_ms,
        prop_speedup: mc_ms / op_prop_ms.max(1e-9),
    };
    Ok((report, op_moments, mc_moments))
}
