//! Least-squares operator fitting and coefficient propagation.
//!
//! From snapshot pairs (x_k, y_k) the Koopman matrix K is the minimizer of
//! sum_k ||Psi(y_k) - K^T Psi(x_k)||^2, computed as K = G^+ A with
//!
//!   G = (1/N) sum Psi(x_k) Psi(x_k)^T,
//!   A = (1/N) sum Psi(x_k) Psi(y_k)^T.
//!
//! NOTE on conventions: some presentations of EDMD print these two sums
//! with the labels exchanged (G carrying the cross term). Under that
//! labeling K = G^+ A does not minimize the objective above; this library
//! uses the standard convention, which is also the one the moment update
//! m_{t+1} = K^T m_t relies on.
//!
//! The Perron-Frobenius matrix is the similarity transform
//! P = Lambda_reg^{-1} K^T Lambda_reg, solved by Cholesky factorization with
//! iterative refinement (never by forming an explicit inverse).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, DictionarySpec, GramMatrix};
use crate::dynamics::SnapshotPairs;
use crate::error::{Error, Result};
use crate::geometry::BoxDomain;
use crate::numeric::{pairwise_reduce, quantile};
use crate::quadrature::QuadratureMeta;

/// Default relative singular-value cutoff for the EDMD pseudoinverse.
pub const DEFAULT_PINV_REL_TOL: f64 = 1e-10;

/// Relative duality residual ||Lambda P - K^T Lambda||_F / ||K^T Lambda||_F
/// guaranteed after construction.
pub const PF_RESIDUAL_BOUND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    #[serde(rename = "N")]
    pub n: usize,
    pub dt: f64,
    pub residual_p50: f64,
    pub residual_p90: f64,
    /// Root-mean-square per-snapshot residual (the attained minimum of the
    /// least-squares objective under the 1/N convention).
    pub residual_rms: f64,
    pub seed: u64,
    pub domain: Vec<(f64, f64)>,
}

/// Per-snapshot residual summary and conditioning diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub residual_p50: f64,
    pub residual_p90: f64,
    pub residual_max: f64,
    /// sigma_max / sigma_min of the normal matrix G, over the singular
    /// values kept by the pseudoinverse cutoff.
    pub condition_number: f64,
    pub dropped_pairs: usize,
}

#[derive(Debug, Clone)]
pub struct OperatorModel {
    /// Koopman matrix: coefficient update v_{t+1} = K v_t, moment update
    /// m_{t+1} = K^T m_t.
    pub k: DMatrix<f64>,
    /// Perron-Frobenius matrix: density-coefficient update w_{t+1} = P w_t.
    pub p: DMatrix<f64>,
    pub gram: GramMatrix,
    pub dictionary: Dictionary,
    /// Root-mean-square per-snapshot fit residual.
    pub residual: f64,
    pub meta: OperatorMeta,
}

impl OperatorModel {
    pub fn k_dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn summary(&self) -> String {
        format!(
            "{}x{} operator ({} basis, N = {}, dt = {}): residual p50 = {:.3e}, p90 = {:.3e}, rms = {:.3e}",
            self.k.nrows(),
            self.k.ncols(),
            self.dictionary.family(),
            self.meta.n,
            self.meta.dt,
            self.meta.residual_p50,
            self.meta.residual_p90,
            self.residual,
        )
    }
}

/// Moore-Penrose pseudoinverse by SVD; singular values below
/// rel_tol * sigma_max are treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.pseudo_inverse(rel_tol * smax)
        .expect("cutoff is non-negative")
}

/// P = Lambda_reg^{-1} K^T Lambda_reg via Cholesky solves with iterative
/// refinement until the duality residual is at most `PF_RESIDUAL_BOUND`
/// relative.
pub fn pf_from_koopman(k: &DMatrix<f64>, gram: &GramMatrix) -> Result<DMatrix<f64>> {
    let lam = gram.regularized();
    let target = k.transpose() * lam;
    let target_norm = target.norm();
    let mut p = gram.solve_mat(&target);
    if target_norm > 0.0 {
        for _ in 0..3 {
            let resid = &target - lam * &p;
            if resid.norm() <= 0.1 * PF_RESIDUAL_BOUND * target_norm {
                break;
            }
            p += gram.solve_mat(&resid);
        }
        let rel = (&target - lam * &p).norm() / target_norm;
        if rel > PF_RESIDUAL_BOUND {
            return Err(Error::SingularGram(format!(
                "duality residual {rel:.3e} exceeds {PF_RESIDUAL_BOUND:.1e}"
            )));
        }
    }
    Ok(p)
}

fn lift_pairs(pairs: &SnapshotPairs, dict: &Dictionary) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = pairs.n();
    let k = dict.k();
    let mut psi_x = DMatrix::zeros(k, n);
    let mut psi_y = DMatrix::zeros(k, n);
    let mut buf = DVector::zeros(k);
    for (src, dst, label) in [(&pairs.x, &mut psi_x, "x"), (&pairs.y, &mut psi_y, "y")] {
        for col in 0..n {
            let state: Vec<f64> = src.column(col).iter().copied().collect();
            dict.eval_into(&state, &mut buf);
            if !buf.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidData {
                    index: col,
                    reason: format!("non-finite lifted {label}-snapshot"),
                });
            }
            dst.column_mut(col).copy_from(&buf);
        }
    }
    Ok((psi_x, psi_y))
}

/// Fit the Koopman matrix from snapshot pairs and derive the
/// Perron-Frobenius matrix against the given Gram matrix. Deterministic:
/// the G/A accumulations use an order-fixed pairwise reduction, so the
/// result is bitwise reproducible and invariant under duplicating the
/// whole dataset.
pub fn edmd_fit(
    pairs: &SnapshotPairs,
    dict: &Dictionary,
    gram: &GramMatrix,
) -> Result<OperatorModel> {
    edmd_fit_with(pairs, dict, gram, DEFAULT_PINV_REL_TOL)
}

pub fn edmd_fit_with(
    pairs: &SnapshotPairs,
    dict: &Dictionary,
    gram: &GramMatrix,
    pinv_rel_tol: f64,
) -> Result<OperatorModel> {
    let n = pairs.n();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if pairs.dim() != dict.dim {
        return Err(Error::InvalidState(format!(
            "snapshots have dim {}, dictionary expects {}",
            pairs.dim(),
            dict.dim
        )));
    }
    let k_dim = dict.k();
    if gram.k() != k_dim {
        return Err(Error::InvalidState(format!(
            "gram matrix is {}x{}, dictionary has {} functions",
            gram.k(),
            gram.k(),
            k_dim
        )));
    }
    if n < k_dim {
        log::warn!("only {n} snapshot pairs for {k_dim} dictionary functions");
    }

    let (psi_x, psi_y) = lift_pairs(pairs, dict)?;

    let sums = pairwise_reduce(
        0..n,
        &|range: std::ops::Range<usize>| {
            let mut g = DMatrix::zeros(k_dim, k_dim);
            let mut a = DMatrix::zeros(k_dim, k_dim);
            for i in range {
                let px = psi_x.column(i);
                g.ger(1.0, &px, &px, 1.0);
                a.ger(1.0, &px, &psi_y.column(i), 1.0);
            }
            (g, a)
        },
        &|(g1, a1), (g2, a2)| (g1 + g2, a1 + a2),
    );
    let g = sums.0 / n as f64;
    let a = sums.1 / n as f64;

    let svd = g.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = pinv_rel_tol * smax;
    let smin_kept = svd
        .singular_values
        .iter()
        .cloned()
        .filter(|s| *s > cutoff)
        .fold(f64::INFINITY, f64::min);
    let condition_number = if smin_kept.is_finite() && smin_kept > 0.0 {
        smax / smin_kept
    } else {
        f64::INFINITY
    };
    log::debug!("snapshot normal matrix condition number {condition_number:.3e}");
    let g_pinv = svd.pseudo_inverse(cutoff).expect("cutoff is non-negative");
    let k_mat = &g_pinv * &a;

    if !k_mat.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularGram("non-finite Koopman matrix".into()));
    }

    let p = pf_from_koopman(&k_mat, gram)?;

    // per-snapshot residuals ||Psi(y_k) - K^T Psi(x_k)||
    let resid_mat = &psi_y - k_mat.transpose() * &psi_x;
    let mut per_pair: Vec<f64> = resid_mat.column_iter().map(|c| c.norm()).collect();
    let rms = (per_pair.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    per_pair.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p50 = crate::numeric::quantile_sorted(&per_pair, 0.5);
    let p90 = crate::numeric::quantile_sorted(&per_pair, 0.9);

    Ok(OperatorModel {
        k: k_mat,
        p,
        gram: gram.clone(),
        dictionary: dict.clone(),
        residual: rms,
        meta: OperatorMeta {
            n,
            dt: pairs.dt,
            residual_p50: p50,
            residual_p90: p90,
            residual_rms: rms,
            seed: 0,
            domain: gram.meta.domain.clone(),
        },
    })
}

/// Observable-coefficient propagation v_{t+1} = K v_t, by repeated
/// multiplication.
pub fn propagate_coefficients_koopman(
    model: &OperatorModel,
    v: &DVector<f64>,
    steps: usize,
) -> DVector<f64> {
    let mut out = v.clone();
    for _ in 0..steps {
        out = &model.k * out;
    }
    out
}

/// Density-coefficient propagation w_{t+1} = P w_t.
pub fn propagate_coefficients_pf(
    model: &OperatorModel,
    w: &DVector<f64>,
    steps: usize,
) -> DVector<f64> {
    let mut out = w.clone();
    for _ in 0..steps {
        out = &model.p * out;
    }
    out
}

/// Recompute the per-snapshot residual summary of a fitted model on a
/// dataset.
pub fn fit_residual(
    model: &OperatorModel,
    pairs: &SnapshotPairs,
    dict: &Dictionary,
) -> Result<FitReport> {
    if pairs.n() == 0 {
        return Err(Error::EmptyData);
    }
    let (psi_x, psi_y) = lift_pairs(pairs, dict)?;
    let resid_mat = &psi_y - model.k.transpose() * &psi_x;
    let per_pair: Vec<f64> = resid_mat.column_iter().map(|c| c.norm()).collect();
    let svd = {
        let n = pairs.n();
        let sums = pairwise_reduce(
            0..n,
            &|range: std::ops::Range<usize>| {
                let mut g = DMatrix::zeros(dict.k(), dict.k());
                for i in range {
                    let px = psi_x.column(i);
                    g.ger(1.0, &px, &px, 1.0);
                }
                g
            },
            &|a, b| a + b,
        );
        (sums / n as f64).svd(false, false)
    };
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .filter(|s| *s > DEFAULT_PINV_REL_TOL * smax)
        .fold(f64::INFINITY, f64::min);
    Ok(FitReport {
        residual_p50: quantile(&per_pair, 0.5),
        residual_p90: quantile(&per_pair, 0.9),
        residual_max: per_pair.iter().cloned().fold(0.0, f64::max),
        condition_number: if smin.is_finite() && smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        },
        dropped_pairs: pairs.dropped,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::InvalidState(format!(
            "{what}: ragged or empty matrix"
        )));
    }
    let m = rows[0].len();
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// On-disk operator format: row-major matrices plus the dictionary spec and
/// provenance metadata needed to rebuild the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorFile {
    dictionary: DictionarySpec,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    #[serde(rename = "Lambda")]
    lambda: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    meta: OperatorMeta,
}

pub fn save_operator(model: &OperatorModel, path: &std::path::Path) -> Result<()> {
    let spec = model.dictionary.spec().ok_or_else(|| {
        Error::UnsupportedDictionary("custom dictionaries cannot be serialized".into())
    })?;
    let file = OperatorFile {
        dictionary: spec.clone(),
        k: matrix_rows(&model.k),
        lambda: matrix_rows(&model.gram.lambda),
        p: matrix_rows(&model.p),
        meta: model.meta.clone(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Load an operator file; the Gram regularization and factorization are
/// recomputed from the stored raw matrix, so solves behave identically to
/// the session that wrote the file.
pub fn load_operator(path: &std::path::Path) -> Result<OperatorModel> {
    let json = std::fs::read_to_string(path)?;
    let file: OperatorFile = serde_json::from_str(&json)?;
    let domain = BoxDomain::new(file.meta.domain.clone())?;
    let dictionary = file.dictionary.build(&domain)?;
    let k = rows_matrix(&file.k, "K")?;
    let p = rows_matrix(&file.p, "P")?;
    let lambda = rows_matrix(&file.lambda, "Lambda")?;
    let k_dim = dictionary.k();
    for (m, name) in [(&k, "K"), (&p, "P"), (&lambda, "Lambda")] {
        if m.nrows() != k_dim || m.ncols() != k_dim {
            return Err(Error::InvalidState(format!(
                "{name} is {}x{}, dictionary has {} functions",
                m.nrows(),
                m.ncols(),
                k_dim
            )));
        }
    }
    let gram = GramMatrix::from_lambda(
        lambda,
        QuadratureMeta {
            method: "stored".into(),
            nodes: 0,
            domain: file.meta.domain.clone(),
        },
    )?;
    Ok(OperatorModel {
        k,
        p,
        gram,
        dictionary,
        residual: file.meta.residual_rms,
        meta: file.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{gram_matrix, monomial_dictionary};
    use crate::dynamics::{build_snapshot_pairs, sample_domain, DynamicalSystem, Rhs};
    use crate::geometry::Region;
    use crate::numeric::substream;
    use crate::quadrature::QuadratureSpec;
    use rand::Rng;
    use std::sync::Arc;

    fn box2(lo: f64, hi: f64) -> BoxDomain {
        BoxDomain::new(vec![(lo, hi), (lo, hi)]).unwrap()
    }

    fn identity_model() -> OperatorModel {
        let rhs: Rhs = Arc::new(|_, out| out.fill(0.0));
        let sys = DynamicalSystem::new("zero", 2, box2(-3.0, 3.0), rhs).unwrap();
        let points = sample_domain(
            &Region::Box {
                bounds: vec![(-3.0, 3.0), (-3.0, 3.0)],
            },
            200,
            5,
        )
        .unwrap();
        let pairs = build_snapshot_pairs(&sys, &points, 0.2, 1.0, 2).unwrap();
        let dict = monomial_dictionary(2, 2, &[3.0, 3.0]).unwrap();
        let gram = gram_matrix(&dict, &box2(-3.0, 3.0), &QuadratureSpec::default()).unwrap();
        edmd_fit(&pairs, &dict, &gram).unwrap()
    }

    #[test]
    fn identity_data_gives_identity_operator() {
        let model = identity_model();
        let k_dim = model.k_dim();
        let eye = DMatrix::<f64>::identity(k_dim, k_dim);
        assert!((&model.k - &eye).norm() < 1e-10, "K deviates from identity");
        assert!(model.residual < 1e-10);
        // P-F propagation leaves any coefficient vector unchanged
        let w = DVector::from_fn(k_dim, |i, _| (i as f64 + 1.0) * 0.3);
        let out = propagate_coefficients_pf(&model, &w, 7);
        assert!((out - &w).norm() < 1e-7);
    }

    #[test]
    fn pseudo_inverse_basics() {
        let eye = DMatrix::<f64>::identity(4, 4);
        assert!((pseudo_inverse(&eye, 1e-12) - &eye).norm() < 1e-12);

        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let pinv = pseudo_inverse(&m, 1e-12);
        assert!((pinv[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(pinv[(1, 1)], 0.0);
    }

    #[test]
    fn pseudo_inverse_inverts_full_rank_matrices() {
        let mut rng = substream(9, 1, 0);
        for _ in 0..5 {
            let m = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
            let pinv = pseudo_inverse(&m, 1e-12);
            let eye = DMatrix::<f64>::identity(6, 6);
            assert!((pinv * &m - eye).norm() < 1e-8);
        }
    }

    #[test]
    fn pf_collapses_to_transpose_for_identity_gram() {
        let k_dim = 5;
        let mut rng = substream(9, 2, 0);
        let k = DMatrix::from_fn(k_dim, k_dim, |_, _| rng.gen_range(-1.0..1.0));
        let gram = GramMatrix::from_lambda(
            DMatrix::identity(k_dim, k_dim),
            QuadratureMeta {
                method: "stored".into(),
                nodes: 0,
                domain: vec![(0.0, 1.0); k_dim],
            },
        )
        .unwrap();
        let p = pf_from_koopman(&k, &gram).unwrap();
        assert!((p - k.transpose()).norm() < 1e-8);
    }

    #[test]
    fn pf_duality_residual_and_spectra() {
        let dict = monomial_dictionary(2, 2, &[3.0, 3.0]).unwrap();
        let gram = gram_matrix(&dict, &box2(-3.0, 3.0), &QuadratureSpec::default()).unwrap();
        let mut rng = substream(9, 3, 0);
        let k = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
        let p = pf_from_koopman(&k, &gram).unwrap();

        let lam = gram.regularized();
        let target = k.transpose() * lam;
        let rel = (&target - lam * &p).norm() / target.norm();
        assert!(rel <= 1e-9, "duality residual {rel}");

        assert!(crate::reference::spectral_distance(&k, &p) < 1e-8);
    }

    #[test]
    fn duality_bilinear_identity() {
        let dict = monomial_dictionary(2, 2, &[3.0, 3.0]).unwrap();
        let gram = gram_matrix(&dict, &box2(-3.0, 3.0), &QuadratureSpec::default()).unwrap();
        let mut rng = substream(9, 4, 0);
        let k = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
        let p = pf_from_koopman(&k, &gram).unwrap();
        let lam = gram.regularized();
        for _ in 0..100 {
            let a = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            let b = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            let lhs = (&k * &b).transpose() * (lam * &a);
            let rhs = b.transpose() * (lam * (&p * &a));
            let scale = lhs[(0, 0)].abs().max(rhs[(0, 0)].abs()).max(1e-12);
            assert!((lhs[(0, 0)] - rhs[(0, 0)]).abs() / scale < 1e-8);
        }
    }

    #[test]
    fn duplicating_the_dataset_leaves_k_bitwise_unchanged() {
        let sys = crate::dynamics::example1();
        let points = sample_domain(
            &Region::Ball {
                center: vec![0.0, 0.0],
                radius: 3.0,
            },
            40,
            13,
        )
        .unwrap();
        let pairs = build_snapshot_pairs(&sys, &points, 0.2, 2.0, 10).unwrap();
        let dict = monomial_dictionary(2, 2, &[3.0, 3.0]).unwrap();
        let gram = gram_matrix(&dict, &box2(-3.0, 3.0), &QuadratureSpec::default()).unwrap();

        let n = pairs.n();
        let mut x2 = DMatrix::zeros(2, 2 * n);
        let mut y2 = DMatrix::zeros(2, 2 * n);
        x2.columns_mut(0, n).copy_from(&pairs.x);
        x2.columns_mut(n, n).copy_from(&pairs.x);
        y2.columns_mut(0, n).copy_from(&pairs.y);
        y2.columns_mut(n, n).copy_from(&pairs.y);
        let doubled = SnapshotPairs {
            x: x2,
            y: y2,
            dt: pairs.dt,
            dropped: 0,
        };

        let m1 = edmd_fit(&pairs, &dict, &gram).unwrap();
        let m2 = edmd_fit(&doubled, &dict, &gram).unwrap();
        assert_eq!(m1.k, m2.k);
    }

    #[test]
    fn fit_is_deterministic() {
        let a = identity_model();
        let b = identity_model();
        assert_eq!(a.k, b.k);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn single_entry_perturbations_never_improve_the_objective() {
        let sys = crate::dynamics::example1();
        let points = sample_domain(
            &Region::Ball {
                center: vec![0.0, 0.0],
                radius: 3.0,
            },
            60,
            21,
        )
        .unwrap();
        let pairs = build_snapshot_pairs(&sys, &points, 0.2, 2.0, 10).unwrap();
        let dict = monomial_dictionary(2, 2, &[3.0, 3.0]).unwrap();
        let gram = gram_matrix(&dict, &box2(-3.0, 3.0), &QuadratureSpec::default()).unwrap();
        let model = edmd_fit(&pairs, &dict, &gram).unwrap();

        let (psi_x, psi_y) = lift_pairs(&pairs, &dict).unwrap();
        let objective = |k: &DMatrix<f64>| (&psi_y - k.transpose() * &psi_x).norm_squared();
        let base = objective(&model.k);
        for i in 0..model.k.nrows() {
            for j in 0..model.k.ncols() {
                for delta in [1e-4, -1e-4] {
                    let mut k = model.k.clone();
                    k[(i, j)] += delta;
                    assert!(
                        objective(&k) >= base - 1e-12 * base.max(1.0),
                        "perturbing ({i},{j}) improved the objective"
                    );
                }
            }
        }
    }

    #[test]
    fn propagation_steps_zero_is_identity() {
        let model = identity_model();
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(propagate_coefficients_koopman(&model, &v, 0), v);
        assert_eq!(propagate_coefficients_pf(&model, &v, 0), v);
    }

    #[test]
    fn fit_report_on_identity_data() {
        let model = identity_model();
        let rhs: Rhs = Arc::new(|_, out| out.fill(0.0));
        let sys = DynamicalSystem::new("zero", 2, box2(-3.0, 3.0), rhs).unwrap();
        let points = sample_domain(
            &Region::Box {
                bounds: vec![(-3.0, 3.0), (-3.0, 3.0)],
            },
            200,
            5,
        )
        .unwrap();
        let pairs = build_snapshot_pairs(&sys, &points, 0.2, 1.0, 2).unwrap();
        let report = fit_residual(&model, &pairs, &model.dictionary).unwrap();
        assert!(report.residual_max <= 1e-10);
        assert!(report.residual_p50 <= report.residual_p90);
        assert_eq!(report.dropped_pairs, 0);
    }

    #[test]
    fn operator_file_round_trips() {
        let model = identity_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("operator.json");
        save_operator(&model, &path).unwrap();
        let loaded = load_operator(&path).unwrap();
        assert_eq!(loaded.k, model.k);
        assert_eq!(loaded.p, model.p);
        assert_eq!(loaded.gram.lambda, model.gram.lambda);
        assert_eq!(loaded.meta, model.meta);
        assert_eq!(loaded.dictionary.k(), model.dictionary.k());
        // the recomputed regularization matches
        assert_eq!(loaded.gram.epsilon, model.gram.epsilon);
    }
}
