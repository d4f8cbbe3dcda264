//! Basis-function dictionaries Psi(x) and their Gram matrix.
//!
//! Two built-in families: scaled monomials (graded order, constant first)
//! and 1-D Gaussian RBFs (each basis function depends on exactly one
//! coordinate, centers equally spaced per axis). Custom closures are
//! supported library-side but cannot be serialized.
//!
//! The Gram matrix uses the unnormalized Lebesgue inner product over the
//! domain-of-interest box, so <phi, g> is the plain integral that the
//! moment definitions use.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxDomain;
use crate::quadrature::{box_grid, box_grid_mc, QuadratureMeta, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthRule {
    /// Width equals the center spacing, so neighbors overlap at exp(-1/2).
    #[default]
    Spacing,
}

/// Serializable dictionary description; RBF centers/widths are derived from
/// the domain box at build time, so the spec stays domain-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum DictionarySpec {
    Monomial {
        max_degree: u32,
        scale: Vec<f64>,
    },
    Rbf1d {
        centers_per_axis: usize,
        #[serde(default)]
        width: WidthRule,
    },
}

impl DictionarySpec {
    pub fn build(&self, domain: &BoxDomain) -> Result<Dictionary> {
        match self {
            DictionarySpec::Monomial { max_degree, scale } => {
                if scale.len() != domain.dim() {
                    return Err(Error::config(
                        "dictionary.scale",
                        format!(
                            "expected {} per-axis factors, got {}",
                            domain.dim(),
                            scale.len()
                        ),
                    ));
                }
                monomial_dictionary(domain.dim(), *max_degree, scale)
            }
            DictionarySpec::Rbf1d {
                centers_per_axis,
                width: WidthRule::Spacing,
            } => rbf1d_dictionary(domain, *centers_per_axis),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            DictionarySpec::Monomial { .. } => "monomial",
            DictionarySpec::Rbf1d { .. } => "rbf1d",
        }
    }
}

/// One axis of an RBF dictionary: unnormalized Gaussians
/// exp(-(x_axis - c)^2 / (2 w^2)) with a shared width.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfAxis {
    pub axis: usize,
    pub centers: Vec<f64>,
    pub width: f64,
}

type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Basis {
    Monomial {
        exponents: Vec<Vec<u32>>,
        scale: Vec<f64>,
    },
    Rbf1d {
        axes: Vec<RbfAxis>,
    },
    Custom {
        funcs: Vec<CustomFn>,
    },
}

#[derive(Clone)]
pub struct Dictionary {
    pub dim: usize,
    basis: Basis,
    spec: Option<DictionarySpec>,
}

impl fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dictionary")
            .field("dim", &self.dim)
            .field("family", &self.family())
            .field("k", &self.k())
            .finish()
    }
}

impl Dictionary {
    pub fn k(&self) -> usize {
        match &self.basis {
            Basis::Monomial { exponents, .. } => exponents.len(),
            Basis::Rbf1d { axes } => axes.iter().map(|a| a.centers.len()).sum(),
            Basis::Custom { funcs } => funcs.len(),
        }
    }

    pub fn family(&self) -> &'static str {
        match &self.basis {
            Basis::Monomial { .. } => "monomial",
            Basis::Rbf1d { .. } => "rbf1d",
            Basis::Custom { .. } => "custom",
        }
    }

    /// The serializable spec; `None` for custom closures.
    pub fn spec(&self) -> Option<&DictionarySpec> {
        self.spec.as_ref()
    }

    /// Exponent rows of a monomial dictionary (one row per basis function).
    pub fn monomial_exponents(&self) -> Option<&[Vec<u32>]> {
        match &self.basis {
            Basis::Monomial { exponents, .. } => Some(exponents),
            _ => None,
        }
    }

    /// Per-axis RBF layout, in basis order (axis-major).
    pub fn rbf_axes(&self) -> Option<&[RbfAxis]> {
        match &self.basis {
            Basis::Rbf1d { axes } => Some(axes),
            _ => None,
        }
    }

    /// Evaluate Psi(x) into `out` without input checks; callers pass
    /// finite x of length `dim` (quadrature nodes, simulated states).
    pub fn eval_into(&self, x: &[f64], out: &mut DVector<f64>) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.k());
        match &self.basis {
            Basis::Monomial { exponents, scale } => {
                let scaled: Vec<f64> = x.iter().zip(scale).map(|(xi, si)| xi / si).collect();
                for (k, exps) in exponents.iter().enumerate() {
                    let mut v = 1.0;
                    for (i, &e) in exps.iter().enumerate() {
                        if e > 0 {
                            v *= scaled[i].powi(e as i32);
                        }
                    }
                    out[k] = v;
                }
            }
            Basis::Rbf1d { axes } => {
                let mut k = 0;
                for ax in axes {
                    let xi = x[ax.axis];
                    let denom = 2.0 * ax.width * ax.width;
                    for &c in &ax.centers {
                        let d = xi - c;
                        out[k] = (-d * d / denom).exp();
                        k += 1;
                    }
                }
            }
            Basis::Custom { funcs } => {
                for (k, f) in funcs.iter().enumerate() {
                    out[k] = f(x);
                }
            }
        }
    }

    /// Evaluate Psi(x), rejecting non-finite input.
    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(Error::InvalidState(format!(
                "state has length {}, dictionary expects {}",
                x.len(),
                self.dim
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidState(format!("non-finite state {x:?}")));
        }
        let mut out = DVector::zeros(self.k());
        self.eval_into(x, &mut out);
        Ok(out)
    }
}

/// All exponent tuples with total degree <= max_degree, ordered by total
/// degree and, within a degree, by descending lexicographic exponent order
/// (x1 before x2, so degree 2 in 2-D reads x1^2, x1 x2, x2^2).
fn exponent_rows(dim: usize, max_degree: u32) -> Vec<Vec<u32>> {
    let mut rows = Vec::new();
    let mut prefix = Vec::with_capacity(dim);
    for total in 0..=max_degree {
        fill_degree(dim, total, &mut prefix, &mut rows);
    }
    rows
}

fn fill_degree(slots: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if slots == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=total).rev() {
        prefix.push(e);
        fill_degree(slots - 1, total - e, prefix, out);
        prefix.pop();
    }
}

/// Scaled-monomial dictionary: products of (x_i / s_i)^{k_i} with total
/// degree <= max_degree; the constant 1 is always index 0 and
/// K = C(dim + max_degree, max_degree).
pub fn monomial_dictionary(dim: usize, max_degree: u32, scale: &[f64]) -> Result<Dictionary> {
    if dim == 0 {
        return Err(Error::InvalidState("dictionary needs dim >= 1".into()));
    }
    if scale.len() != dim || scale.iter().any(|s| *s <= 0.0 || s.is_nan()) {
        return Err(Error::InvalidState(
            "monomial scale must give one positive factor per axis".into(),
        ));
    }
    Ok(Dictionary {
        dim,
        basis: Basis::Monomial {
            exponents: exponent_rows(dim, max_degree),
            scale: scale.to_vec(),
        },
        spec: Some(DictionarySpec::Monomial {
            max_degree,
            scale: scale.to_vec(),
        }),
    })
}

/// 1-D Gaussian RBF dictionary: per axis, `centers_per_axis` centers equally
/// spaced across the domain interval including both endpoints, width equal
/// to the spacing; K = dim * centers_per_axis, axis-major order.
pub fn rbf1d_dictionary(domain: &BoxDomain, centers_per_axis: usize) -> Result<Dictionary> {
    if centers_per_axis < 2 {
        return Err(Error::InvalidState(
            "rbf1d needs at least 2 centers per axis".into(),
        ));
    }
    let axes = domain
        .bounds
        .iter()
        .enumerate()
        .map(|(axis, (lo, hi))| {
            let spacing = (hi - lo) / (centers_per_axis - 1) as f64;
            let centers = (0..centers_per_axis)
                .map(|j| lo + spacing * j as f64)
                .collect();
            RbfAxis {
                axis,
                centers,
                width: spacing,
            }
        })
        .collect();
    Ok(Dictionary {
        dim: domain.dim(),
        basis: Basis::Rbf1d { axes },
        spec: Some(DictionarySpec::Rbf1d {
            centers_per_axis,
            width: WidthRule::Spacing,
        }),
    })
}

/// Dictionary from arbitrary closures; library-only (not serializable).
pub fn custom_dictionary(dim: usize, funcs: Vec<CustomFn>) -> Result<Dictionary> {
    if dim == 0 || funcs.is_empty() {
        return Err(Error::InvalidState(
            "custom dictionary needs dim >= 1 and at least one function".into(),
        ));
    }
    Ok(Dictionary {
        dim,
        basis: Basis::Custom { funcs },
        spec: None,
    })
}

/// Gram matrix of pairwise dictionary inner products over the domain box,
/// with the regularized Cholesky factorization used for every solve
/// against it.
#[derive(Clone)]
pub struct GramMatrix {
    /// Raw symmetrized matrix of inner products (no regularization).
    pub lambda: DMatrix<f64>,
    /// Diagonal shift 1e-10 * trace / K applied before factorization.
    pub epsilon: f64,
    lambda_reg: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    pub meta: QuadratureMeta,
}

impl fmt::Debug for GramMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GramMatrix")
            .field("k", &self.k())
            .field("epsilon", &self.epsilon)
            .field("meta", &self.meta)
            .finish()
    }
}

impl GramMatrix {
    /// Wrap a computed (or deserialized) matrix: symmetrize, shift the
    /// diagonal, factorize. The regularization is recomputed here so a
    /// stored raw matrix round-trips to the identical factorization.
    pub fn from_lambda(lambda: DMatrix<f64>, meta: QuadratureMeta) -> Result<Self> {
        let k = lambda.nrows();
        if k == 0 || lambda.ncols() != k {
            return Err(Error::SingularGram("gram matrix must be square".into()));
        }
        if !lambda.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularGram("non-finite gram entries".into()));
        }
        let lambda = (&lambda + lambda.transpose()) * 0.5;
        let epsilon = 1e-10 * lambda.trace() / k as f64;
        let mut lambda_reg = lambda.clone();
        for i in 0..k {
            lambda_reg[(i, i)] += epsilon;
        }
        let chol = Cholesky::new(lambda_reg.clone()).ok_or_else(|| {
            Error::SingularGram("not positive definite after regularization".into())
        })?;
        Ok(Self {
            lambda,
            epsilon,
            lambda_reg,
            chol,
            meta,
        })
    }

    pub fn k(&self) -> usize {
        self.lambda.nrows()
    }

    /// The regularized matrix Lambda + eps I actually factorized.
    pub fn regularized(&self) -> &DMatrix<f64> {
        &self.lambda_reg
    }

    /// Solve (Lambda + eps I) w = b with one iterative-refinement pass.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut w = self.chol.solve(b);
        let r = b - &self.lambda_reg * &w;
        w += self.chol.solve(&r);
        w
    }

    /// Columnwise `solve_vec` for a matrix right-hand side.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut w = self.chol.solve(b);
        let r = b - &self.lambda_reg * &w;
        w += self.chol.solve(&r);
        w
    }
}

/// Integrate phi_i phi_j over the domain box: tensor Gauss-Legendre for
/// dim <= 3, seeded Monte-Carlo above.
pub fn gram_matrix(
    dict: &Dictionary,
    domain: &BoxDomain,
    spec: &QuadratureSpec,
) -> Result<GramMatrix> {
    spec.validate()?;
    if domain.dim() != dict.dim {
        return Err(Error::InvalidState(format!(
            "domain has {} axes, dictionary expects {}",
            domain.dim(),
            dict.dim
        )));
    }
    let nodes = if domain.dim() <= 3 {
        box_grid(domain, spec.nodes_per_axis)
    } else {
        box_grid_mc(domain, spec.mc_nodes, spec.mc_seed)
    };
    let lambda = nodes.integrate_outer(dict.k(), |x, out| dict.eval_into(x, out));
    GramMatrix::from_lambda(lambda, nodes.meta)
}
