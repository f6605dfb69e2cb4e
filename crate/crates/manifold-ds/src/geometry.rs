//! Pullback geometry of the graph embedding Ψ(x) = [x; ψ(x)].
//!
//! With chart dimension d the embedding Jacobian is J = [I_d; ∇ψᵀ] and the
//! pullback of an ambient metric H is G = JᵀHJ. For the identity ambient
//! metric everything is closed form:
//!
//!   G     = I + ∇ψ ∇ψᵀ,
//!   G⁻¹   = I − ∇ψ ∇ψᵀ / (1 + ‖∇ψ‖²)      (Sherman–Morrison),
//!   det G = 1 + ‖∇ψ‖²,
//!   eig   = {1 with multiplicity d−1, 1 + ‖∇ψ‖² along ∇ψ},
//!
//! and the Levi-Civita contraction collapses to
//!
//!   Ξ(x, v) v = (G⁻¹ ∇ψ) · (vᵀ ∇²ψ v),
//!
//! which is what the dynamics hot path evaluates. General ambient metrics
//! (the classical obstacle construction) are supported for the metric by
//! dense linear algebra, and for the Christoffel term by finite differences
//! of the metric field through the full permuted-partials formula. The two
//! Christoffel routes are kept deliberately independent so each can serve as
//! the oracle for the other.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::numeric::symmetrize;

/// Step used for finite differences of the metric field.
pub const METRIC_FD_STEP: f64 = 1e-5;

/// Gradient norm below which a direction is treated as absent.
pub const DIRECTION_EPS: f64 = 1e-9;

/// Returns a dimension-mismatch error unless `expected == actual`.
pub fn check_dim(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}

/// Metric of the ambient space R^(d+1) the graph is immersed in.
#[derive(Debug, Clone)]
pub enum AmbientMetric {
    /// Euclidean ambient space; all closed forms apply.
    Identity,
    /// Arbitrary symmetric positive-definite (d+1) x (d+1) matrix.
    Dense(DMatrix<f64>),
}

impl AmbientMetric {
    /// Wraps a dense ambient metric after a symmetry check.
    pub fn dense(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::Dimension {
                context: "AmbientMetric::dense",
                expected: h.nrows(),
                actual: h.ncols(),
            });
        }
        crate::error::ensure_finite(h.as_slice(), "AmbientMetric::dense")?;
        if crate::numeric::max_abs_diff(&h, &h.transpose()) > 1e-9 {
            return Err(Error::precondition("ambient metric must be symmetric"));
        }
        Ok(AmbientMetric::Dense(h))
    }
}

/// Metric, inverse, determinant and eigenstructure at one chart point.
///
/// Eigenvalues are sorted descending with eigenvector columns aligned. For
/// pullbacks of the identity ambient metric every eigenvalue is ≥ 1 up to
/// round-off; the constructor enforces positive definiteness and the
/// consistency G·G⁻¹ = I to 1e-9.
#[derive(Debug, Clone)]
pub struct MetricBundle {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub det: f64,
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl MetricBundle {
    /// Builds the bundle from a metric and its inverse, running the symmetric
    /// eigensolver and the validity checks.
    pub fn from_parts(g: DMatrix<f64>, g_inv: DMatrix<f64>, det: f64) -> Result<Self> {
        let d = g.nrows();
        check_dim(d, g.ncols(), "MetricBundle::from_parts")?;
        check_dim(d, g_inv.nrows(), "MetricBundle::from_parts")?;
        crate::error::ensure_finite(g.as_slice(), "MetricBundle metric")?;
        crate::error::ensure_finite(g_inv.as_slice(), "MetricBundle inverse")?;

        let mut sym = g.clone();
        symmetrize(&mut sym);
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let eigenvalues = DVector::from_fn(d, |i, _| eig.eigenvalues[order[i]]);
        let eigenvectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);

        if eigenvalues[d - 1] <= 0.0 {
            return Err(Error::Degenerate(format!(
                "metric is not positive definite (min eigenvalue {:.3e})",
                eigenvalues[d - 1]
            )));
        }
        let product = &g * &g_inv;
        let identity = DMatrix::identity(d, d);
        if crate::numeric::max_abs_diff(&product, &identity) > 1e-9 {
            return Err(Error::NonFinite(
                "metric inverse fails the consistency check G G^-1 = I".into(),
            ));
        }
        Ok(MetricBundle {
            g,
            g_inv,
            det,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Closed-form bundle for the identity ambient metric, G = I + n nᵀ.
    pub fn from_gradient(n: &DVector<f64>) -> Result<Self> {
        let d = n.len();
        let nn = n.norm_squared();
        let mut g = DMatrix::identity(d, d);
        g.ger(1.0, n, n, 1.0);
        let mut g_inv = DMatrix::identity(d, d);
        g_inv.ger(-1.0 / (1.0 + nn), n, n, 1.0);
        Self::from_parts(g, g_inv, 1.0 + nn)
    }
}

/// Applies the Sherman–Morrison inverse of G = I + n nᵀ to `rhs` without
/// materializing the matrix: rhs − n (nᵀ rhs)/(1 + ‖n‖²).
pub fn apply_inverse_metric(n: &DVector<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let scale = n.dot(rhs) / (1.0 + n.norm_squared());
    rhs - n * scale
}

/// Embedding Jacobian J = [I_d; ∇ψᵀ], shape (d+1) x d.
///
/// `v` is forwarded to the embedding for velocity-gated deformations.
pub fn jacobian(
    emb: &dyn Embedding,
    x: &DVector<f64>,
    v: Option<&DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let d = emb.dim();
    check_dim(d, x.len(), "jacobian")?;
    let diff = emb.differentials(x, v)?;
    let mut j = DMatrix::zeros(d + 1, d);
    for i in 0..d {
        j[(i, i)] = 1.0;
        j[(d, i)] = diff.gradient[i];
    }
    Ok(j)
}

/// Pullback metric bundle G = JᵀHJ at `x`.
///
/// The identity ambient metric takes the rank-one closed forms; a dense
/// ambient metric goes through Cholesky factorization for the inverse and
/// determinant.
pub fn pullback_metric(
    emb: &dyn Embedding,
    x: &DVector<f64>,
    v: Option<&DVector<f64>>,
    ambient: &AmbientMetric,
) -> Result<MetricBundle> {
    let d = emb.dim();
    check_dim(d, x.len(), "pullback_metric")?;
    match ambient {
        AmbientMetric::Identity => {
            let diff = emb.differentials(x, v)?;
            MetricBundle::from_gradient(&diff.gradient)
        }
        AmbientMetric::Dense(h) => {
            check_dim(d + 1, h.nrows(), "pullback_metric ambient")?;
            let j = jacobian(emb, x, v)?;
            let mut g = j.transpose() * h * &j;
            symmetrize(&mut g);
            dense_bundle(g)
        }
    }
}

/// Bundle from an explicit symmetric positive-definite metric matrix.
pub fn dense_bundle(g: DMatrix<f64>) -> Result<MetricBundle> {
    let chol = g.clone().cholesky().ok_or_else(|| {
        Error::Degenerate("pullback metric is not positive definite".to_string())
    })?;
    let det: f64 = chol.l_dirty().diagonal().iter().map(|l| l * l).product();
    let g_inv = chol.inverse();
    MetricBundle::from_parts(g, g_inv, det)
}

/// Levi-Civita contraction Ξ(x, v) v for the identity ambient metric, using
/// the closed form (G⁻¹ ∇ψ) (vᵀ ∇²ψ v).
///
/// `v` is both the contracted velocity and the gate velocity of
/// velocity-gated embeddings.
pub fn christoffel_contraction(
    emb: &dyn Embedding,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let d = emb.dim();
    check_dim(d, x.len(), "christoffel_contraction")?;
    check_dim(d, v.len(), "christoffel_contraction velocity")?;
    let diff = emb.differentials(x, Some(v))?;
    Ok(christoffel_from_parts(&diff.gradient, &diff.hessian, v))
}

/// Closed-form contraction from precomputed differentials; quadratic in `v`.
pub fn christoffel_from_parts(
    gradient: &DVector<f64>,
    hessian: &DMatrix<f64>,
    v: &DVector<f64>,
) -> DVector<f64> {
    let quad = (hessian * v).dot(v);
    apply_inverse_metric(gradient, gradient) * quad
}

/// Levi-Civita contraction for an arbitrary metric field, from central finite
/// differences of G through the permuted-partials formula
///
///   (Ξ v)^k = g^{km} · ½ (∂_i g_{mj} + ∂_j g_{mi} − ∂_m g_{ij}) v^i v^j.
///
/// This is the runtime path for non-identity ambient metrics and the
/// independent oracle for the closed form above.
pub fn christoffel_contraction_fd<F>(
    metric_fn: F,
    x: &DVector<f64>,
    v: &DVector<f64>,
    step: f64,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let d = x.len();
    check_dim(d, v.len(), "christoffel_contraction_fd velocity")?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::precondition("finite-difference step must be positive"));
    }

    let g = metric_fn(x)?;
    check_dim(d, g.nrows(), "christoffel_contraction_fd metric")?;
    let mut partials = Vec::with_capacity(d);
    let mut xp = x.clone();
    for m in 0..d {
        xp[m] = x[m] + step;
        let plus = metric_fn(&xp)?;
        xp[m] = x[m] - step;
        let minus = metric_fn(&xp)?;
        xp[m] = x[m];
        partials.push((plus - minus) / (2.0 * step));
    }

    // ½(∂_i g_{mj} + ∂_j g_{mi} − ∂_m g_{ij}) v^i v^j collapses to
    // (T v)_m − ½ vᵀ (∂_m G) v with T = Σ_i v^i ∂_i G, by symmetry of G.
    let mut t = DMatrix::zeros(d, d);
    for (i, dg) in partials.iter().enumerate() {
        t += dg * v[i];
    }
    let tv = &t * v;
    let lower = DVector::from_fn(d, |m, _| tv[m] - 0.5 * (&partials[m] * v).dot(v));

    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("metric is not positive definite".to_string()))?;
    Ok(chol.solve(&lower))
}

/// Diagnostics of the pullback metric at one grid point.
#[derive(Debug, Clone)]
pub struct MetricDiagnostic {
    pub x: DVector<f64>,
    pub det: f64,
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Evaluates determinant and eigenstructure of the pullback metric over a set
/// of chart points, typically a grid for plotting or export.
pub fn metric_diagnostics(
    emb: &dyn Embedding,
    points: &[DVector<f64>],
    ambient: &AmbientMetric,
) -> Result<Vec<MetricDiagnostic>> {
    points
        .iter()
        .map(|x| {
            let bundle = pullback_metric(emb, x, None, ambient)?;
            Ok(MetricDiagnostic {
                x: x.clone(),
                det: bundle.det,
                eigenvalues: bundle.eigenvalues,
                eigenvectors: bundle.eigenvectors,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FlatEmbedding;
    use nalgebra::dvector;

    #[test]
    fn flat_embedding_gives_identity_metric() {
        let emb = FlatEmbedding::new(3);
        let b = pullback_metric(&emb, &dvector![0.3, -1.0, 2.0], None, &AmbientMetric::Identity)
            .unwrap();
        assert!(crate::numeric::max_abs_diff(&b.g, &DMatrix::identity(3, 3)) < 1e-15);
        assert!((b.det - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_height_field_metric_closed_form() {
        // ψ = x_1 has ∇ψ = e_1: G = diag(2, 1), G⁻¹ = diag(1/2, 1), det 2.
        let mut net = crate::embedding::MlpEmbedding::new(vec![2, 1]).unwrap();
        net.set_weights_flat(&[1.0, 0.0, 0.0]).unwrap();
        let b = pullback_metric(&net, &dvector![0.7, -0.2], None, &AmbientMetric::Identity)
            .unwrap();
        assert!((b.g[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((b.g[(1, 1)] - 1.0).abs() < 1e-15);
        assert!((b.g_inv[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((b.det - 2.0).abs() < 1e-15);
        assert!((b.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!((b.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jacobian_stacks_identity_over_gradient() {
        let mut net = crate::embedding::MlpEmbedding::new(vec![2, 1]).unwrap();
        net.set_weights_flat(&[0.5, -1.0, 0.0]).unwrap();
        let j = jacobian(&net, &dvector![0.0, 0.0], None).unwrap();
        assert_eq!(j.shape(), (3, 2));
        assert_eq!(j[(0, 0)], 1.0);
        assert_eq!(j[(1, 1)], 1.0);
        assert_eq!(j[(2, 0)], 0.5);
        assert_eq!(j[(2, 1)], -1.0);
    }

    #[test]
    fn christoffel_vanishes_on_flat_embedding() {
        let emb = FlatEmbedding::new(2);
        let xi = christoffel_contraction(&emb, &dvector![0.4, 0.1], &dvector![1.0, 2.0]).unwrap();
        assert_eq!(xi.norm(), 0.0);
    }

    #[test]
    fn dense_identity_ambient_matches_closed_form() {
        let mut net = crate::embedding::MlpEmbedding::new(vec![2, 1]).unwrap();
        net.set_weights_flat(&[0.8, 0.3, 0.0]).unwrap();
        let x = dvector![0.2, 0.9];
        let closed = pullback_metric(&net, &x, None, &AmbientMetric::Identity).unwrap();
        let dense = pullback_metric(
            &net,
            &x,
            None,
            &AmbientMetric::Dense(DMatrix::identity(3, 3)),
        )
        .unwrap();
        assert!(crate::numeric::max_abs_diff(&closed.g, &dense.g) < 1e-12);
        assert!(crate::numeric::max_abs_diff(&closed.g_inv, &dense.g_inv) < 1e-12);
        assert!((closed.det - dense.det).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_ambient_metric() {
        let mut h = DMatrix::identity(3, 3);
        h[(0, 1)] = 0.5;
        assert!(AmbientMetric::dense(h).is_err());
    }
}
