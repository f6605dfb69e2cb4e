//! Kernel-based local space deformation.
//!
//! Obstacles are injected after training by adding a radial kernel field
//! ψ̄(x) = Σ_i η_i k(x̄_i, x) to the learned height field. Kernels are
//! gaussian, k = exp(−‖x−x̄‖²/(2σ²)), or barrier-type,
//! k = exp(a / (b (‖x−x̄‖ − r)^b)), the latter undefined at distances ≤ r
//! from its center (inside the obstacle).
//!
//! A deformation can be velocity-gated: each kernel is scaled by a sigmoid of
//! the cosine between x − x̄_i and the query velocity, so the space deforms
//! only for motion heading towards the obstacle. Gates are treated as
//! constants under spatial differentiation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Differentials, Embedding};
use crate::error::{Error, Result};
use crate::geometry::{check_dim, DIRECTION_EPS};

/// Velocity-gate parameters of the sigmoid η(x − x̄, v).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GateParams {
    /// Sigmoid steepness τ.
    pub tau: f64,
    /// Reference angle θ_ref; the gate is 1/2 where the angle between
    /// x − x̄ and v equals θ_ref.
    pub theta_ref: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        // θ_ref = π/2 activates the deformation for any approaching motion
        // while leaving receding motion ungated.
        GateParams {
            tau: 20.0,
            theta_ref: std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Sigmoid velocity gate
///   η = 1 / (1 + exp(−τ (k_cos − cos θ_ref))),
///   k_cos = (x − x̄)ᵀ v / (‖x − x̄‖ ‖v‖).
///
/// Returns 0 when ‖v‖ < 1e-9 (a resting system is not approaching anything).
/// The query point must not coincide with the kernel center.
pub fn velocity_gate(
    x: &DVector<f64>,
    center: &DVector<f64>,
    v: &DVector<f64>,
    gp: &GateParams,
) -> Result<f64> {
    check_dim(x.len(), center.len(), "velocity_gate center")?;
    check_dim(x.len(), v.len(), "velocity_gate velocity")?;
    let offset = x - center;
    let dist = offset.norm();
    if dist <= f64::EPSILON {
        return Err(Error::domain(
            "velocity gate undefined at the kernel center (x = x̄)",
        ));
    }
    let speed = v.norm();
    if speed < DIRECTION_EPS {
        return Ok(0.0);
    }
    let k_cos = offset.dot(v) / (dist * speed);
    Ok(1.0 / (1.0 + (-gp.tau * (k_cos - gp.theta_ref.cos())).exp()))
}

/// Kernel family of a deformation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
    /// exp(a / (b (dist − radius)^b)); undefined for dist ≤ radius.
    Barrier { a: f64, b: f64, radius: f64 },
}

/// One kernel source: center, signed magnitude η, width σ.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RbfSource {
    pub center: Vec<f64>,
    pub magnitude: f64,
    pub width: f64,
}

impl RbfSource {
    pub fn new(center: &DVector<f64>, magnitude: f64, width: f64) -> Self {
        RbfSource {
            center: center.as_slice().to_vec(),
            magnitude,
            width,
        }
    }

    pub fn center_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.center)
    }
}

/// Sum of weighted radial kernels acting as a height-field deformation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RbfDeformation {
    pub sources: Vec<RbfSource>,
    pub kind: KernelKind,
    /// Velocity gate shared by all sources; when present, evaluation
    /// requires a query velocity.
    pub gate: Option<GateParams>,
}

impl RbfDeformation {
    pub fn gaussian(sources: Vec<RbfSource>) -> Result<Self> {
        Self::new(sources, KernelKind::Gaussian, None)
    }

    pub fn new(sources: Vec<RbfSource>, kind: KernelKind, gate: Option<GateParams>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::precondition("deformation needs at least one source"));
        }
        let d = sources[0].center.len();
        for s in &sources {
            check_dim(d, s.center.len(), "RbfDeformation source center")?;
            crate::error::ensure_finite(&s.center, "RbfDeformation source center")?;
            if !(s.width.is_finite() && s.width > 0.0) {
                return Err(Error::precondition("kernel width must be positive"));
            }
            if !s.magnitude.is_finite() {
                return Err(Error::NonFinite("RbfDeformation magnitude".into()));
            }
        }
        if let KernelKind::Barrier { a, b, radius } = kind {
            if !(a.is_finite() && b.is_finite() && radius.is_finite() && b > 0.0 && radius >= 0.0) {
                return Err(Error::precondition(
                    "barrier kernel needs finite a, b > 0 and radius ≥ 0",
                ));
            }
        }
        Ok(RbfDeformation {
            sources,
            kind,
            gate,
        })
    }

    pub fn dim(&self) -> usize {
        self.sources[0].center.len()
    }

    /// Largest |η_i| over the sources; drives the hybrid gate midpoint.
    pub fn max_abs_magnitude(&self) -> f64 {
        self.sources
            .iter()
            .map(|s| s.magnitude.abs())
            .fold(0.0, f64::max)
    }

    /// Value, gradient and Hessian of ψ̄ at `x`. With a configured gate the
    /// query velocity is mandatory and scales each source before summation;
    /// the gate itself is not differentiated.
    pub fn eval(&self, x: &DVector<f64>, v: Option<&DVector<f64>>) -> Result<Differentials> {
        let d = self.dim();
        check_dim(d, x.len(), "RbfDeformation::eval")?;
        crate::error::ensure_finite(x.as_slice(), "RbfDeformation::eval input")?;
        let gate = match (&self.gate, v) {
            (Some(gp), Some(v)) => Some((gp, v)),
            (Some(_), None) => {
                return Err(Error::precondition(
                    "velocity-gated deformation evaluated without a velocity",
                ))
            }
            (None, _) => None,
        };

        let mut out = Differentials::zero(d);
        let mut offset = DVector::zeros(d);
        for src in &self.sources {
            for i in 0..d {
                offset[i] = x[i] - src.center[i];
            }
            let weight = match gate {
                Some((gp, v)) => {
                    src.magnitude * velocity_gate(x, &src.center_vec(), v, gp)?
                }
                None => src.magnitude,
            };
            if weight == 0.0 {
                continue;
            }
            accumulate_kernel(&self.kind, &offset, src.width, weight, &mut out)?;
        }
        Ok(out)
    }
}

/// Adds weight · (k, ∇k, ∇²k) of one source to `out`.
fn accumulate_kernel(
    kind: &KernelKind,
    offset: &DVector<f64>,
    width: f64,
    weight: f64,
    out: &mut Differentials,
) -> Result<()> {
    match kind {
        KernelKind::Gaussian => {
            let s2 = width * width;
            let k = (-offset.norm_squared() / (2.0 * s2)).exp();
            out.value += weight * k;
            // ∇k = −(1/σ²)(x−x̄)k; ∇²k = (1/σ²)k((x−x̄)(x−x̄)ᵀ/σ² − I).
            out.gradient.axpy(-weight * k / s2, offset, 1.0);
            let c = weight * k / s2;
            out.hessian.ger(c / s2, offset, offset, 1.0);
            for i in 0..offset.len() {
                out.hessian[(i, i)] -= c;
            }
            Ok(())
        }
        KernelKind::Barrier { a, b, radius } => {
            let dist = offset.norm();
            let t = dist - radius;
            if t <= 0.0 {
                return Err(Error::domain(format!(
                    "barrier kernel queried at distance {dist:.6} ≤ radius {radius:.6} (inside the obstacle)"
                )));
            }
            let k = (a / (b * t.powf(*b))).exp();
            if !k.is_finite() {
                return Err(Error::NonFinite("barrier kernel value".into()));
            }
            // Radial derivatives: k' = −a t^{−(b+1)} k,
            // k'' = a (b+1) t^{−(b+2)} k + a² t^{−2(b+1)} k.
            let kp = -a * t.powf(-(b + 1.0)) * k;
            let kpp = a * (b + 1.0) * t.powf(-(b + 2.0)) * k + a * a * t.powf(-2.0 * (b + 1.0)) * k;
            let u = offset / dist;
            out.value += weight * k;
            out.gradient.axpy(weight * kp, &u, 1.0);
            // ∇² = k'' u uᵀ + (k'/dist)(I − u uᵀ).
            let radial = weight * kpp;
            let tangential = weight * kp / dist;
            out.hessian.ger(radial - tangential, &u, &u, 1.0);
            for i in 0..offset.len() {
                out.hessian[(i, i)] += tangential;
            }
            Ok(())
        }
    }
}

impl Embedding for RbfDeformation {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn differentials(&self, x: &DVector<f64>, v: Option<&DVector<f64>>) -> Result<Differentials> {
        self.eval(x, v)
    }

    fn is_velocity_gated(&self) -> bool {
        self.gate.is_some()
    }
}

/// Closed-form pullback metric of a single static gaussian source,
///   G = I + (η²/σ⁴)(x−x̄)(x−x̄)ᵀ k².
///
/// Multi-source or barrier configurations must go through the generic
/// pullback; a configured velocity gate is ignored (static metric).
pub fn rbf_metric(def: &RbfDeformation, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let src = single_gaussian_source(def)?;
    let d = def.dim();
    check_dim(d, x.len(), "rbf_metric")?;
    let offset = x - src.center_vec();
    let s2 = src.width * src.width;
    let k = (-offset.norm_squared() / (2.0 * s2)).exp();
    let mut g = DMatrix::identity(d, d);
    let c = src.magnitude * k / s2;
    g.ger(c * c, &offset, &offset, 1.0);
    Ok(g)
}

/// Directional differential dG(x)[v] of the single-source gaussian metric,
/// linear in v:
///   dG[v] = (η²/σ⁴) k² (v x̃ᵀ + x̃ vᵀ) − (2η²/σ⁶) k² (x̃ᵀv) x̃ x̃ᵀ,
/// with x̃ = x − x̄. Matches central finite differences of [`rbf_metric`].
pub fn rbf_metric_differential(
    def: &RbfDeformation,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let src = single_gaussian_source(def)?;
    let d = def.dim();
    check_dim(d, x.len(), "rbf_metric_differential")?;
    check_dim(d, v.len(), "rbf_metric_differential velocity")?;
    let offset = x - src.center_vec();
    let s2 = src.width * src.width;
    let k = (-offset.norm_squared() / (2.0 * s2)).exp();
    let eta2k2 = src.magnitude * src.magnitude * k * k;
    let mut dg = DMatrix::zeros(d, d);
    dg.ger(eta2k2 / (s2 * s2), v, &offset, 1.0);
    dg.ger(eta2k2 / (s2 * s2), &offset, v, 1.0);
    dg.ger(
        -2.0 * eta2k2 * offset.dot(v) / (s2 * s2 * s2),
        &offset,
        &offset,
        1.0,
    );
    Ok(dg)
}

fn single_gaussian_source(def: &RbfDeformation) -> Result<&RbfSource> {
    if def.sources.len() != 1 {
        return Err(Error::precondition(
            "closed-form kernel metric requires exactly one source",
        ));
    }
    if !matches!(def.kind, KernelKind::Gaussian) {
        return Err(Error::precondition(
            "closed-form kernel metric requires a gaussian kernel",
        ));
    }
    Ok(&def.sources[0])
}

/// Kernel width σ from an obstacle radius and the desired kernel value ε at
/// that radius: σ = sqrt(−r² / (2 ln ε)).
pub fn sigma_from_radius(radius: f64, epsilon: f64) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::domain("obstacle radius must be positive"));
    }
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain("kernel decay ε must lie in (0, 1)"));
    }
    Ok((-0.5 * radius * radius / epsilon.ln()).sqrt())
}

/// Gaussian kernel sources living in the ambient space R^(d+1), used by the
/// classical obstacle method: the ambient metric is H(y) = I + ∇k ∇kᵀ with
/// k(y) = Σ_i η_i exp(−‖y − ȳ_i‖²/(2σ_i²)).
#[derive(Debug, Clone)]
pub struct AmbientRbfDeformation {
    sources: Vec<RbfSource>,
}

impl AmbientRbfDeformation {
    /// Builds ambient sources from chart-space obstacle centers by lifting
    /// each through the embedding, ȳ = [x̄; ψ(x̄)].
    pub fn from_chart(
        emb: &dyn Embedding,
        chart_sources: &[RbfSource],
    ) -> Result<Self> {
        let d = emb.dim();
        let mut sources = Vec::with_capacity(chart_sources.len());
        for src in chart_sources {
            check_dim(d, src.center.len(), "AmbientRbfDeformation::from_chart")?;
            let center = src.center_vec();
            let diff = emb.differentials(&center, None)?;
            let mut lifted = Vec::with_capacity(d + 1);
            lifted.extend_from_slice(&src.center);
            lifted.push(diff.value);
            sources.push(RbfSource {
                center: lifted,
                magnitude: src.magnitude,
                width: src.width,
            });
        }
        Ok(AmbientRbfDeformation { sources })
    }

    /// Ambient dimension d + 1.
    pub fn ambient_dim(&self) -> usize {
        self.sources[0].center.len()
    }

    /// H(y) = I + ∇k(y) ∇k(y)ᵀ at an ambient point.
    pub fn ambient_metric(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.ambient_dim();
        check_dim(n, y.len(), "AmbientRbfDeformation::ambient_metric")?;
        let mut grad = DVector::zeros(n);
        for src in &self.sources {
            let offset = y - src.center_vec();
            let s2 = src.width * src.width;
            let k = (-offset.norm_squared() / (2.0 * s2)).exp();
            grad.axpy(-src.magnitude * k / s2, &offset, 1.0);
        }
        let mut h = DMatrix::identity(n, n);
        h.ger(1.0, &grad, &grad, 1.0);
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn single(center: DVector<f64>, eta: f64, sigma: f64) -> RbfDeformation {
        RbfDeformation::gaussian(vec![RbfSource::new(&center, eta, sigma)]).unwrap()
    }

    #[test]
    fn kernel_peak_values() {
        let def = single(dvector![0.5, -0.5], 1.0, 0.3);
        let d = def.eval(&dvector![0.5, -0.5], None).unwrap();
        assert!((d.value - 1.0).abs() < 1e-15);
        assert!(d.gradient.norm() < 1e-15);
        let expected = -1.0 / (0.3f64 * 0.3);
        assert!((d.hessian[(0, 0)] - expected).abs() < 1e-12);
        assert!((d.hessian[(1, 1)] - expected).abs() < 1e-12);
        assert!(d.hessian[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn gaussian_decay_at_five_sigma() {
        let def = single(dvector![0.0, 0.0], 1.0, 0.2);
        let d = def.eval(&dvector![1.0, 0.0], None).unwrap();
        assert!(d.value <= 4e-6);
    }

    #[test]
    fn metric_is_identity_at_center() {
        let def = single(dvector![1.0, 2.0], 1.5, 0.4);
        let g = rbf_metric(&def, &dvector![1.0, 2.0]).unwrap();
        assert!(crate::numeric::max_abs_diff(&g, &DMatrix::identity(2, 2)) < 1e-15);
    }

    #[test]
    fn metric_differential_is_linear_in_v() {
        let def = single(dvector![0.0, 0.0], 1.0, 0.5);
        let x = dvector![0.3, -0.2];
        let zero = rbf_metric_differential(&def, &x, &dvector![0.0, 0.0]).unwrap();
        assert_eq!(zero.norm(), 0.0);
        let at_center =
            rbf_metric_differential(&def, &dvector![0.0, 0.0], &dvector![1.0, -2.0]).unwrap();
        assert_eq!(at_center.norm(), 0.0);
        let d1 = rbf_metric_differential(&def, &x, &dvector![1.0, 0.5]).unwrap();
        let d2 = rbf_metric_differential(&def, &x, &dvector![2.0, 1.0]).unwrap();
        assert!(crate::numeric::max_abs_diff(&(d1 * 2.0), &d2) < 1e-12);
    }

    #[test]
    fn sigma_from_radius_closed_cases() {
        // ln(e⁻²) = −2 makes σ = sqrt(r²/4) = r/2.
        let s = sigma_from_radius(1.0, (-2.0f64).exp()).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
        let s = sigma_from_radius(0.2, 1e-3).unwrap();
        let k = (-0.2f64 * 0.2 / (2.0 * s * s)).exp();
        assert!((k - 1e-3).abs() < 1e-12);
        assert!((s - 0.0538).abs() < 1e-4);
        assert!(sigma_from_radius(0.2, 1.0).is_err());
        assert!(sigma_from_radius(0.2, 0.0).is_err());
        assert!(sigma_from_radius(-1.0, 0.5).is_err());
    }

    #[test]
    fn gate_saturation() {
        let gp = GateParams::default();
        let x = dvector![1.0, 0.0];
        let center = dvector![0.0, 0.0];
        // Moving away: k_cos = 1, gate ≈ 1. Approaching: k_cos = −1, gate ≈ 2e-9.
        let away = velocity_gate(&x, &center, &dvector![2.0, 0.0], &gp).unwrap();
        let towards = velocity_gate(&x, &center, &dvector![-2.0, 0.0], &gp).unwrap();
        assert!((away - 1.0).abs() < 1e-8);
        assert!((towards - 2.0611536e-9).abs() < 1e-13);
        let resting = velocity_gate(&x, &center, &dvector![0.0, 1e-10], &gp).unwrap();
        assert_eq!(resting, 0.0);
        assert!(velocity_gate(&center, &center, &dvector![1.0, 0.0], &gp).is_err());
    }

    #[test]
    fn gated_eval_requires_velocity() {
        let mut def = single(dvector![0.0, 0.0], 1.0, 0.5);
        def.gate = Some(GateParams::default());
        assert!(def.eval(&dvector![1.0, 0.0], None).is_err());
        let gated = def
            .eval(&dvector![1.0, 0.0], Some(&dvector![-1.0, 0.0]))
            .unwrap();
        // Approaching motion sees (almost) the full kernel.
        let static_val = single(dvector![0.0, 0.0], 1.0, 0.5)
            .eval(&dvector![1.0, 0.0], None)
            .unwrap();
        assert!((gated.value - static_val.value).abs() < 1e-8);
    }

    #[test]
    fn barrier_kernel_domain() {
        let def = RbfDeformation::new(
            vec![RbfSource::new(&dvector![0.0, 0.0], 1.0, 1.0)],
            KernelKind::Barrier {
                a: -0.5,
                b: 2.0,
                radius: 0.4,
            },
            None,
        )
        .unwrap();
        assert!(def.eval(&dvector![0.3, 0.0], None).is_err());
        assert!(def.eval(&dvector![0.4, 0.0], None).is_err());
        assert!(def.eval(&dvector![0.8, 0.0], None).is_ok());
    }

    #[test]
    fn ambient_lift_of_flat_base_matches_chart_metric() {
        use crate::embedding::FlatEmbedding;
        let flat = FlatEmbedding::new(2);
        let chart = vec![RbfSource::new(&dvector![0.5, 0.5], 1.0, 0.3)];
        let amb = AmbientRbfDeformation::from_chart(&flat, &chart).unwrap();
        let y = dvector![0.8, 0.5, 0.0];
        let h = amb.ambient_metric(&y).unwrap();
        // Flat base: the chart block of H equals the direct chart metric.
        let def = RbfDeformation::gaussian(chart).unwrap();
        let g = rbf_metric(&def, &dvector![0.8, 0.5]).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((h[(r, c)] - g[(r, c)]).abs() < 1e-12);
            }
        }
    }
}
