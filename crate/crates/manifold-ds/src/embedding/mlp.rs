//! Fully connected tanh network ψ(x; w) with analytic derivatives.
//!
//! The network is the learnable height field: hidden layers use tanh, the
//! scalar output layer is linear. Three derivative families are provided, all
//! in closed form by layer recursions rather than a tape:
//!
//! * spatial: ∇ψ and ∇²ψ, propagated alongside the activations,
//! * parameter: ∂ψ/∂w, ∂∇ψ/∂w and ∂∇²ψ/∂w as full arrays (forward mode,
//!   one sweep per parameter),
//! * adjoint: the contraction λ·∂ψ/∂w + uᵀ∂∇ψ/∂w + W:∂∇²ψ/∂w in a single
//!   reverse sweep, which is what the training loop consumes.
//!
//! Spatial recursions, with a_0 = x, J_0 = I, H_0 = 0 and per-layer
//! pre-activation z_l = W_l a_{l-1} + b_l:
//!
//!   P_l = W_l J_{l-1},          J_l = diag(s_l) P_l,
//!   Q_l = W_l H_{l-1},          H_l = diag(r_l) (p_i p_iᵀ) + diag(s_l) Q_l,
//!
//! where s = act', r = act'' and H rows hold row-major flattened d x d
//! blocks. ψ, ∇ψ, ∇²ψ are the output-unit rows of a_L, J_L, H_L.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::cell::RefCell;

use super::{Differentials, Embedding};
use crate::error::{Error, Result};

/// Per-layer activation: tanh on hidden layers, identity on the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activation {
    Tanh,
    Identity,
}

/// The network. Weights are stored per layer; the flat view used by the
/// optimizer and the model file lists, for each layer in order, the weight
/// matrix row-major followed by the bias vector.
#[derive(Debug, Clone)]
pub struct MlpEmbedding {
    layer_sizes: Vec<usize>,
    w: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
}

impl MlpEmbedding {
    /// The architecture used throughout: d -> 32 -> 32 -> 1.
    pub fn default_layer_sizes(dim: usize) -> Vec<usize> {
        vec![dim, 32, 32, 1]
    }

    /// Zero-initialized network. `layer_sizes` runs from input to output and
    /// must end in a single scalar unit.
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::precondition(
                "layer_sizes needs at least an input and an output layer",
            ));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::precondition("output layer must have exactly 1 unit"));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::precondition("layer sizes must be positive"));
        }
        let w = (1..layer_sizes.len())
            .map(|l| DMatrix::zeros(layer_sizes[l], layer_sizes[l - 1]))
            .collect();
        let b = (1..layer_sizes.len())
            .map(|l| DVector::zeros(layer_sizes[l]))
            .collect();
        Ok(MlpEmbedding { layer_sizes, w, b })
    }

    /// Network with weights drawn uniformly from [-scale, scale].
    pub fn random(layer_sizes: Vec<usize>, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::new(layer_sizes)?;
        let mut flat = vec![0.0; net.param_count()];
        for v in &mut flat {
            *v = rng.gen_range(-scale..=scale);
        }
        net.set_weights_flat(&flat)?;
        Ok(net)
    }

    /// Network from a flat weight vector (layer-major, W row-major then b).
    pub fn from_flat(layer_sizes: Vec<usize>, flat: &[f64]) -> Result<Self> {
        let mut net = Self::new(layer_sizes)?;
        net.set_weights_flat(flat)?;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Number of weight layers L.
    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Total parameter count Σ_l (n_{l-1} + 1) n_l.
    pub fn param_count(&self) -> usize {
        (1..self.layer_sizes.len())
            .map(|l| (self.layer_sizes[l - 1] + 1) * self.layer_sizes[l])
            .sum()
    }

    /// Copies the parameters into a flat vector.
    pub fn weights_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.layer_count() {
            let w = &self.w[l];
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    out.push(w[(i, j)]);
                }
            }
            out.extend(self.b[l].iter());
        }
        out
    }

    /// Overwrites the parameters from a flat vector.
    pub fn set_weights_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "MlpEmbedding::set_weights_flat",
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        crate::error::ensure_finite(flat, "MlpEmbedding::set_weights_flat")?;
        let mut k = 0;
        for l in 0..self.layer_count() {
            let (rows, cols) = self.w[l].shape();
            for i in 0..rows {
                for j in 0..cols {
                    self.w[l][(i, j)] = flat[k];
                    k += 1;
                }
            }
            for i in 0..rows {
                self.b[l][i] = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer == self.layer_count() {
            Activation::Identity
        } else {
            Activation::Tanh
        }
    }

    /// Allocates a reusable workspace matching this architecture.
    pub fn workspace(&self) -> MlpWorkspace {
        MlpWorkspace::new(&self.layer_sizes)
    }

    /// Forward sweep filling `ws` with activations and spatial derivatives.
    /// With `want_hessian` false the Hessian recursion is skipped, which the
    /// first-order training loop uses.
    pub fn forward(&self, x: &DVector<f64>, want_hessian: bool, ws: &mut MlpWorkspace) -> Result<()> {
        let d = self.input_dim();
        crate::geometry::check_dim(d, x.len(), "MlpEmbedding::forward")?;
        crate::error::ensure_finite(x.as_slice(), "MlpEmbedding::forward input")?;
        debug_assert_eq!(ws.layers.len(), self.layer_sizes.len());

        ws.layers[0].a.copy_from(x);
        ws.hessian_valid = want_hessian;
        let d2 = d * d;
        let layer_count = self.layer_count();

        for l in 1..=layer_count {
            let (prev_slice, cur_slice) = ws.layers.split_at_mut(l);
            let prev = &prev_slice[l - 1];
            let cur = &mut cur_slice[0];
            let w = &self.w[l - 1];
            let n = w.nrows();

            // z = W a_prev + b, stored in-place in `a` before activation.
            cur.a.gemv(1.0, w, &prev.a, 0.0);
            cur.a += &self.b[l - 1];
            match self.activation(l) {
                Activation::Tanh => {
                    for i in 0..n {
                        let t = cur.a[i].tanh();
                        cur.a[i] = t;
                        cur.s[i] = 1.0 - t * t;
                        cur.r[i] = -2.0 * t * cur.s[i];
                    }
                }
                Activation::Identity => {
                    cur.s.fill(1.0);
                    cur.r.fill(0.0);
                }
            }

            cur.p.gemm(1.0, w, &prev.j, 0.0);
            for c in 0..d {
                for i in 0..n {
                    cur.j[(i, c)] = cur.s[i] * cur.p[(i, c)];
                }
            }

            if want_hessian {
                cur.q.gemm(1.0, w, &prev.h, 0.0);
                for r in 0..d {
                    for c in 0..d {
                        let k = r * d + c;
                        for i in 0..n {
                            cur.ro[(i, k)] = cur.p[(i, r)] * cur.p[(i, c)];
                        }
                    }
                }
                for k in 0..d2 {
                    for i in 0..n {
                        cur.h[(i, k)] = cur.r[i] * cur.ro[(i, k)] + cur.s[i] * cur.q[(i, k)];
                    }
                }
            }
        }
        Ok(())
    }

    /// Adds to `grad` the parameter gradient of the scalar contraction
    ///   λ ψ + uᵀ ∇ψ + W̄ : ∇²ψ
    /// evaluated from a workspace previously filled by [`Self::forward`].
    /// `seed_hessian` may only be present when the forward pass computed the
    /// Hessian recursion. `grad` has `param_count()` entries, flat layout.
    pub fn vjp_accumulate(
        &self,
        ws: &mut MlpWorkspace,
        seed_value: f64,
        seed_gradient: &DVector<f64>,
        seed_hessian: Option<&DMatrix<f64>>,
        grad: &mut [f64],
    ) -> Result<()> {
        let d = self.input_dim();
        let d2 = d * d;
        let layer_count = self.layer_count();
        if grad.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "MlpEmbedding::vjp_accumulate",
                expected: self.param_count(),
                actual: grad.len(),
            });
        }
        crate::geometry::check_dim(d, seed_gradient.len(), "MlpEmbedding::vjp_accumulate")?;
        let with_hessian = match seed_hessian {
            Some(m) => {
                crate::geometry::check_dim(d, m.nrows(), "MlpEmbedding::vjp_accumulate")?;
                crate::geometry::check_dim(d, m.ncols(), "MlpEmbedding::vjp_accumulate")?;
                if !ws.hessian_valid {
                    return Err(Error::precondition(
                        "vjp with a Hessian seed needs a forward pass with want_hessian",
                    ));
                }
                true
            }
            None => false,
        };

        // Seed the adjoints of the output layer (a single unit).
        {
            let top = &mut ws.layers[layer_count];
            top.abar[0] = seed_value;
            for c in 0..d {
                top.jbar[(0, c)] = seed_gradient[c];
            }
            if let Some(m) = seed_hessian {
                for r in 0..d {
                    for c in 0..d {
                        top.hbar[(0, r * d + c)] = m[(r, c)];
                    }
                }
            } else {
                top.hbar.fill(0.0);
            }
        }

        let mut offset = self.param_count();
        for l in (1..=layer_count).rev() {
            let (prev_slice, cur_slice) = ws.layers.split_at_mut(l);
            let prev = &mut prev_slice[l - 1];
            let cur = &mut cur_slice[0];
            let w = &self.w[l - 1];
            let n = w.nrows();
            let n_prev = w.ncols();
            offset -= (n_prev + 1) * n;
            let (gw, gb) = grad[offset..offset + (n_prev + 1) * n].split_at_mut(n_prev * n);

            cur.sbar.fill(0.0);
            cur.rbar.fill(0.0);

            // J = diag(s) P.
            for c in 0..d {
                for i in 0..n {
                    cur.pbar[(i, c)] = cur.s[i] * cur.jbar[(i, c)];
                    cur.sbar[i] += cur.jbar[(i, c)] * cur.p[(i, c)];
                }
            }

            if with_hessian {
                // H = diag(r) RO + diag(s) Q.
                for k in 0..d2 {
                    for i in 0..n {
                        let hb = cur.hbar[(i, k)];
                        cur.rbar[i] += hb * cur.ro[(i, k)];
                        cur.sbar[i] += hb * cur.q[(i, k)];
                        cur.qbar[(i, k)] = cur.s[i] * hb;
                    }
                }
                // RO row i is p_i p_iᵀ; its adjoint feeds P.
                for i in 0..n {
                    for r in 0..d {
                        let mut acc = 0.0;
                        for c in 0..d {
                            acc += (cur.hbar[(i, r * d + c)] + cur.hbar[(i, c * d + r)])
                                * cur.p[(i, c)];
                        }
                        cur.pbar[(i, r)] += cur.r[i] * acc;
                    }
                }
                // Q = W H_prev.
                for j in 0..n_prev {
                    for i in 0..n {
                        let mut acc = 0.0;
                        for k in 0..d2 {
                            acc += cur.qbar[(i, k)] * prev.h[(j, k)];
                        }
                        gw[i * n_prev + j] += acc;
                    }
                }
                if l > 1 {
                    prev.hbar.gemm_tr(1.0, w, &cur.qbar, 0.0);
                }
            }

            // P = W J_prev.
            for j in 0..n_prev {
                for i in 0..n {
                    let mut acc = 0.0;
                    for c in 0..d {
                        acc += cur.pbar[(i, c)] * prev.j[(j, c)];
                    }
                    gw[i * n_prev + j] += acc;
                }
            }
            if l > 1 {
                prev.jbar.gemm_tr(1.0, w, &cur.pbar, 0.0);
            }

            // Pre-activation adjoint. s and r are functions of z on tanh
            // layers only; on the identity output layer they are constants.
            match self.activation(l) {
                Activation::Tanh => {
                    for i in 0..n {
                        let a = cur.a[i];
                        let s = cur.s[i];
                        // act''' = -2 s (1 - 3 a²)
                        cur.zbar[i] = s * cur.abar[i]
                            + cur.r[i] * cur.sbar[i]
                            + (-2.0 * s * (1.0 - 3.0 * a * a)) * cur.rbar[i];
                    }
                }
                Activation::Identity => {
                    cur.zbar.copy_from(&cur.abar);
                }
            }

            // z = W a_prev + b.
            for j in 0..n_prev {
                let apj = prev.a[j];
                for i in 0..n {
                    gw[i * n_prev + j] += cur.zbar[i] * apj;
                }
            }
            for i in 0..n {
                gb[i] += cur.zbar[i];
            }
            if l > 1 {
                prev.abar.gemv_tr(1.0, w, &cur.zbar, 0.0);
            }
        }
        debug_assert_eq!(offset, 0);
        Ok(())
    }

    /// Full parameter derivatives of (ψ, ∇ψ, ∇²ψ) at `x`: one forward-mode
    /// sweep per parameter over the same layer recursions.
    pub fn param_derivatives(&self, x: &DVector<f64>) -> Result<MlpParamDerivatives> {
        let d = self.input_dim();
        let d2 = d * d;
        let p_total = self.param_count();
        let mut ws = self.workspace();
        self.forward(x, true, &mut ws)?;
        let mut delta = DeltaWorkspace::new(&self.layer_sizes);

        let mut out = MlpParamDerivatives {
            d_value: DVector::zeros(p_total),
            d_gradient: DMatrix::zeros(d, p_total),
            d_hessian: DMatrix::zeros(d2, p_total),
        };

        let mut col = 0;
        for lp in 1..=self.layer_count() {
            let n = self.layer_sizes[lp];
            let n_prev = self.layer_sizes[lp - 1];
            for i in 0..n {
                for j in 0..n_prev {
                    self.param_delta(lp, Seed::Weight(i, j), &ws, &mut delta);
                    self.collect_delta(&delta, col, &mut out);
                    col += 1;
                }
            }
            for i in 0..n {
                self.param_delta(lp, Seed::Bias(i), &ws, &mut delta);
                self.collect_delta(&delta, col, &mut out);
                col += 1;
            }
        }
        debug_assert_eq!(col, p_total);
        Ok(out)
    }

    /// Propagates the perturbation of one parameter of layer `lp` through the
    /// remaining layers, filling `delta` for layers lp..=L.
    fn param_delta(&self, lp: usize, seed: Seed, ws: &MlpWorkspace, delta: &mut DeltaWorkspace) {
        let d = self.input_dim();
        let d2 = d * d;
        for l in lp..=self.layer_count() {
            let w = &self.w[l - 1];
            let n = w.nrows();
            let n_prev = w.ncols();
            let cur = &ws.layers[l];
            let prev = &ws.layers[l - 1];
            let (dprev_slice, dcur_slice) = delta.layers.split_at_mut(l);
            let dprev = &dprev_slice[l - 1];
            let dcur = &mut dcur_slice[0];

            // dz, and the direct dW contributions to dP and dQ.
            if l == lp {
                dcur.dz.fill(0.0);
                dcur.dp.fill(0.0);
                dcur.dq.fill(0.0);
                match seed {
                    Seed::Weight(i, j) => {
                        dcur.dz[i] = prev.a[j];
                        for c in 0..d {
                            dcur.dp[(i, c)] = prev.j[(j, c)];
                        }
                        for k in 0..d2 {
                            dcur.dq[(i, k)] = prev.h[(j, k)];
                        }
                    }
                    Seed::Bias(i) => {
                        dcur.dz[i] = 1.0;
                    }
                }
            } else {
                dcur.dz.gemv(1.0, w, &dprev.da, 0.0);
                dcur.dp.gemm(1.0, w, &dprev.dj, 0.0);
                dcur.dq.gemm(1.0, w, &dprev.dh, 0.0);
            }

            match self.activation(l) {
                Activation::Tanh => {
                    for i in 0..n {
                        let da = cur.s[i] * dcur.dz[i];
                        let ds = -2.0 * cur.a[i] * da;
                        dcur.da[i] = da;
                        dcur.ds[i] = ds;
                        dcur.dr[i] = -2.0 * (da * cur.s[i] + cur.a[i] * ds);
                    }
                }
                Activation::Identity => {
                    dcur.da.copy_from(&dcur.dz);
                    dcur.ds.fill(0.0);
                    dcur.dr.fill(0.0);
                }
            }

            for c in 0..d {
                for i in 0..n {
                    dcur.dj[(i, c)] = dcur.ds[i] * cur.p[(i, c)] + cur.s[i] * dcur.dp[(i, c)];
                }
            }
            for r in 0..d {
                for c in 0..d {
                    let k = r * d + c;
                    for i in 0..n {
                        let dro = dcur.dp[(i, r)] * cur.p[(i, c)] + cur.p[(i, r)] * dcur.dp[(i, c)];
                        dcur.dh[(i, k)] = dcur.dr[i] * cur.ro[(i, k)]
                            + cur.r[i] * dro
                            + dcur.ds[i] * cur.q[(i, k)]
                            + cur.s[i] * dcur.dq[(i, k)];
                    }
                }
            }
            let _ = n_prev;
        }
    }

    fn collect_delta(&self, delta: &DeltaWorkspace, col: usize, out: &mut MlpParamDerivatives) {
        let d = self.input_dim();
        let top = &delta.layers[self.layer_count()];
        out.d_value[col] = top.da[0];
        for c in 0..d {
            out.d_gradient[(c, col)] = top.dj[(0, c)];
        }
        for k in 0..d * d {
            out.d_hessian[(k, col)] = top.dh[(0, k)];
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Seed {
    Weight(usize, usize),
    Bias(usize),
}

/// Parameter derivatives of the triple (ψ, ∇ψ, ∇²ψ), one column per
/// parameter in the flat layout. Hessian rows are row-major flattened.
#[derive(Debug, Clone)]
pub struct MlpParamDerivatives {
    /// ∂ψ/∂w, length P.
    pub d_value: DVector<f64>,
    /// ∂∇ψ/∂w, d x P.
    pub d_gradient: DMatrix<f64>,
    /// ∂∇²ψ/∂w, d² x P, each column a row-major d x d block.
    pub d_hessian: DMatrix<f64>,
}

/// Per-layer activation and derivative state, plus adjoint buffers for the
/// reverse sweep. Layer 0 is the input: a = x, J = I, H = 0.
#[derive(Debug, Clone)]
struct LayerState {
    a: DVector<f64>,
    s: DVector<f64>,
    r: DVector<f64>,
    p: DMatrix<f64>,
    j: DMatrix<f64>,
    q: DMatrix<f64>,
    h: DMatrix<f64>,
    ro: DMatrix<f64>,
    abar: DVector<f64>,
    sbar: DVector<f64>,
    rbar: DVector<f64>,
    zbar: DVector<f64>,
    pbar: DMatrix<f64>,
    jbar: DMatrix<f64>,
    qbar: DMatrix<f64>,
    hbar: DMatrix<f64>,
}

impl LayerState {
    fn new(n: usize, d: usize) -> Self {
        let d2 = d * d;
        LayerState {
            a: DVector::zeros(n),
            s: DVector::zeros(n),
            r: DVector::zeros(n),
            p: DMatrix::zeros(n, d),
            j: DMatrix::zeros(n, d),
            q: DMatrix::zeros(n, d2),
            h: DMatrix::zeros(n, d2),
            ro: DMatrix::zeros(n, d2),
            abar: DVector::zeros(n),
            sbar: DVector::zeros(n),
            rbar: DVector::zeros(n),
            zbar: DVector::zeros(n),
            pbar: DMatrix::zeros(n, d),
            jbar: DMatrix::zeros(n, d),
            qbar: DMatrix::zeros(n, d2),
            hbar: DMatrix::zeros(n, d2),
        }
    }
}

/// Reusable buffers for forward and reverse sweeps. Allocate once per thread
/// of work and pass to [`MlpEmbedding::forward`].
#[derive(Debug, Clone)]
pub struct MlpWorkspace {
    layers: Vec<LayerState>,
    layer_sizes: Vec<usize>,
    hessian_valid: bool,
}

impl MlpWorkspace {
    fn new(layer_sizes: &[usize]) -> Self {
        let d = layer_sizes[0];
        let mut layers: Vec<LayerState> =
            layer_sizes.iter().map(|&n| LayerState::new(n, d)).collect();
        // Input layer: J_0 = I, H_0 = 0, constants for the whole lifetime.
        layers[0].j.fill_with_identity();
        MlpWorkspace {
            layers,
            layer_sizes: layer_sizes.to_vec(),
            hessian_valid: false,
        }
    }

    fn matches(&self, layer_sizes: &[usize]) -> bool {
        self.layer_sizes == layer_sizes
    }

    /// ψ from the last forward sweep.
    pub fn value(&self) -> f64 {
        self.layers.last().unwrap().a[0]
    }

    /// ∇ψ from the last forward sweep.
    pub fn gradient(&self) -> DVector<f64> {
        let top = self.layers.last().unwrap();
        DVector::from_fn(top.j.ncols(), |c, _| top.j[(0, c)])
    }

    pub fn gradient_into(&self, out: &mut DVector<f64>) {
        let top = self.layers.last().unwrap();
        for c in 0..top.j.ncols() {
            out[c] = top.j[(0, c)];
        }
    }

    /// ∇²ψ from the last forward sweep; requires `want_hessian`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let top = self.layers.last().unwrap();
        let d = top.j.ncols();
        DMatrix::from_fn(d, d, |r, c| top.h[(0, r * d + c)])
    }

    pub fn hessian_into(&self, out: &mut DMatrix<f64>) {
        let top = self.layers.last().unwrap();
        let d = top.j.ncols();
        for r in 0..d {
            for c in 0..d {
                out[(r, c)] = top.h[(0, r * d + c)];
            }
        }
    }
}

/// Forward-mode delta buffers for [`MlpEmbedding::param_derivatives`].
#[derive(Debug)]
struct DeltaWorkspace {
    layers: Vec<DeltaLayer>,
}

#[derive(Debug)]
struct DeltaLayer {
    dz: DVector<f64>,
    da: DVector<f64>,
    ds: DVector<f64>,
    dr: DVector<f64>,
    dp: DMatrix<f64>,
    dj: DMatrix<f64>,
    dq: DMatrix<f64>,
    dh: DMatrix<f64>,
}

impl DeltaWorkspace {
    fn new(layer_sizes: &[usize]) -> Self {
        let d = layer_sizes[0];
        let d2 = d * d;
        DeltaWorkspace {
            layers: layer_sizes
                .iter()
                .map(|&n| DeltaLayer {
                    dz: DVector::zeros(n),
                    da: DVector::zeros(n),
                    ds: DVector::zeros(n),
                    dr: DVector::zeros(n),
                    dp: DMatrix::zeros(n, d),
                    dj: DMatrix::zeros(n, d),
                    dq: DMatrix::zeros(n, d2),
                    dh: DMatrix::zeros(n, d2),
                })
                .collect(),
        }
    }
}

thread_local! {
    static SHARED_WS: RefCell<Option<MlpWorkspace>> = const { RefCell::new(None) };
}

impl Embedding for MlpEmbedding {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn differentials(&self, x: &DVector<f64>, _v: Option<&DVector<f64>>) -> Result<Differentials> {
        SHARED_WS.with(|cell| {
            let mut slot = cell.borrow_mut();
            let reuse = matches!(&*slot, Some(ws) if ws.matches(&self.layer_sizes));
            if !reuse {
                *slot = Some(self.workspace());
            }
            let ws = slot.as_mut().unwrap();
            self.forward(x, true, ws)?;
            Ok(Differentials {
                value: ws.value(),
                gradient: ws.gradient(),
                hessian: ws.hessian(),
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn param_count_matches_layout() {
        let net = MlpEmbedding::new(vec![2, 32, 32, 1]).unwrap();
        assert_eq!(net.param_count(), 32 * 3 + 32 * 33 + 33);
        assert_eq!(net.weights_flat().len(), net.param_count());
    }

    #[test]
    fn single_linear_layer_is_affine() {
        // ψ = w"x + b: gradient is w everywhere, Hessian vanishes.
        let mut net = MlpEmbedding::new(vec![2, 1]).unwrap();
        net.set_weights_flat(&[3.0, -1.5, 0.25]).unwrap();
        let d = net
            .differentials(&dvector![0.4, -2.0], None)
            .unwrap();
        assert!((d.value - (3.0 * 0.4 + 1.5 * 2.0 + 0.25)).abs() < 1e-15);
        assert!((d.gradient[0] - 3.0).abs() < 1e-15);
        assert!((d.gradient[1] + 1.5).abs() < 1e-15);
        assert_eq!(d.hessian, DMatrix::zeros(2, 2));
    }

    #[test]
    fn zero_network_is_flat() {
        let net = MlpEmbedding::new(MlpEmbedding::default_layer_sizes(3)).unwrap();
        let d = net.differentials(&dvector![1.0, 2.0, 3.0], None).unwrap();
        assert_eq!(d.value, 0.0);
        assert_eq!(d.gradient.norm(), 0.0);
        assert_eq!(d.hessian.norm(), 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MlpEmbedding::new(vec![2]).is_err());
        assert!(MlpEmbedding::new(vec![2, 16, 2]).is_err());
        let mut net = MlpEmbedding::new(vec![2, 4, 1]).unwrap();
        assert!(net.set_weights_flat(&[0.0; 3]).is_err());
        assert!(net
            .differentials(&dvector![1.0, 2.0, 3.0], None)
            .is_err());
    }

    #[test]
    fn weights_round_trip_through_flat_view() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        use rand::SeedableRng;
        let net = MlpEmbedding::random(vec![2, 5, 4, 1], 0.5, &mut rng).unwrap();
        let flat = net.weights_flat();
        let rebuilt = MlpEmbedding::from_flat(vec![2, 5, 4, 1], &flat).unwrap();
        assert_eq!(flat, rebuilt.weights_flat());
    }
}
