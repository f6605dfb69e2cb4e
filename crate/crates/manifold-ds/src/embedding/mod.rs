//! Scalar height fields ψ: R^d -> R and their differentials.
//!
//! Every d-dimensional chart point x is lifted to the graph point
//! Ψ(x) = [x; ψ(x)] in R^(d+1). The geometry module only ever needs the
//! value, spatial gradient and spatial Hessian of ψ, so that triple is the
//! whole trait surface. Velocity-gated deformations make ψ depend on the
//! query velocity as well; plain embeddings ignore it.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

mod bump;
mod composite;
mod mlp;
mod rbf;

pub use bump::{bump_alpha, BumpConfig, BumpDifferentials};
pub use composite::CompositeEmbedding;
pub use mlp::{MlpEmbedding, MlpParamDerivatives, MlpWorkspace};
pub use rbf::{
    sigma_from_radius, AmbientRbfDeformation, GateParams, KernelKind, RbfDeformation, RbfSource,
};

/// Value, gradient and Hessian of a height field at one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct Differentials {
    pub value: f64,
    /// ∇ψ, length d.
    pub gradient: DVector<f64>,
    /// ∇²ψ, d x d, symmetric.
    pub hessian: DMatrix<f64>,
}

impl Differentials {
    /// A zero field of dimension `d` (flat embedding).
    pub fn zero(d: usize) -> Self {
        Differentials {
            value: 0.0,
            gradient: DVector::zeros(d),
            hessian: DMatrix::zeros(d, d),
        }
    }
}

/// A scalar height field with first and second spatial derivatives.
pub trait Embedding: Send + Sync {
    /// Chart dimension d.
    fn dim(&self) -> usize;

    /// Evaluates ψ, ∇ψ and ∇²ψ at `x`.
    ///
    /// `v` is the query velocity. Velocity-gated embeddings require it and
    /// return a precondition error when it is absent; all others ignore it.
    fn differentials(&self, x: &DVector<f64>, v: Option<&DVector<f64>>) -> Result<Differentials>;

    /// True when [`Embedding::differentials`] requires the velocity argument.
    fn is_velocity_gated(&self) -> bool {
        false
    }
}

/// The flat embedding ψ ≡ 0. Its pullback metric is the identity, which makes
/// it the reference case for every reduction test.
#[derive(Debug, Clone)]
pub struct FlatEmbedding {
    dim: usize,
}

impl FlatEmbedding {
    pub fn new(dim: usize) -> Self {
        FlatEmbedding { dim }
    }
}

impl Embedding for FlatEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn differentials(&self, x: &DVector<f64>, _v: Option<&DVector<f64>>) -> Result<Differentials> {
        crate::geometry::check_dim(self.dim, x.len(), "FlatEmbedding::differentials")?;
        Ok(Differentials::zero(self.dim))
    }
}
