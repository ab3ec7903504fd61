//! Linear operators used by the measurement model and the regularizer.
//!
//! Every operator maps a real image (flattened, length `in_len`) to a real or
//! complex vector of length `out_len`. Adjoints are taken with respect to the
//! real inner product, so for complex codomains `adjoint` returns
//! `Re(A^H v)`.

mod fourier;
mod gradient;
mod haar;
mod masking;
mod power;

pub use fourier::{make_radial_fourier, FourierOperator, SamplingPattern};
pub use gradient::{make_gradient_op, GradientOperator};
pub use haar::HaarOperator;
pub use masking::{embed, restrict, restrict_complement, MaskingOperator};
pub use power::{power_iteration, spectral_norm, PowerEstimate, PowerOptions};

use crate::error::Result;
use crate::linalg::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    FourierMasked,
    Gradient,
    Haar,
    Masking,
    Composite,
}

pub trait LinearOperator: Send + Sync {
    type Scalar: Scalar;

    fn kind(&self) -> OperatorKind;
    fn in_len(&self) -> usize;
    fn out_len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<Self::Scalar>>;
    fn adjoint(&self, v: &[Self::Scalar]) -> Result<Vec<f64>>;

    /// `A^T A x`.
    fn normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.adjoint(&self.apply(x)?)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    type Scalar = T::Scalar;

    fn kind(&self) -> OperatorKind {
        (**self).kind()
    }
    fn in_len(&self) -> usize {
        (**self).in_len()
    }
    fn out_len(&self) -> usize {
        (**self).out_len()
    }
    fn apply(&self, x: &[f64]) -> Result<Vec<Self::Scalar>> {
        (**self).apply(x)
    }
    fn adjoint(&self, v: &[Self::Scalar]) -> Result<Vec<f64>> {
        (**self).adjoint(v)
    }
}

/// Real-valued operator that can be chosen at runtime as the sparsifying transform.
pub enum Sparsifier {
    Gradient(GradientOperator),
    Haar(HaarOperator),
}

impl Sparsifier {
    pub fn gradient(n: usize) -> Result<Self> {
        Ok(Sparsifier::Gradient(make_gradient_op(n)?))
    }

    pub fn haar(n: usize) -> Result<Self> {
        Ok(Sparsifier::Haar(HaarOperator::new(n)?))
    }

    fn inner(&self) -> &dyn LinearOperator<Scalar = f64> {
        match self {
            Sparsifier::Gradient(g) => g,
            Sparsifier::Haar(h) => h,
        }
    }
}

impl LinearOperator for Sparsifier {
    type Scalar = f64;

    fn kind(&self) -> OperatorKind {
        self.inner().kind()
    }
    fn in_len(&self) -> usize {
        self.inner().in_len()
    }
    fn out_len(&self) -> usize {
        self.inner().out_len()
    }
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inner().apply(x)
    }
    fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.inner().adjoint(v)
    }
}
