//! Inpainting operators `G`: keep pixels outside a structure mask and
//! synthesize the pixels inside it.
//!
//! Three implementations share the [`Inpainter`] contract: a greedy
//! onion-peel averaging operator, a harmonic (discrete Laplace) inpainter,
//! and a gated-convolution network evaluated with a hand-written reverse pass.

mod cnn;
mod gdnw;
mod harmonic;
mod onion;

pub use cnn::{CnnCache, CnnInpainter};
pub use gdnw::{CnnWeights, Layer, LayerKind, GDNW_MAGIC, GDNW_VERSION, KERNEL};
pub use harmonic::{harmonic_inpaint, HarmonicInpainter};
pub use onion::{build_onion_inpainter, OnionInpainter, PeelStep};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, StructureMask};
use crate::operators::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InpainterKind {
    Onion,
    Harmonic,
    Cnn,
}

impl std::str::FromStr for InpainterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onion" => Ok(Self::Onion),
            "harmonic" => Ok(Self::Harmonic),
            "cnn" => Ok(Self::Cnn),
            other => Err(Error::Config(format!("unknown inpainter '{other}'"))),
        }
    }
}

/// Output of a forward evaluation, plus whatever the reverse pass needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub output: Image,
    cache: Option<CnnCache>,
}

impl ForwardPass {
    fn plain(output: Image) -> Self {
        Self { output, cache: None }
    }

    /// Drops cached activations, keeping only the output.
    pub fn without_cache(self) -> Self {
        Self::plain(self.output)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }
}

pub trait Inpainter: Send + Sync {
    fn kind(&self) -> InpainterKind;
    fn mask(&self) -> &StructureMask;

    /// `G(x)` with the state needed by [`vjp`](Self::vjp).
    fn forward(&self, x: &Image) -> Result<ForwardPass>;

    /// `J_G(x)^T u` at the point of a previous forward pass.
    fn vjp(&self, pass: &ForwardPass, u: &Image) -> Result<Image>;

    fn apply(&self, x: &Image) -> Result<Image> {
        Ok(self.forward(x)?.output)
    }
}

/// Linear inpainting rule `L`: complement values (in index order) to mask values.
pub trait LinearInpainter: LinearOperator<Scalar = f64> {
    fn inpaint_mask(&self) -> &StructureMask;
}

/// `G(x) = M^c x` off the mask and `L M^c x` on it.
pub(crate) fn linear_apply<L: LinearInpainter + ?Sized>(l: &L, x: &Image) -> Result<Image> {
    let mask = l.inpaint_mask();
    mask.check_image(x, "inpaint")?;
    let xs = x.as_slice();
    let comp: Vec<f64> = mask.complement_set().iter().map(|&k| xs[k]).collect();
    let fill = l.apply(&comp)?;
    let mut out = x.clone();
    let o = out.as_mut_slice();
    for (&k, v) in mask.index_set().iter().zip(fill) {
        o[k] = v;
    }
    Ok(out)
}

/// `J_G^T u = (1-m) u + M^c^T L^T M u`.
pub(crate) fn linear_vjp<L: LinearInpainter + ?Sized>(l: &L, u: &Image) -> Result<Image> {
    let mask = l.inpaint_mask();
    mask.check_image(u, "inpaint vjp")?;
    let us = u.as_slice();
    let on_mask: Vec<f64> = mask.index_set().iter().map(|&k| us[k]).collect();
    let back = l.adjoint(&on_mask)?;
    let mut out = vec![0.0; us.len()];
    for (&k, b) in mask.complement_set().iter().zip(back) {
        out[k] = us[k] + b;
    }
    Image::new(u.n(), out)
}

macro_rules! linear_inpainter_impl {
    ($t:ty, $kind:expr) => {
        impl Inpainter for $t {
            fn kind(&self) -> InpainterKind {
                $kind
            }
            fn mask(&self) -> &StructureMask {
                self.inpaint_mask()
            }
            fn forward(&self, x: &Image) -> Result<ForwardPass> {
                Ok(ForwardPass::plain(linear_apply(self, x)?))
            }
            fn vjp(&self, _pass: &ForwardPass, u: &Image) -> Result<Image> {
                linear_vjp(self, u)
            }
        }
    };
}

linear_inpainter_impl!(OnionInpainter, InpainterKind::Onion);
linear_inpainter_impl!(HarmonicInpainter, InpainterKind::Harmonic);

/// Runtime-selected inpainter.
pub enum InpaintingOperator {
    Onion(OnionInpainter),
    Harmonic(HarmonicInpainter),
    Cnn(CnnInpainter),
}

impl InpaintingOperator {
    /// Builds the operator for `mask`; `weights` is required for the CNN.
    pub fn build(kind: InpainterKind, mask: &StructureMask, weights: Option<CnnWeights>) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::DegenerateStructure("structure mask is empty".into()));
        }
        Ok(match kind {
            InpainterKind::Onion => Self::Onion(build_onion_inpainter(mask)?),
            InpainterKind::Harmonic => Self::Harmonic(HarmonicInpainter::new(mask)?),
            InpainterKind::Cnn => {
                let w = weights.ok_or_else(|| Error::Config("the cnn inpainter needs a weight file".into()))?;
                Self::Cnn(CnnInpainter::new(w, mask)?)
            }
        })
    }

    /// The linear rule `L`, when there is one.
    pub fn linear(&self) -> Option<&dyn LinearInpainter> {
        match self {
            Self::Onion(g) => Some(g),
            Self::Harmonic(g) => Some(g),
            Self::Cnn(_) => None,
        }
    }

    fn inner(&self) -> &dyn Inpainter {
        match self {
            Self::Onion(g) => g,
            Self::Harmonic(g) => g,
            Self::Cnn(g) => g,
        }
    }
}

impl Inpainter for InpaintingOperator {
    fn kind(&self) -> InpainterKind {
        self.inner().kind()
    }
    fn mask(&self) -> &StructureMask {
        self.inner().mask()
    }
    fn forward(&self, x: &Image) -> Result<ForwardPass> {
        self.inner().forward(x)
    }
    fn vjp(&self, pass: &ForwardPass, u: &Image) -> Result<Image> {
        self.inner().vjp(pass, u)
    }
}

impl<T: Inpainter + ?Sized> Inpainter for &T {
    fn kind(&self) -> InpainterKind {
        (**self).kind()
    }
    fn mask(&self) -> &StructureMask {
        (**self).mask()
    }
    fn forward(&self, x: &Image) -> Result<ForwardPass> {
        (**self).forward(x)
    }
    fn vjp(&self, pass: &ForwardPass, u: &Image) -> Result<Image> {
        (**self).vjp(pass, u)
    }
}
