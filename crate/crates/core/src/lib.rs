//! Bayesian uncertainty quantification by optimization for imaging inverse
//! problems.
//!
//! The pipeline is: simulate radially subsampled Fourier data ([`sim`]),
//! compute a constrained MAP estimate with a primal-dual solver
//! ([`map_solver`]), build the conservative credible region around it
//! ([`bayes`]), then test whether a structure in the MAP is supported by the
//! data, either with the original two-image formulation ([`buqo`]) or with
//! the plug-and-play formulation driven by an inpainting operator ([`pnp`],
//! [`inpaint`]).

pub mod bayes;
pub mod buqo;
pub mod error;
pub mod image;
pub mod inpaint;
pub mod linalg;
pub mod map_solver;
pub mod operators;
pub mod pnp;
pub mod prox;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
pub use image::{Image, StructureMask};
