//! Differentiable orthographic Gaussian splatting for cryo-EM style
//! density reconstruction from posed projection images.

pub mod bench;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod grid;
pub mod image;
pub mod io;
pub mod optics;
pub mod sim;
pub mod splat;
pub mod train;

pub use error::{Error, Result};
pub use gmm::{GaussianMixture, GaussianParams, Mode};
pub use grid::GridSpec;
pub use image::RenderedImage;
pub use optics::CtfParams;
pub use splat::Pose;
