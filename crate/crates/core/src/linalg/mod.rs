//! Small dense and banded linear algebra kernels used by the field and sampler code.

mod banded;
mod gauss_hermite;

pub use banded::{BandedSym, BorderedFactor};
pub use gauss_hermite::GaussHermite;
