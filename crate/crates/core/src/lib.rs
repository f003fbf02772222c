//! Curvature algebra and stability operators of hypersurfaces and
//! codimension-one foliations.

pub mod ambient;
pub mod error;
pub mod expr;
pub mod grid;
pub mod hypersurface;
pub mod leafcalc;
pub mod scenario;
pub mod stability;
pub mod symcurv;
pub mod testfns;
pub mod varfields;

pub use error::{GeomError, Result};
