pub mod construction;
pub mod dd;
pub mod error;
pub mod expsum;
pub mod mat2;

pub use error::{Error, Result};
pub mod flatness;
pub mod search;
pub mod io;
pub mod riesz;
pub mod flowsim;
pub mod planar;
