pub mod appendix_b;
pub mod channels;
pub mod divisibility;
pub mod error;
pub mod formats;
pub mod gcmps;
pub mod lindblad;
pub mod mps;
pub mod numerics;
pub mod projectors;
pub mod random;

pub use error::{Error, Result};
