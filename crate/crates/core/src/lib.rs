//! Rademacher chaos toolkit: kernel contraction algebra, exact chaos
//! decompositions over weighted hypercubes, the Ornstein–Uhlenbeck structure
//! with its exchangeable-pair coupling, and normal-approximation bounds.

pub mod chaos;
pub mod bounds;
pub mod comb;
pub mod error;
pub mod gaussian;
pub mod gen;
pub mod hypercube;
pub mod kernel;
pub mod law;
pub mod ou;
pub mod sampling;

pub use chaos::{walsh_decompose, ChaosDecomposition};
pub use error::{Error, Result};
pub use hypercube::HypercubeFunction;
pub use kernel::Kernel;
pub use law::RademacherLaw;
