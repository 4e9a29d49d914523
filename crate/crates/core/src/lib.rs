pub mod autodiff;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod layers;
pub mod meanfield;
pub mod num;
pub mod topo;
pub mod training;

pub use error::{Result, SsbError};
pub use layers::{CapsuleState, EquivariantWeights, Family, GroupElement, InitScheme, Network};
pub use num::{Complex, QuadratureRule, RngStream};
