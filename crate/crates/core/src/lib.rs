pub mod bloch;
pub mod boltzmann;
pub mod duhamel;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod modular;
pub mod numerics;
pub mod phasespace;
pub mod smallmat;
pub mod symbolcalc;
pub mod theta;

pub use error::{BoltzError, Result};
