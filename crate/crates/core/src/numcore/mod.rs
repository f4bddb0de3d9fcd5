//! Numerical core: seeded randomness, small dense matrices, tape-based
//! reverse-mode differentiation, dense/LSTM layers and Adam.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod nn;
pub mod params;
pub mod rng;
pub mod tape;

pub use adam::Adam;
pub use matrix::Matrix;
pub use nn::{Activation, LayerSpec, Lstm, LstmState, Mlp};
pub use params::{ParamGraph, ParamId};
pub use rng::Rng;
pub use tape::{sigmoid, Tape, Var};
