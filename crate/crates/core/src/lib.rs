//! Equation learner (EQL) networks.

// `!(x > 0.0)` style checks are there to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod eql_net;
pub mod error;
pub mod expr;
pub mod extract;
pub mod funcset;
pub mod optim;
pub mod regularizer;
pub mod scalar;
pub mod trainer;

pub use error::{EqlError, Result};
pub use eql_net::{EqlParams, Matrix, SparsityReport};
pub use expr::{Expr, Style, VarBindings};
pub use funcset::{FuncKind, FuncLayout};
pub use regularizer::RegConfig;
pub use scalar::Scalar;
pub use trainer::{TrainConfig, TrainHistory};

pub type EqlParams64 = EqlParams<f64>;
pub type EqlParams32 = EqlParams<f32>;
pub type RmsState64 = optim::RmsState<f64>;
pub type RmsState32 = optim::RmsState<f32>;
