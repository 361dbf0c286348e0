//! Policy-iteration training of fully connected recurrent networks for
//! free-running sequence replay.
//!
//! The network `u_{t+1} = σ(F·u_t + G·[v_t; 1])` reads its predictions off the
//! first `m` hidden units. Training minimizes a discounted sum of k-step
//! free-running prediction errors by alternating policy evaluation (rolling
//! the current weights over the series) with gradient-based policy
//! improvement, guarded by a line search that keeps the discounted cost
//! strictly decreasing.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the element type to `f64`.

pub mod baseline;
pub mod cli;
pub mod cost;
pub mod error;
pub mod gradient;
pub mod io;
pub mod linalg;
pub mod net;
pub mod optimizer;
pub mod replay;
pub mod scalar;
pub mod series;

pub use error::{Error, Result};
pub use net::{Shape, Squash, Tanh};
pub use optimizer::{StateUpdate, StepPolicy, Termination};
pub use scalar::Scalar;
pub use series::{PadMode, SeriesKind, SineComponent};

pub type Matrix = linalg::Matrix<f64>;
pub type Weights = net::Weights<f64>;
pub type HiddenState = net::HiddenState<f64>;
pub type StateSeq = net::StateSeq<f64>;
pub type Series = series::Series<f64>;
pub type Hyperparams = cost::Hyperparams<f64>;
pub type CostBreakdown = cost::CostBreakdown<f64>;
pub type Gradient = gradient::Gradient<f64>;
pub type TrainConfig = optimizer::TrainConfig<f64>;
pub type TrainTrace = optimizer::TrainTrace<f64>;
pub type TraceRow = optimizer::TraceRow<f64>;
pub type TrainResult = optimizer::TrainResult<f64>;
