//! Physics-informed neural networks with trainable activation functions.
//!
//! The crate trains fully-connected networks to satisfy PDE constraints by
//! penalizing equation residuals at collocation points. Residuals need
//! derivatives of the network output with respect to its *inputs* (up to
//! third order), and the training loop needs exact gradients of the loss
//! with respect to every trainable scalar — including paths through those
//! input-derivatives. Both are provided by a two-tier automatic
//! differentiation scheme:
//!
//! - [`jet`] propagates truncated derivative bundles (jets) of the network
//!   output through arbitrary arithmetic and smooth unary functions,
//! - [`tape`] records scalar expressions and replays them in reverse for
//!   parameter gradients,
//! - [`batch`] is the throughput path: it evaluates the affine/activation
//!   chain for whole point batches at once and back-propagates adjoints
//!   into the parameter store.
//!
//! On top of that sit the activation families ([`activation`]), the
//! benchmark problems ([`problems`]), ground-truth reference solvers
//! ([`reference`]), the optimizers and experiment loop ([`training`]) and
//! the empirical neural-tangent-kernel diagnostic ([`ntk`]).

pub mod activation;
pub mod batch;
pub mod error;
pub mod jet;
pub mod linalg;
pub mod network;
pub mod ntk;
pub mod problems;
pub mod reference;
pub mod scalar;
pub mod store;
pub mod tape;
pub mod training;

pub use error::{Error, Result};
pub use jet::{Dim, Jet, JetBasis};
pub use scalar::{Dual, Scalar};
pub use store::ParameterStore;
pub use tape::{GradientVector, Tape, Var};
