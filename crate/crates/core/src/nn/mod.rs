//! Neural-network building blocks on top of the autodiff tape: parameter
//! store, layers, optimizers, and the checkpoint format.

pub mod checkpoint;
pub mod init;
pub mod layers;
pub mod optim;
pub mod param;
pub mod session;

pub use layers::{BatchNorm2d, Conv2d, Linear};
pub use optim::{Adam, SgdMomentum};
pub use param::{ParamId, ParamStore};
pub use session::Session;
