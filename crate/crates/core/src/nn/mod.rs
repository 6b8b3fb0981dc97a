//! Small dense networks with hand-written reverse-mode gradients, Adam and
//! a uniform replay buffer: everything SAC and DQN need, in `f64`.

mod adam;
mod mlp;
mod replay;

pub use adam::Adam;
pub use mlp::{Dense, ForwardCache, Gradients, Mlp, NetMeta, NetSpec};
pub use replay::{ReplayBuffer, Transition};
