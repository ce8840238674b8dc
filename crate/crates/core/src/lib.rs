//! Incentive-compatible contract menus for a typed AIGC service market,
//! generated by a conditional denoising-diffusion policy trained with
//! clipped double-Q learning, alongside a PPO baseline and an exact
//! small-scale oracle.

pub mod market;
pub mod oracle;
pub mod nn;
pub mod curves;
pub mod eval;
pub mod persist;
pub mod diffusion;
pub mod ppo;
pub mod harness;
