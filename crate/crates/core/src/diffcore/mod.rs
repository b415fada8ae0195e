//! Conditional latent diffusion: noise schedule, forward noising, the joint
//! denoiser + conditioning-head training loop, and the marginal-equivalence
//! property check.

mod marginal;
mod schedule;
mod train;

pub use marginal::{conditional_marginal_property_check, MarginalReport, MomentCheck};
pub use schedule::{make_linear_schedule, q_sample, q_sample_batch, NoiseSchedule};
pub use train::{
    train_diffusion, DiffusionCheckpoint, DiffusionConfig, DiffusionModel, DIFFUSION_FORMAT,
};
