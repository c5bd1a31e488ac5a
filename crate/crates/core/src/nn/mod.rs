//! Minimal dense network substrate for the aligners.

mod adam;
mod gradcheck;
mod mlp;
mod schedule;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use gradcheck::{gradient_check, GradCheckReport, DEFAULT_SAMPLE, DEFAULT_STEP};
pub use mlp::{Dense, ForwardCache, Mlp, MlpGrads};
pub use schedule::{lr_at, LrSchedule};
