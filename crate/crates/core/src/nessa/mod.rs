//! Learned MLP aligners between two embedding spaces.
//!
//! * `M1`: `F(r_Y) ≈ r_X`, scored as `cos(e_X, F(r_Y))`
//! * `M2`: `F(e_X) ≈ e_Y`, scored as `cos(F(e_X), r_Y)`
//! * `M3`: `F1(e_X)` and `F2(r_Y)` in a new space trained contrastively,
//!   anchored to Y by two regression terms, scored as `cos(F1(e_X), F2(r_Y))`

mod data;
mod gradcheck;
mod loss;
mod train;

pub use data::{sample_negative_bank, NegativeBank, PairBatch, PairedData};
pub use gradcheck::{check_all_losses, LossCheck};
pub use loss::{loss_m1, loss_m2, loss_m3, softmax_rows, LossWeights, M3Loss};
pub use train::{
    align_profiles, apply_aligner, map_paired, train, Checkpoint, EpochLog, NessaConfig, Side,
    TrainOutcome, Variant,
};
