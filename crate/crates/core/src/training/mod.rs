//! Dice-distance loss, Adam updates, early stopping and the epoch loop.

mod adam;
mod early_stopping;
mod fit;
mod loss;

pub use adam::{adam_step, AdamState};
pub use early_stopping::{EarlyStopping, Verdict};
pub use fit::{
    context_loss_and_grads, fit, write_history_csv, ContextSet, EpochRecord, FitOutcome,
    FitStatus, TrainConfig,
};
pub use loss::{dice_distance, loss, ClassWeights, DICE_SMOOTH};
