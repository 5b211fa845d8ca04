//! The feed-forward BLM solver: stacked context embeddings in, a predicted
//! answer embedding out, trained with a cosine max-margin objective.

mod model;
mod train;

pub use model::{Layer, SolverModel, CHECKPOINT_MAGIC};
pub use train::{
    cosine, history_csv, loss, loss_grad, param_grad, predict, prepare, select_answer, train,
    train_on, LossAgg, Prepared, TrainConfig, TrainScope,
};
