//! Minimal dynamic-kernel mask head, set-prediction losses and their exact
//! gradients.
//!
//! Each kernel `K^i_n` produces a mask `M^i_n = sigmoid(K^i_n . F)` over the
//! `[C, H, W]` feature map, then is refined by mask-weighted pooling and a
//! shared linear residual:
//!
//! ```text
//! g^i_n     = sum_x M^i_n(x) F(x) / (sum_x M^i_n(x) + 1e-6)
//! K^{i+1}_n = K^i_n + W_u g^i_n + b_u
//! ```
//!
//! for `i = 0..T-1`. The final masks are `M^{T-1}` and the foreground
//! probability of each kernel is `p_n = sigmoid(w_c . K^T_n + b_c)`.

mod backward;
mod checkpoint;
mod forward;
mod hungarian;
mod loss;
mod optim;
mod params;

pub use backward::{backward, backward_with_match};
pub use checkpoint::{load_checkpoint, save_checkpoint, TrainState, CHECKPOINT_MAGIC};
pub use forward::{forward, ForwardTrace, POOL_EPS};
pub use hungarian::{match_hungarian, MatchResult};
pub use loss::{
    bce_loss, build_cost, dice_loss, focal_loss, kernel_loss, total_loss, total_loss_with_match,
    LossBreakdown, LossWeights, PROB_CLAMP,
};
pub use optim::sgd_step;
pub use params::HeadParams;
