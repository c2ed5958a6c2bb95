//! Shaped step reward balancing early braking against collision damage.
//!
//! Braking is charged in proportion to the squared distance to the
//! pedestrian, so slowing down far away is expensive and slowing down close
//! is cheap; a collision costs a large penalty that grows with impact speed.
//! Coasting without a collision is free.

/// Weights of the two penalty terms. All strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    /// Distance-squared weight on the braking penalty.
    pub alpha: f64,
    /// Constant weight on the braking penalty.
    pub beta: f64,
    /// Speed-squared weight on the collision penalty.
    pub eta: f64,
    /// Constant collision penalty.
    pub lambda: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            alpha: 0.001,
            beta: 0.1,
            eta: 0.01,
            lambda: 100.0,
        }
    }
}

/// Step reward.
///
/// `rel_x` is the true (noise-free) pedestrian-minus-vehicle longitudinal
/// distance at the start of the step; `v_prev` and `v_cur` straddle the step,
/// so `decel = v_prev - v_cur >= 0` under brake-only actions; `bumped` marks
/// a collision on this step, charged at the post-step speed `v_cur`.
///
/// Exact expression order (tests reproduce it verbatim):
/// `-(alpha * rel_x * rel_x + beta) * decel - if bumped { eta * v_cur * v_cur + lambda } else { 0 }`.
pub fn reward(rel_x: f64, v_prev: f64, v_cur: f64, bumped: bool, p: &RewardParams) -> f64 {
    let decel = v_prev - v_cur;
    let brake_cost = -(p.alpha * rel_x * rel_x + p.beta) * decel;
    let bump_cost = if bumped {
        p.eta * v_cur * v_cur + p.lambda
    } else {
        0.0
    };
    brake_cost - bump_cost
}
