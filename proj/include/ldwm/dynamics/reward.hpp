#pragma once

namespace ldwm {

/// Clip to [-1, 1] and round half away from zero. Infinities clamp to the
/// nearest bound; NaN is rejected.
int clip_reward(double r);

/// Reward category in {1, 2, 3}: clip_reward(r) + 2.
int reward_to_category(double r);
/// Inverse of reward_to_category on {1, 2, 3}.
int category_to_reward(int category);

}  // namespace ldwm
