#include "ldwm/dynamics/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ldwm {

int clip_reward(double r) {
  if (std::isnan(r)) throw std::invalid_argument("clip_reward: reward is NaN");
  return static_cast<int>(std::round(std::clamp(r, -1.0, 1.0)));
}

int reward_to_category(double r) { return clip_reward(r) + 2; }

int category_to_reward(int category) {
  if (category < 1 || category > 3) {
    throw std::invalid_argument("category_to_reward: category " + std::to_string(category) + " outside {1, 2, 3}");
  }
  return category - 2;
}

}  // namespace ldwm
