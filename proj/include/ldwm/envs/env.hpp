#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "ldwm/core/rng.hpp"
#include "ldwm/io/image.hpp"

namespace ldwm {

struct EnvSpec {
  std::string name;
  std::size_t actions = 0;  // M
  std::size_t frame_width = 0;
  std::size_t frame_height = 0;
  std::size_t max_steps = 0;        // episode length cap
  double optimal_mean_reward = 0;   // per-episode return of perfect play
  double random_mean_reward = 0;    // per-episode return of uniform random play
};

struct StepResult {
  Image frame;
  double reward = 0;
  bool done = false;
};

/// A pixel environment. Built-ins are deterministic given the construction
/// seed and the action sequence; their full state round-trips through
/// save_state/load_state.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Image reset() = 0;
  /// Throws std::out_of_range on a bad action and std::logic_error when the
  /// episode is already over.
  virtual StepResult step(int action) = 0;
  virtual std::string save_state() const = 0;
  virtual void load_state(const std::string& state) = 0;
};

/// 8x8 board rendered at 12 px per cell. The paddle sits on the bottom row;
/// one object falls a row per step. The step that brings the object onto the
/// paddle row pays +1 if the (already moved) paddle is in its column and -1
/// otherwise; the next step respawns it on the top row in a uniformly drawn
/// column. Actions {0: left, 1: stay, 2: right}. Episodes last 64 steps, so
/// 8 objects land per episode.
class Catcher final : public Environment {
 public:
  static constexpr int kBoard = 8;
  static constexpr int kCell = 12;
  static constexpr int kEpisode = 64;

  explicit Catcher(std::uint64_t seed);

  const EnvSpec& spec() const override { return spec_; }
  Image reset() override;
  StepResult step(int action) override;
  std::string save_state() const override;
  void load_state(const std::string& state) override;

  int paddle() const { return paddle_; }
  int object_row() const { return row_; }
  int object_col() const { return col_; }
  /// Perfect play: move toward the object's column.
  int oracle_action() const;

 private:
  Image render() const;

  EnvSpec spec_;
  Rng rng_;
  int paddle_ = 3, row_ = 0, col_ = 0, t_ = 0;
  bool started_ = false;
};

/// 8x8 grid with an agent, a key and a door. Reaching the door while holding
/// the key pays +1 and ends the episode; the door without the key pays 0.
/// Actions {0: up, 1: down, 2: left, 3: right}; episodes end after 128 steps.
class GridKey final : public Environment {
 public:
  static constexpr int kGrid = 8;
  static constexpr int kCell = 12;
  static constexpr int kEpisode = 128;

  explicit GridKey(std::uint64_t seed);

  const EnvSpec& spec() const override { return spec_; }
  Image reset() override;
  StepResult step(int action) override;
  std::string save_state() const override;
  void load_state(const std::string& state) override;

  int agent_x() const { return ax_; }
  int agent_y() const { return ay_; }
  bool has_key() const { return has_key_; }
  /// Shortest-path play: walk to the key, then to the door.
  int oracle_action() const;

 private:
  Image render() const;

  EnvSpec spec_;
  Rng rng_;
  int ax_ = 0, ay_ = 0, kx_ = 0, ky_ = 0, dx_ = 0, dy_ = 0, t_ = 0;
  bool has_key_ = false, done_ = true;
};

/// "catcher" or "gridkey"; throws std::invalid_argument otherwise.
std::unique_ptr<Environment> make_env(const std::string& name, std::uint64_t seed);

}  // namespace ldwm
