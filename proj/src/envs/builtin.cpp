#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ldwm/envs/env.hpp"

namespace ldwm {

namespace {

void fill_cell(Image& img, int cx, int cy, int cell, std::uint8_t r, std::uint8_t g, std::uint8_t b, int inset = 0) {
  for (int y = cy * cell + inset; y < (cy + 1) * cell - inset; ++y) {
    for (int x = cx * cell + inset; x < (cx + 1) * cell - inset; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  }
}

Image blank(int cells, int cell) {
  Image img;
  img.width = img.height = static_cast<std::size_t>(cells * cell);
  img.channels = 3;
  img.pixels.assign(img.width * img.height * 3, 0);
  return img;
}

void check_action(int action, std::size_t actions) {
  if (action < 0 || static_cast<std::size_t>(action) >= actions) {
    throw std::out_of_range("env: action " + std::to_string(action) + " outside [0, " + std::to_string(actions) + ")");
  }
}

}  // namespace

// Random play: the object's column is uniform and independent of the paddle,
// so each landing is caught with probability 1/8 and pays 1/8 - 7/8 = -3/4.
Catcher::Catcher(std::uint64_t seed)
    : spec_{"catcher", 3, kBoard * kCell, kBoard * kCell, kEpisode, kEpisode / kBoard, -0.75 * kEpisode / kBoard},
      rng_(seed) {}

Image Catcher::reset() {
  paddle_ = kBoard / 2 - 1;
  row_ = 0;
  col_ = static_cast<int>(rng_.uniform_index(kBoard));
  t_ = 0;
  started_ = true;
  return render();
}

StepResult Catcher::step(int action) {
  check_action(action, spec_.actions);
  if (!started_ || t_ >= kEpisode) throw std::logic_error("catcher: episode is over; call reset");
  paddle_ = std::clamp(paddle_ + action - 1, 0, kBoard - 1);
  StepResult r;
  if (row_ == kBoard - 1) {
    row_ = 0;
    col_ = static_cast<int>(rng_.uniform_index(kBoard));
  } else {
    ++row_;
    if (row_ == kBoard - 1) r.reward = col_ == paddle_ ? 1.0 : -1.0;
  }
  ++t_;
  r.done = t_ == kEpisode;
  r.frame = render();
  return r;
}

int Catcher::oracle_action() const {
  // After a landing the next object's column is unknown, so hold position.
  if (row_ == kBoard - 1) return 1;
  return col_ < paddle_ ? 0 : col_ > paddle_ ? 2 : 1;
}

Image Catcher::render() const {
  Image img = blank(kBoard, kCell);
  fill_cell(img, paddle_, kBoard - 1, kCell, 255, 255, 255);
  fill_cell(img, col_, row_, kCell, 255, 160, 0, 3);
  return img;
}

std::string Catcher::save_state() const {
  std::ostringstream os;
  os << paddle_ << ' ' << row_ << ' ' << col_ << ' ' << t_ << ' ' << started_ << ' ' << rng_.state();
  return os.str();
}

void Catcher::load_state(const std::string& state) {
  std::istringstream is(state);
  is >> paddle_ >> row_ >> col_ >> t_ >> started_;
  if (!is) throw std::invalid_argument("catcher: malformed state");
  std::string rest;
  std::getline(is >> std::ws, rest);
  rng_.set_state(rest);
}

GridKey::GridKey(std::uint64_t seed) : spec_{"gridkey", 4, kGrid * kCell, kGrid * kCell, kEpisode, 1.0, 0.0}, rng_(seed) {
  // random_mean_reward is not available in closed form for this layout
  // distribution; tests estimate it by simulation.
}

Image GridKey::reset() {
  // Three distinct cells for agent, key and door.
  std::vector<int> cells(kGrid * kGrid);
  for (int i = 0; i < kGrid * kGrid; ++i) cells[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = 0; i < 3; ++i) std::swap(cells[i], cells[i + rng_.uniform_index(cells.size() - i)]);
  ax_ = cells[0] % kGrid, ay_ = cells[0] / kGrid;
  kx_ = cells[1] % kGrid, ky_ = cells[1] / kGrid;
  dx_ = cells[2] % kGrid, dy_ = cells[2] / kGrid;
  has_key_ = false;
  done_ = false;
  t_ = 0;
  return render();
}

StepResult GridKey::step(int action) {
  check_action(action, spec_.actions);
  if (done_) throw std::logic_error("gridkey: episode is over; call reset");
  static constexpr int kDx[] = {0, 0, -1, 1};
  static constexpr int kDy[] = {-1, 1, 0, 0};
  ax_ = std::clamp(ax_ + kDx[action], 0, kGrid - 1);
  ay_ = std::clamp(ay_ + kDy[action], 0, kGrid - 1);
  StepResult r;
  if (ax_ == kx_ && ay_ == ky_) has_key_ = true;
  if (ax_ == dx_ && ay_ == dy_ && has_key_) {
    r.reward = 1.0;
    done_ = true;
  }
  ++t_;
  if (t_ == kEpisode) done_ = true;
  r.done = done_;
  r.frame = render();
  return r;
}

int GridKey::oracle_action() const {
  const int tx = has_key_ ? dx_ : kx_, ty = has_key_ ? dy_ : ky_;
  if (ty < ay_) return 0;
  if (ty > ay_) return 1;
  if (tx < ax_) return 2;
  return 3;
}

Image GridKey::render() const {
  Image img = blank(kGrid, kCell);
  fill_cell(img, dx_, dy_, kCell, 0, 90, 255);
  if (!has_key_) fill_cell(img, kx_, ky_, kCell, 255, 220, 0, 3);
  fill_cell(img, ax_, ay_, kCell, has_key_ ? 60 : 255, 255, has_key_ ? 60 : 255, 1);
  return img;
}

std::string GridKey::save_state() const {
  std::ostringstream os;
  os << ax_ << ' ' << ay_ << ' ' << kx_ << ' ' << ky_ << ' ' << dx_ << ' ' << dy_ << ' ' << t_ << ' ' << has_key_
     << ' ' << done_ << ' ' << rng_.state();
  return os.str();
}

void GridKey::load_state(const std::string& state) {
  std::istringstream is(state);
  is >> ax_ >> ay_ >> kx_ >> ky_ >> dx_ >> dy_ >> t_ >> has_key_ >> done_;
  if (!is) throw std::invalid_argument("gridkey: malformed state");
  std::string rest;
  std::getline(is >> std::ws, rest);
  rng_.set_state(rest);
}

std::unique_ptr<Environment> make_env(const std::string& name, std::uint64_t seed) {
  if (name == "catcher") return std::make_unique<Catcher>(seed);
  if (name == "gridkey") return std::make_unique<GridKey>(seed);
  throw std::invalid_argument("unknown environment '" + name + "'");
}

}  // namespace ldwm
