#include "ldwm/orchestrator/config.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ldwm/envs/env.hpp"

namespace ldwm {

PreprocessConfig RunConfig::preprocess() const {
  PreprocessConfig p;
  p.height = codec.height;
  p.width = codec.width;
  p.stack = codec.stack;
  return p;
}

void RunConfig::finalize(std::size_t actions) {
  dynamics.grid_h = policy.grid_h = codec.grid_height();
  dynamics.grid_w = policy.grid_w = codec.grid_width();
  dynamics.embed_dim = policy.embed_dim = codec.embed_dim;
  dynamics.codebook_size = codec.codebook_size;
  dynamics.actions = policy.actions = actions;
  dynamics.leaky_slope = policy.leaky_slope = codec.leaky_slope;
}

void RunConfig::validate() const {
  auto need = [](bool ok, const char* key, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + key + " " + what);
  };
  need(preset == "desk" || preset == "paper", "preset", "must be desk or paper");
  need(iterations >= 1, "iterations", "must be at least 1");
  need(steps_first_iter >= 1, "steps_first_iter", "must be positive");
  need(iterations == 1 || steps_per_iter >= 1, "steps_per_iter", "must be positive");
  need(dream_horizon >= 1, "dream_horizon", "must be positive");
  need(eval_episodes >= 1, "eval_episodes", "must be positive");
  need(warmup_lr_scale > 0, "warmup_lr_scale", "must be positive");
  need(vq_update_period >= 1, "vq_update_period", "must be at least 1");
  need(wm_batch >= 1 && wm_seq_len >= 1, "wm_batch/wm_seq_len", "must be positive");
  need(codec_batch >= 2, "codec_batch", "must be at least 2 (batch normalization)");
  need(dream_envs >= 1, "dream_envs", "must be positive");
  need(codec_lr >= 0 && dynamics_lr >= 0 && ppo_lr >= 0, "*_lr", "must be non-negative");
  need(std::isfinite(ppo_entropy_final), "ppo_entropy_final", "must be finite");
  need(codec.stack == 1 || codec.stack == 4, "codec.stack", "must be 1 or 4");
  codec.validate();
  dynamics.validate();
  ppo.validate();
}

std::size_t RunConfig::interaction_budget() const {
  return steps_first_iter + steps_per_iter * (iterations - 1);
}

std::vector<std::size_t> RunConfig::schedule() const {
  std::vector<std::size_t> s(iterations, steps_per_iter);
  s[0] = steps_first_iter;
  return s;
}

double RunConfig::entropy_coef_at(std::size_t k) const {
  if (ppo_entropy_final < 0 || iterations < 2) return ppo.entropy_coef;
  const double frac = static_cast<double>(std::min(k, iterations) - 1) / static_cast<double>(iterations - 1);
  return ppo.entropy_coef + (ppo_entropy_final - ppo.entropy_coef) * frac;
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  if (name == "desk") {
    c.preset = "desk";
    // At 0.01 throughout, early dreams carry too little signal and some seeds
    // collapse to a deterministic policy in the first iteration.
    c.ppo.entropy_coef = 0.05;
    c.ppo_entropy_final = 0.01;
  } else if (name == "paper") {
    c.preset = "paper";
    c.iterations = 15;
    c.steps_first_iter = 12800;
    c.steps_per_iter = 6400;
    c.dream_horizon = 50;
    c.eval_episodes = 32;
    c.warmup_epochs = 50;
    c.codec.height = c.codec.width = 96;
    c.codec.channels = {64, 64, 128, 128};
    c.codec.embed_dim = 32;
    c.codec.codebook_size = 128;
    c.dynamics.action_channels = 16;
    c.dynamics.hidden = 128;
    c.dynamics.kernel = 5;
    c.dynamics.latent_kernel = 5;
    c.dynamics.reward_channels = 32;
    c.dynamics.reward_hidden = 128;
    c.policy.conv1 = 64;
    c.policy.conv2 = 64;
    c.policy.hidden = 512;
    c.wm_steps = 2000;
    c.wm_batch = 16;
    c.wm_seq_len = 32;
    c.codec_batch = 32;
    c.ppo_updates = 100;
    c.dream_envs = 16;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "' (expected desk or paper)");
  }
  c.finalize(make_env(c.env, 0)->spec().actions);
  return c;
}

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  double out;
  is >> out;
  if (!is || !is.eof()) throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, item));
  if (out.empty()) throw std::invalid_argument("config: " + key + " expects a comma-separated list");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename M>
Field size_field(M RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = to_size(k, v); },
          [m](const RunConfig& c) { return std::to_string(c.*m); }};
}

template <typename M>
Field double_field(M RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = to_double(k, v); },
          [m](const RunConfig& c) { return fmt(c.*m); }};
}

#define LDWM_NESTED_SIZE(block, member)                                                                   \
  Field {                                                                                                 \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.block.member = to_size(k, v); },     \
        [](const RunConfig& c) { return std::to_string(c.block.member); }                                 \
  }
#define LDWM_NESTED_DOUBLE(block, member)                                                                 \
  Field {                                                                                                 \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.block.member = to_double(k, v); },   \
        [](const RunConfig& c) { return fmt(c.block.member); }                                            \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"env", {[](RunConfig& c, const std::string&, const std::string& v) { c.env = v; },
               [](const RunConfig& c) { return c.env; }}},
      {"seed", {[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_size(k, v); },
                [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"iterations", size_field(&RunConfig::iterations)},
      {"steps_first_iter", size_field(&RunConfig::steps_first_iter)},
      {"steps_per_iter", size_field(&RunConfig::steps_per_iter)},
      {"dream_horizon", size_field(&RunConfig::dream_horizon)},
      {"eval_episodes", size_field(&RunConfig::eval_episodes)},
      {"warmup_epochs", size_field(&RunConfig::warmup_epochs)},
      {"warmup_lr_scale", double_field(&RunConfig::warmup_lr_scale)},
      {"vq_update_period", size_field(&RunConfig::vq_update_period)},
      {"wm_steps", size_field(&RunConfig::wm_steps)},
      {"wm_batch", size_field(&RunConfig::wm_batch)},
      {"wm_seq_len", size_field(&RunConfig::wm_seq_len)},
      {"codec_batch", size_field(&RunConfig::codec_batch)},
      {"ppo_updates", size_field(&RunConfig::ppo_updates)},
      {"dream_envs", size_field(&RunConfig::dream_envs)},
      {"codec_lr", double_field(&RunConfig::codec_lr)},
      {"dynamics_lr", double_field(&RunConfig::dynamics_lr)},
      {"ppo_lr", double_field(&RunConfig::ppo_lr)},
      {"ppo_entropy_final", double_field(&RunConfig::ppo_entropy_final)},
      {"record_wall_time",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.record_wall_time = to_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.record_wall_time ? "true" : "false"); }}},
      {"codec.stack", LDWM_NESTED_SIZE(codec, stack)},
      {"codec.height", LDWM_NESTED_SIZE(codec, height)},
      {"codec.width", LDWM_NESTED_SIZE(codec, width)},
      {"codec.channels",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.codec.channels = to_sizes(k, v); },
        [](const RunConfig& c) { return fmt(c.codec.channels); }}},
      {"codec.embed_dim", LDWM_NESTED_SIZE(codec, embed_dim)},
      {"codec.codebook_size", LDWM_NESTED_SIZE(codec, codebook_size)},
      {"codec.beta", LDWM_NESTED_DOUBLE(codec, beta)},
      {"codec.leaky_slope", LDWM_NESTED_DOUBLE(codec, leaky_slope)},
      {"dynamics.action_channels", LDWM_NESTED_SIZE(dynamics, action_channels)},
      {"dynamics.hidden", LDWM_NESTED_SIZE(dynamics, hidden)},
      {"dynamics.kernel", LDWM_NESTED_SIZE(dynamics, kernel)},
      {"dynamics.latent_kernel", LDWM_NESTED_SIZE(dynamics, latent_kernel)},
      {"dynamics.reward_channels", LDWM_NESTED_SIZE(dynamics, reward_channels)},
      {"dynamics.reward_hidden", LDWM_NESTED_SIZE(dynamics, reward_hidden)},
      {"dynamics.reward_loss_scale", LDWM_NESTED_DOUBLE(dynamics, reward_loss_scale)},
      {"dynamics.reward_lr_scale", LDWM_NESTED_DOUBLE(dynamics, reward_lr_scale)},
      {"policy.conv1", LDWM_NESTED_SIZE(policy, conv1)},
      {"policy.conv2", LDWM_NESTED_SIZE(policy, conv2)},
      {"policy.kernel", LDWM_NESTED_SIZE(policy, kernel)},
      {"policy.hidden", LDWM_NESTED_SIZE(policy, hidden)},
      {"ppo.gamma", LDWM_NESTED_DOUBLE(ppo, gamma)},
      {"ppo.gae_lambda", LDWM_NESTED_DOUBLE(ppo, gae_lambda)},
      {"ppo.clip_eps", LDWM_NESTED_DOUBLE(ppo, clip_eps)},
      {"ppo.entropy_coef", LDWM_NESTED_DOUBLE(ppo, entropy_coef)},
      {"ppo.value_coef", LDWM_NESTED_DOUBLE(ppo, value_coef)},
      {"ppo.epochs", LDWM_NESTED_SIZE(ppo, epochs)},
      {"ppo.minibatch", LDWM_NESTED_SIZE(ppo, minibatch)},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "preset") {
    cfg = preset_config(value);
    return;
  }
  auto it = fields().find(key);
  if (it == fields().end()) throw std::invalid_argument("config: unknown key '" + key + "'");
  it->second.set(cfg, key, value);
  if (key == "env" || key.rfind("codec.", 0) == 0) cfg.finalize(make_env(cfg.env, 0)->spec().actions);
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "preset=" << preset << '\n';
  for (const auto& [key, f] : fields()) os << key << '=' << f.get(*this) << '\n';
  return os.str();
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  bool seen_other = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "preset" && seen_other) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": preset must precede other keys");
    }
    if (key != "preset") seen_other = true;
    try {
      apply_setting(base, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys{"preset"};
  for (const auto& [k, f] : fields()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace ldwm
