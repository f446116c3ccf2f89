#include "ldwm/orchestrator/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ldwm/dynamics/reward.hpp"

namespace ldwm {

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "iteration",        "interactions",  "codec_recon_nll", "codec_cb_loss",    "codec_commit_loss",
      "dyn_latent_ce",    "dyn_reward_ce", "ppo_policy_loss", "ppo_value_loss",   "ppo_entropy",
      "ppo_clip_frac",    "eval_mean_reward", "eval_std_reward", "wall_time_s"};
  return cols;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out;
  for (std::size_t i = 0; i < metrics_columns().size(); ++i) out += (i ? "," : "") + metrics_columns()[i];
  out += '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    out += buf;
  };
  for (const auto& r : rows) {
    out += std::to_string(r.iteration) + "," + std::to_string(r.interactions);
    for (double v : {r.codec_recon_nll, r.codec_cb_loss, r.codec_commit_loss, r.dyn_latent_ce, r.dyn_reward_ce,
                     r.ppo_policy_loss, r.ppo_value_loss, r.ppo_entropy, r.ppo_clip_frac, r.eval_mean_reward,
                     r.eval_std_reward, r.wall_time_s}) {
      num(v);
    }
    out += '\n';
  }
  return out;
}

namespace {

// Independent generator streams derived from the master seed.
enum Stream : std::uint64_t { kTrainer = 0, kInit = 1, kEnv = 2, kEval = 3 };

RunConfig checked(RunConfig cfg) {
  cfg.finalize(make_env(cfg.env, 0)->spec().actions);
  cfg.validate();
  return cfg;
}

}  // namespace

Trainer::Trainer(RunConfig cfg) : cfg_(checked(std::move(cfg))), rng_(mix_seed(cfg_.seed, kTrainer)) {
  Rng init(mix_seed(cfg_.seed, kInit));
  codec_ = Codec<float>(cfg_.codec, init);
  dynamics_ = DynamicsNetwork<float>(cfg_.dynamics, init);
  policy_ = Policy<float>(cfg_.policy, init);
  codec_opt_ = Adam<float>(AdamConfig{cfg_.codec_lr});
  codec_opt_.add_group(codec_.parameters());
  dynamics_opt_ = Adam<float>(AdamConfig{cfg_.dynamics_lr});
  register_dynamics(dynamics_opt_, dynamics_);
  policy_opt_ = Adam<float>(AdamConfig{cfg_.ppo_lr});
  policy_opt_.add_group(policy_.parameters());
  buffer_ = ReplayBuffer(cfg_.codec.stack, cfg_.codec.height, cfg_.codec.width, cfg_.interaction_budget());
  collector_ = std::make_unique<Collector>(make_env(cfg_.env, mix_seed(cfg_.seed, kEnv)), cfg_.preprocess());
}

std::size_t Trainer::collect(std::size_t n_steps, bool random_policy) {
  const ActionSource source = random_policy ? random_actions(cfg_.policy.actions) : policy_actions();
  const std::size_t n = collector_->collect(source, n_steps, buffer_, rng_);
  interactions_ += n;
  return n;
}

ActionSource Trainer::policy_actions() {
  return [this](std::span<const float> obs, Rng& rng) {
    const auto& c = cfg_.codec;
    Tensor<float> x(Shape{1, c.stack, c.height, c.width}, std::vector<float>(obs.begin(), obs.end()));
    LatentBatch z = encode_latents(codec_.encoder, codec_.codebook, x);
    return act(policy_, codec_.codebook, z, rng).actions[0];
  };
}

Tensor<float> Trainer::observation_batch(const std::vector<std::size_t>& frames) const {
  const auto& c = cfg_.codec;
  const std::size_t os = buffer_.observation_size();
  std::vector<float> data(frames.size() * os);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    buffer_.frame_observation(frames[i], std::span<float>(data.data() + i * os, os));
  }
  return Tensor<float>(Shape{frames.size(), c.stack, c.height, c.width}, std::move(data));
}

InitialPool Trainer::initial_pool() const {
  InitialPool pool;
  pool.count = buffer_.frame_count();
  pool.observation_size = buffer_.observation_size();
  const ReplayBuffer* buf = &buffer_;
  pool.fetch = [buf](std::size_t i, std::span<float> out) { buf->frame_observation(i, out); };
  return pool;
}

void Trainer::warm_up() {
  if (warmed_up_) throw std::logic_error("trainer: warm-up runs exactly once");
  if (buffer_.frame_count() < 2) throw std::logic_error("trainer: warm-up needs collected data");
  const double base = codec_opt_.lr();
  codec_opt_.set_lr(base * cfg_.warmup_lr_scale);
  std::vector<std::size_t> order(buffer_.frame_count());
  for (std::size_t epoch = 0; epoch < cfg_.warmup_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.uniform_index(i)]);
    for (std::size_t start = 0; start + 2 <= order.size(); start += cfg_.codec_batch) {
      const std::size_t end = std::min(order.size(), start + cfg_.codec_batch);
      if (end - start < 2) break;
      vqvae_train_step(codec_, observation_batch({order.begin() + static_cast<std::ptrdiff_t>(start),
                                                  order.begin() + static_cast<std::ptrdiff_t>(end)}),
                       codec_opt_);
    }
  }
  codec_opt_.set_lr(base);
  warmed_up_ = true;
}

SequenceBatch Trainer::sample_sequences(std::size_t batch, std::size_t len, Rng& rng) {
  const auto starts = buffer_.window_starts(len);
  if (starts.empty()) throw std::logic_error("trainer: no episode holds " + std::to_string(len) + " transitions");
  SequenceBatch sb;
  sb.steps = len;
  sb.batch = batch;
  sb.actions.assign(len, std::vector<int>(batch));
  sb.reward_categories.assign(len, std::vector<int>(batch));
  // Frames laid out step-major so each step's grids are contiguous.
  std::vector<std::size_t> frames((len + 1) * batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t s = starts[rng.uniform_index(starts.size())];
    for (std::size_t t = 0; t < len; ++t) {
      const Transition& tr = buffer_.at(s + t);
      frames[t * batch + b] = tr.frame;
      sb.actions[t][b] = tr.action;
      sb.reward_categories[t][b] = tr.reward + 2;
    }
    frames[len * batch + b] = buffer_.at(s + len - 1).frame + 1;
  }
  LatentBatch all = encode_latents(codec_.encoder, codec_.codebook, observation_batch(frames));
  const std::size_t cells = all.cells();
  for (std::size_t t = 0; t <= len; ++t) {
    LatentBatch z{batch, all.height, all.width, {}};
    z.indices.assign(all.indices.begin() + static_cast<std::ptrdiff_t>(t * batch * cells),
                     all.indices.begin() + static_cast<std::ptrdiff_t>((t + 1) * batch * cells));
    sb.latents.push_back(std::move(z));
  }
  return sb;
}

void Trainer::train_world_model(std::size_t steps, MetricsRow& row) {
  if (!warmed_up_) throw std::logic_error("trainer: world-model training before warm-up");
  double lat = 0, rew = 0, nll = 0, cb = 0, commit = 0;
  std::size_t codec_steps = 0;
  const std::size_t len = cfg_.wm_seq_len;
  for (std::size_t step = 1; step <= steps; ++step) {
    SequenceBatch sb = sample_sequences(cfg_.wm_batch, len, rng_);
    DynamicsLosses dl = dynamics_train_step(dynamics_, codec_.codebook, sb, dynamics_opt_);
    ++dynamics_updates_;
    lat += dl.latent_ce;
    rew += dl.reward_ce;
    const bool update_codec = step % cfg_.vq_update_period == 0;
    if (update_codec) {
      std::vector<std::size_t> frames(cfg_.codec_batch);
      for (auto& f : frames) f = rng_.uniform_index(buffer_.frame_count());
      CodecLosses cl = vqvae_train_step(codec_, observation_batch(frames), codec_opt_);
      nll += cl.recon_nll;
      cb += cl.codebook_loss;
      commit += cl.commitment_loss;
      ++codec_steps;
    }
    if (on_world_model_step) on_world_model_step({iteration_ + 1, step, update_codec});
  }
  if (steps > 0) {
    row.dyn_latent_ce = lat / static_cast<double>(steps);
    row.dyn_reward_ce = rew / static_cast<double>(steps);
  }
  if (codec_steps > 0) {
    row.codec_recon_nll = nll / static_cast<double>(codec_steps);
    row.codec_cb_loss = cb / static_cast<double>(codec_steps);
    row.codec_commit_loss = commit / static_cast<double>(codec_steps);
  }
}

void Trainer::train_policy(MetricsRow& row) {
  const InitialPool pool = initial_pool();
  DreamConfig dc;
  dc.horizon = cfg_.dream_horizon;
  PPOConfig pc = cfg_.ppo;
  pc.entropy_coef = cfg_.entropy_coef_at(iteration_ + 1);
  PPOStats sum;
  for (std::size_t u = 0; u < cfg_.ppo_updates; ++u) {
    const std::uint64_t base = rng_.next_u64();
    std::vector<Rng> slots;
    for (std::size_t e = 0; e < cfg_.dream_envs; ++e) slots.emplace_back(mix_seed(base, e));
    TrajectoryBatch tb = rollout_dreams(policy_, dynamics_, codec_.encoder, codec_.codebook, pool, dc, slots);
    PPOStats s = ppo_update(policy_, codec_.codebook, tb, pc, policy_opt_, rng_);
    sum.policy_loss += s.policy_loss;
    sum.value_loss += s.value_loss;
    sum.entropy += s.entropy;
    sum.clip_fraction += s.clip_fraction;
  }
  if (cfg_.ppo_updates > 0) {
    const double inv = 1.0 / static_cast<double>(cfg_.ppo_updates);
    row.ppo_policy_loss = sum.policy_loss * inv;
    row.ppo_value_loss = sum.value_loss * inv;
    row.ppo_entropy = sum.entropy * inv;
    row.ppo_clip_frac = sum.clip_fraction * inv;
  }
}

EpisodeStats Trainer::evaluate(std::size_t episodes, std::uint64_t seed) {
  auto env = make_env(cfg_.env, mix_seed(seed, 0));
  Rng rng(mix_seed(seed, 1));
  return run_episodes(*env, cfg_.preprocess(), policy_actions(), episodes, rng);
}

MetricsRow Trainer::run_iteration() {
  if (iteration_ >= cfg_.iterations) throw std::logic_error("trainer: all iterations are done");
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto lap = t0;
  auto charge = [&lap](double& slot) {
    const auto now = clock::now();
    slot += std::chrono::duration<double>(now - lap).count();
    lap = now;
  };
  const std::size_t k = iteration_ + 1;
  MetricsRow row;
  row.iteration = k;
  collect(cfg_.schedule()[iteration_], k == 1);
  charge(phase_.collect);
  if (k == 1) warm_up();
  charge(phase_.warm_up);
  train_world_model(cfg_.wm_steps, row);
  charge(phase_.world_model);
  train_policy(row);
  charge(phase_.policy);
  EpisodeStats ev = evaluate(cfg_.eval_episodes, mix_seed(mix_seed(cfg_.seed, kEval), k));
  charge(phase_.evaluate);
  row.eval_mean_reward = ev.mean;
  row.eval_std_reward = ev.std;
  row.interactions = interactions_;
  if (cfg_.record_wall_time) {
    row.wall_time_s = std::chrono::duration<double>(clock::now() - t0).count();
  }
  rows_.push_back(row);
  iteration_ = k;
  return row;
}

void Trainer::run(const std::string& out_dir) {
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  while (iteration_ < cfg_.iterations) {
    run_iteration();
    if (out_dir.empty()) continue;
    const std::filesystem::path dir(out_dir);
    {
      std::ofstream f(dir / "metrics.csv", std::ios::binary | std::ios::trunc);
      f << metrics_csv(rows_);
      if (!f) throw std::runtime_error("cannot write metrics.csv in " + out_dir);
    }
    const Checkpoint ckpt = make_checkpoint();
    ckpt.save((dir / ("checkpoint_iter" + std::to_string(iteration_) + ".ldwm")).string());
    ckpt.save((dir / "checkpoint.ldwm").string());
  }
}

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }
std::string string_of(const std::vector<std::uint8_t>& b) { return {b.begin(), b.end()}; }

ParamList<float> encoder_tensors(const Codec<float>& c) {
  ParamList<float> out;
  c.encoder.collect(out);
  c.encoder.collect_buffers(out);
  return out;
}
ParamList<float> codebook_tensors(const Codec<float>& c) {
  ParamList<float> out;
  c.codebook.collect("codebook", out);
  return out;
}
ParamList<float> decoder_tensors(const Codec<float>& c) {
  ParamList<float> out;
  c.decoder.collect(out);
  return out;
}

}  // namespace

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint c;
  c.put("config", bytes_of(cfg_.to_text()));
  {
    ByteWriter w;
    w.u64(iteration_);
    w.u64(interactions_);
    w.u8(warmed_up_);
    w.u64(dynamics_updates_);
    c.put("cursor", w.take());
  }
  c.put("encoder", pack_tensors(encoder_tensors(codec_)));
  c.put("codebook", pack_tensors(codebook_tensors(codec_)));
  c.put("decoder", pack_tensors(decoder_tensors(codec_)));
  c.put("dynamics", pack_tensors(dynamics_.parameters()));
  c.put("policy", pack_tensors(policy_.parameters()));
  c.put("optimizer.codec", pack_adam(codec_opt_));
  c.put("optimizer.dynamics", pack_adam(dynamics_opt_));
  c.put("optimizer.policy", pack_adam(policy_opt_));
  c.put("rng.trainer", bytes_of(rng_.state()));
  {
    ByteWriter w;
    collector_->serialize(w);
    c.put("collector", w.take());
  }
  {
    ByteWriter w;
    buffer_.serialize(w);
    c.put("replay", zlib_compress(w.bytes()));
  }
  {
    ByteWriter w;
    w.u64(rows_.size());
    for (const auto& r : rows_) {
      w.u64(r.iteration);
      w.u64(r.interactions);
      for (double v : {r.codec_recon_nll, r.codec_cb_loss, r.codec_commit_loss, r.dyn_latent_ce, r.dyn_reward_ce,
                       r.ppo_policy_loss, r.ppo_value_loss, r.ppo_entropy, r.ppo_clip_frac, r.eval_mean_reward,
                       r.eval_std_reward, r.wall_time_s}) {
        w.f64(v);
      }
    }
    c.put("metrics", w.take());
  }
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  if (string_of(c.get("config")) != cfg_.to_text()) {
    throw CheckpointFormatError("checkpoint: configuration differs from this trainer's");
  }
  // Decode the non-tensor segments into temporaries first; tensor restores
  // validate before writing.
  ByteReader cur(c.get("cursor"));
  const std::size_t iteration = cur.u64(), interactions = cur.u64();
  const bool warmed = cur.u8() != 0;
  const std::size_t dyn_updates = cur.u64();
  const std::vector<std::uint8_t> replay_bytes = zlib_decompress(c.get("replay"));
  ByteReader rr(replay_bytes);
  ReplayBuffer buffer = ReplayBuffer::deserialize(rr);
  ByteReader mr(c.get("metrics"));
  std::vector<MetricsRow> rows(mr.u64());
  for (auto& r : rows) {
    r.iteration = mr.u64();
    r.interactions = mr.u64();
    for (double* v : {&r.codec_recon_nll, &r.codec_cb_loss, &r.codec_commit_loss, &r.dyn_latent_ce,
                      &r.dyn_reward_ce, &r.ppo_policy_loss, &r.ppo_value_loss, &r.ppo_entropy, &r.ppo_clip_frac,
                      &r.eval_mean_reward, &r.eval_std_reward, &r.wall_time_s}) {
      *v = mr.f64();
    }
  }

  unpack_tensors(c.get("encoder"), encoder_tensors(codec_));
  unpack_tensors(c.get("codebook"), codebook_tensors(codec_));
  unpack_tensors(c.get("decoder"), decoder_tensors(codec_));
  unpack_tensors(c.get("dynamics"), dynamics_.parameters());
  unpack_tensors(c.get("policy"), policy_.parameters());
  unpack_adam(c.get("optimizer.codec"), codec_opt_);
  unpack_adam(c.get("optimizer.dynamics"), dynamics_opt_);
  unpack_adam(c.get("optimizer.policy"), policy_opt_);
  rng_.set_state(string_of(c.get("rng.trainer")));
  ByteReader cr(c.get("collector"));
  collector_->deserialize(cr);
  buffer_ = std::move(buffer);
  rows_ = std::move(rows);
  iteration_ = iteration;
  interactions_ = interactions;
  warmed_up_ = warmed;
  dynamics_updates_ = dyn_updates;
}

std::unique_ptr<Trainer> Trainer::resume(const std::string& path) {
  const Checkpoint c = Checkpoint::load(path);
  RunConfig cfg = parse_config(string_of(c.get("config")), RunConfig{});
  auto t = std::make_unique<Trainer>(cfg);
  t->restore(c);
  return t;
}

}  // namespace ldwm
