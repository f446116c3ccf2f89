// Command-line front end: train, eval, dream-dump, recon-dump, params, plot,
// serve-env. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "ldwm/codec/likelihood.hpp"
#include "ldwm/envs/external.hpp"
#include "ldwm/numerics/ops.hpp"
#include "ldwm/orchestrator/inference.hpp"
#include "ldwm/orchestrator/report.hpp"
#include "ldwm/orchestrator/trainer.hpp"

namespace fs = std::filesystem;
using namespace ldwm;

namespace {

struct ConfigFlags {
  std::string preset = "desk";
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "Base preset: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    app->add_option("--config", config_path, "key=value config file applied on top of the preset");
    app->add_option("--set", overrides, "Extra key=value override (repeatable)");
    app->add_option("--seed", seed, "Master seed");
  }

  RunConfig resolve() const {
    RunConfig cfg = preset_config(preset);
    if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

Image gray_image(std::size_t w, std::size_t h, const std::vector<double>& values) {
  Image img{w, h, 1, std::vector<std::uint8_t>(w * h)};
  for (std::size_t i = 0; i < w * h; ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255));
  }
  return img;
}

// Horizontal concatenation of equally tall gray images.
Image hstack(const std::vector<Image>& parts) {
  Image out{0, parts.front().height, 1, {}};
  for (const auto& p : parts) out.width += p.width;
  out.pixels.resize(out.width * out.height);
  std::size_t x0 = 0;
  for (const auto& p : parts) {
    for (std::size_t y = 0; y < p.height; ++y) {
      for (std::size_t x = 0; x < p.width; ++x) out.pixels[y * out.width + x0 + x] = p.pixels[y * p.width + x];
    }
    x0 += p.width;
  }
  return out;
}

// Nearest-neighbour enlargement so that 32x32 frames are legible.
Image upscale(const Image& img, std::size_t f) {
  if (f <= 1) return img;
  Image out{img.width * f, img.height * f, 1, std::vector<std::uint8_t>(img.width * img.height * f * f)};
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) out.pixels[y * out.width + x] = img.pixels[(y / f) * img.width + x / f];
  }
  return out;
}

// Newest frame of each decoded stack, as continuous-Bernoulli means.
std::vector<Image> decode_frames(Codec<float>& codec, const LatentBatch& z) {
  NoGradGuard guard;
  const auto& c = codec.config();
  Tensor<float> logits = codec.decoder(lookup_detached(z, codec.codebook));
  std::vector<Image> out;
  const std::size_t plane = c.height * c.width;
  for (std::size_t b = 0; b < z.count; ++b) {
    std::vector<double> px(plane);
    const std::size_t base = (b * c.stack + c.stack - 1) * plane;
    for (std::size_t i = 0; i < plane; ++i) px[i] = cb_mean(logits.data()[base + i]);
    out.push_back(gray_image(c.width, c.height, px));
  }
  return out;
}

int cmd_train(const ConfigFlags& flags, const std::string& out, const std::string& resume) {
  std::unique_ptr<Trainer> t;
  if (!resume.empty()) {
    t = Trainer::resume(resume);
  } else {
    t = std::make_unique<Trainer>(flags.resolve());
  }
  std::cerr << "training " << t->config().env << " (" << t->config().preset << " preset, seed " << t->config().seed
            << "), " << t->iterations_done() << "/" << t->config().iterations << " iterations done\n";
  fs::create_directories(out);
  {
    std::ofstream f(fs::path(out) / "config.txt");
    f << t->config().to_text();
  }
  while (t->iterations_done() < t->config().iterations) {
    t->run_iteration();
    const auto& row = t->rows().back();
    std::ofstream(fs::path(out) / "metrics.csv", std::ios::binary | std::ios::trunc) << metrics_csv(t->rows());
    const Checkpoint ckpt = t->make_checkpoint();
    ckpt.save((fs::path(out) / ("checkpoint_iter" + std::to_string(row.iteration) + ".ldwm")).string());
    ckpt.save((fs::path(out) / "checkpoint.ldwm").string());
    std::cerr << "iteration " << row.iteration << ": interactions " << row.interactions << ", eval "
              << row.eval_mean_reward << " +- " << row.eval_std_reward << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, std::size_t episodes, std::uint64_t seed) {
  InferenceAgent agent = load_inference_agent(ckpt);
  auto env = make_env(agent.config.env, mix_seed(seed, 0));
  Rng rng(mix_seed(seed, 1));
  EpisodeStats s = run_episodes(*env, agent.config.preprocess(), agent.actions(), episodes, rng);
  std::cout << "episodes " << episodes << " mean " << s.mean << " std " << s.std << "\n";
  return 0;
}

int cmd_dream_dump(const std::string& ckpt, const std::string& out, std::size_t slots, std::size_t horizon,
                   std::uint64_t seed, std::size_t scale) {
  auto t = Trainer::resume(ckpt);
  fs::create_directories(out);
  std::vector<Rng> rngs;
  for (std::size_t e = 0; e < slots; ++e) rngs.emplace_back(mix_seed(seed, e));
  DreamConfig dc;
  dc.horizon = horizon ? horizon : t->config().dream_horizon;
  TrajectoryBatch tb = rollout_dreams(t->policy(), t->dynamics(), t->codec().encoder, t->codec().codebook,
                                      t->initial_pool(), dc, rngs);
  std::vector<std::vector<Image>> strips(slots);
  for (const auto& z : tb.latents) {
    auto frames = decode_frames(t->codec(), z);
    for (std::size_t b = 0; b < slots; ++b) strips[b].push_back(frames[b]);
  }
  for (std::size_t b = 0; b < slots; ++b) {
    write_png((fs::path(out) / ("dream_" + std::to_string(b) + ".png")).string(), upscale(hstack(strips[b]), scale));
    double ret = 0;
    for (std::size_t s = 0; s < dc.horizon; ++s) ret += tb.rewards[s * slots + b];
    std::cout << "dream " << b << " return " << ret << "\n";
  }
  return 0;
}

int cmd_recon_dump(const std::string& ckpt, const std::string& out, std::size_t count, std::size_t scale,
                   std::uint64_t seed) {
  auto t = Trainer::resume(ckpt);
  fs::create_directories(out);
  const auto& c = t->config().codec;
  const ReplayBuffer& buf = t->buffer();
  if (buf.frame_count() == 0) throw std::runtime_error("checkpoint holds no observations");
  count = std::min(count, buf.frame_count());
  // Random frames: evenly spaced ones tend to land on episode starts.
  Rng rng(seed);
  std::vector<std::size_t> frames;
  for (std::size_t i = 0; i < count; ++i) frames.push_back(rng.uniform_index(buf.frame_count()));
  Tensor<float> obs = t->observation_batch(frames);
  LatentBatch z = encode_latents(t->codec().encoder, t->codec().codebook, obs);
  auto recon = decode_frames(t->codec(), z);
  const std::size_t plane = c.height * c.width, K = c.codebook_size;
  const std::size_t sy = c.height / z.height, sx = c.width / z.width;
  for (std::size_t b = 0; b < count; ++b) {
    std::vector<double> orig(plane), idx(plane);
    const std::size_t base = (b * c.stack + c.stack - 1) * plane;
    for (std::size_t i = 0; i < plane; ++i) orig[i] = obs.data()[base + i];
    for (std::size_t y = 0; y < c.height; ++y) {
      for (std::size_t x = 0; x < c.width; ++x) {
        const int k = z.indices[b * z.cells() + (y / sy) * z.width + x / sx];
        idx[y * c.width + x] = static_cast<double>(k) / static_cast<double>(K - 1);
      }
    }
    write_png((fs::path(out) / ("recon_" + std::to_string(b) + ".png")).string(),
              upscale(hstack({gray_image(c.width, c.height, orig), recon[b], gray_image(c.width, c.height, idx)}), scale));
    std::ostringstream grid;
    for (std::size_t i = 0; i < z.cells(); ++i) grid << (i ? (i % z.width ? " " : " | ") : "") << z.indices[b * z.cells() + i];
    std::cout << "sample " << b << " frame " << frames[b] << " indices " << grid.str() << "\n";
  }
  return 0;
}

int cmd_plot(const std::string& csv, std::string out) {
  std::ifstream f(csv);
  if (!f) throw std::runtime_error("cannot read " + csv);
  std::stringstream ss;
  ss << f.rdbuf();
  if (out.empty()) out = fs::path(csv).parent_path().string();
  if (out.empty()) out = ".";
  fs::create_directories(out);
  for (const auto& [name, svg] : plot_metrics(ss.str())) {
    const fs::path p = fs::path(out) / (name + ".svg");
    std::ofstream(p) << svg;
    std::cout << p.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent world model: discrete autoencoder, recurrent dynamics, policy trained in imagination"};
  app.require_subcommand(1);

  ConfigFlags train_flags, params_flags;
  std::string out = "run", resume;
  auto* train = app.add_subcommand("train", "Run iterative training");
  train_flags.attach(train);
  train->add_option("--out", out, "Output directory");
  train->add_option("--resume", resume, "Continue from a checkpoint file");

  std::string ckpt;
  std::size_t episodes = 32;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint's policy in the real environment");
  eval->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("--episodes", episodes, "Episodes to run");
  eval->add_option("--seed", eval_seed, "Evaluation seed");

  std::string dump_out = "dreams";
  std::size_t slots = 4, horizon = 0, scale = 4;
  std::uint64_t dump_seed = 0;
  auto* dream = app.add_subcommand("dream-dump", "Roll dreams from a checkpoint and decode them to PNG filmstrips");
  dream->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  dream->add_option("--out", dump_out, "Output directory");
  dream->add_option("--slots", slots, "Parallel dreams");
  dream->add_option("--horizon", horizon, "Steps per dream (default: configured horizon)");
  dream->add_option("--seed", dump_seed, "Dream seed");
  dream->add_option("--scale", scale, "Pixel enlargement factor");

  std::string recon_out = "recon";
  std::size_t count = 8;
  std::uint64_t recon_seed = 0;
  auto* recon = app.add_subcommand("recon-dump", "Write observation / reconstruction / index-map triptychs");
  recon->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  recon->add_option("--out", recon_out, "Output directory");
  recon->add_option("--count", count, "Samples from the replay buffer");
  recon->add_option("--scale", scale, "Pixel enlargement factor");
  recon->add_option("--seed", recon_seed, "Frame selection seed");

  auto* params = app.add_subcommand("params", "Print parameter counts per component");
  params_flags.attach(params);

  std::string csv, plot_out;
  auto* plot = app.add_subcommand("plot", "Render one SVG chart per metrics column");
  plot->add_option("csv", csv, "metrics.csv")->required();
  plot->add_option("--out", plot_out, "Output directory (default: next to the CSV)");

  std::string env_name = "catcher";
  std::uint64_t env_seed = 0;
  auto* serve = app.add_subcommand("serve-env", "Serve a built-in environment over the line protocol on stdio");
  serve->add_option("--env", env_name, "catcher or gridkey");
  serve->add_option("--seed", env_seed, "Environment seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train) return cmd_train(train_flags, out, resume);
    if (*eval) return cmd_eval(ckpt, episodes, eval_seed);
    if (*dream) return cmd_dream_dump(ckpt, dump_out, slots, horizon, dump_seed, scale);
    if (*recon) return cmd_recon_dump(ckpt, recon_out, count, scale, recon_seed);
    if (*params) {
      std::cout << format_param_table(report_params(params_flags.resolve()));
      return 0;
    }
    if (*plot) return cmd_plot(csv, plot_out);
    if (*serve) {
      auto env = make_env(env_name, env_seed);
      serve_env(*env, std::cin, std::cout);
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
