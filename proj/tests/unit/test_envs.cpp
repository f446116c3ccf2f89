#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ldwm/dynamics/reward.hpp"
#include "ldwm/envs/collect.hpp"
#include "ldwm/envs/external.hpp"

using namespace ldwm;

namespace {

Image solid(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img{w, h, 3, {}};
  for (std::size_t i = 0; i < w * h; ++i) img.pixels.insert(img.pixels.end(), {r, g, b});
  return img;
}

std::vector<float> constant_frame(std::size_t n, float v) { return std::vector<float>(n, v); }

PreprocessConfig small_pre(std::size_t stack = 1) {
  PreprocessConfig p;
  p.height = p.width = 8;
  p.stack = stack;
  return p;
}

}  // namespace

TEST_CASE("catcher pays +1 when the paddle is under the object at the contact row") {
  Catcher env(1);
  env.reset();
  // paddle 3, object one row above the contact row in column 4
  env.load_state("3 6 4 10 1 " + Rng(5).state());
  CHECK(env.step(2).reward == 1.0);  // moves right onto column 4
  env.load_state("3 6 4 10 1 " + Rng(5).state());
  CHECK(env.step(1).reward == -1.0);
  env.load_state("3 5 4 10 1 " + Rng(5).state());
  CHECK(env.step(2).reward == 0.0);
}

TEST_CASE("catcher oracle controller catches every drop") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Catcher env(seed);
    env.reset();
    double total = 0;
    int drops = 0;
    for (;;) {
      StepResult r = env.step(env.oracle_action());
      total += r.reward;
      drops += r.reward != 0;
      if (r.done) break;
    }
    CHECK(drops == 8);
    CHECK(total == env.spec().optimal_mean_reward);
  }
}

TEST_CASE("catcher random play matches the analytic expectation") {
  // Each landing is an independent catch with probability 1/8.
  Catcher env(3);
  Rng rng(4);
  const std::size_t episodes = 400;
  double sum = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    env.reset();
    for (;;) {
      StepResult r = env.step(static_cast<int>(rng.uniform_index(3)));
      sum += r.reward;
      if (r.done) break;
    }
  }
  const double mean = sum / episodes;
  const double sd = std::sqrt(8 * (1 - 0.75 * 0.75) / episodes);
  CHECK(env.spec().random_mean_reward == -6.0);
  CHECK(std::abs(mean - (-6.0)) < 3 * sd);
}

TEST_CASE("gridkey rules") {
  GridKey env(7);
  env.reset();
  // agent (0,0), key (7,7), door (1,0)
  env.load_state("0 0 7 7 1 0 0 0 0 " + Rng(1).state());
  StepResult r = env.step(3);
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.done);
  CHECK(env.agent_x() == 1);

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    GridKey g(seed);
    g.reset();
    double total = 0;
    for (;;) {
      StepResult s = g.step(g.oracle_action());
      total += s.reward;
      if (s.done) break;
    }
    CHECK(total == g.spec().optimal_mean_reward);
  }
}

TEST_CASE("environment errors") {
  Catcher c(1);
  CHECK_THROWS_AS(c.step(0), std::logic_error);
  c.reset();
  CHECK_THROWS_AS(c.step(3), std::out_of_range);
  CHECK_THROWS_AS(c.step(-1), std::out_of_range);
  for (int i = 0; i < Catcher::kEpisode; ++i) c.step(1);
  CHECK_THROWS_AS(c.step(1), std::logic_error);
  GridKey g(1);
  g.reset();
  CHECK_THROWS_AS(g.step(4), std::out_of_range);
  CHECK_THROWS_AS(make_env("pong", 1), std::invalid_argument);
}

TEST_CASE("built-in environments are deterministic and their state replays") {
  for (const char* name : {"catcher", "gridkey"}) {
    auto a = make_env(name, 11), b = make_env(name, 11);
    CHECK(a->reset() == b->reset());
    Rng rng(2);
    std::string saved;
    std::vector<Image> tail;
    for (int t = 0; t < 40; ++t) {
      const int act = static_cast<int>(rng.uniform_index(a->spec().actions));
      if (t == 20) saved = a->save_state();
      StepResult ra = a->step(act), rb = b->step(act);
      CHECK(ra.frame == rb.frame);
      CHECK(ra.reward == rb.reward);
      if (t >= 20) tail.push_back(ra.frame);
      if (ra.done) break;
    }
    auto c = make_env(name, 999);
    c->load_state(saved);
    Rng rng2(2);
    for (int t = 0; t < 40; ++t) {
      const int act = static_cast<int>(rng2.uniform_index(a->spec().actions));
      if (t < 20) continue;
      if (static_cast<std::size_t>(t - 20) >= tail.size()) break;
      CHECK(c->step(act).frame == tail[static_cast<std::size_t>(t - 20)]);
    }
  }
}

TEST_CASE("preprocess examples") {
  PreprocessConfig p = small_pre();
  for (std::uint8_t v : {0, 37, 128, 255}) {
    for (float x : preprocess(solid(16, 16, v, v, v), p)) CHECK(x == doctest::Approx(v / 255.0).epsilon(1e-6));
  }
  for (float x : preprocess(solid(96, 96, 255, 255, 255), p)) CHECK(x == 1.0f);

  Image block{2, 2, 1, {0, 0, 255, 255}};
  PreprocessConfig one;
  one.height = one.width = 1;
  CHECK(preprocess(block, one)[0] == doctest::Approx(0.5));

  // Luma weights on pure channels.
  CHECK(preprocess(solid(4, 4, 255, 0, 0), one)[0] == doctest::Approx(0.299));
  CHECK(preprocess(solid(4, 4, 0, 255, 0), one)[0] == doctest::Approx(0.587));
  CHECK(preprocess(solid(4, 4, 0, 0, 255), one)[0] == doctest::Approx(0.114));
}

TEST_CASE("preprocess area average with a non-integer ratio") {
  // 3 source pixels onto 2: weights (1, .5) and (.5, 1) over 1.5.
  Image row{3, 1, 1, {30, 60, 90}};
  PreprocessConfig p;
  p.height = 1;
  p.width = 2;
  auto out = preprocess(row, p);
  CHECK(out[0] == doctest::Approx((30 + 0.5 * 60) / 1.5 / 255));
  CHECK(out[1] == doctest::Approx((0.5 * 60 + 90) / 1.5 / 255));
}

TEST_CASE("preprocess output stays in the unit interval") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Image img{1 + rng.uniform_index(40), 1 + rng.uniform_index(40), 3, {}};
    img.pixels.resize(img.width * img.height * 3);
    for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.uniform_index(256));
    PreprocessConfig p;
    p.height = 1 + rng.uniform_index(20);
    p.width = 1 + rng.uniform_index(20);
    for (float x : preprocess(img, p)) {
      CHECK(x >= 0.0f);
      CHECK(x <= 1.0f);
    }
  }
  CHECK_THROWS_AS(preprocess(Image{2, 2, 3, {1, 2, 3}}, PreprocessConfig{}), std::invalid_argument);
}

TEST_CASE("frame stacking") {
  FrameStack one(1, 2);
  one.reset(std::vector<float>{0, 0});
  one.push(std::vector<float>{1, 1});
  CHECK(one.observation() == std::vector<float>{1, 1});

  FrameStack four(4, 1);
  four.reset(std::vector<float>{0});
  CHECK(four.observation() == std::vector<float>{0, 0, 0, 0});
  for (int t = 1; t <= 5; ++t) four.push(std::vector<float>{static_cast<float>(t)});
  CHECK(four.observation() == std::vector<float>{2, 3, 4, 5});
}

TEST_CASE("reward clipping examples") {
  CHECK(clip_reward(2.5) == 1);
  CHECK(clip_reward(-0.4) == 0);
  CHECK(clip_reward(-7) == -1);
  CHECK(clip_reward(0.5) == 1);
  CHECK(clip_reward(-0.5) == -1);
  CHECK_THROWS_AS(clip_reward(std::nan("")), std::invalid_argument);
}

TEST_CASE("replay buffer stacks, windows and capacity") {
  ReplayBuffer buf(4, 1, 1, 10);
  buf.begin_episode(constant_frame(1, 0));
  for (int t = 1; t <= 5; ++t) buf.append(1, 0, constant_frame(1, static_cast<float>(t)));
  buf.begin_episode(constant_frame(1, 10));
  for (int t = 11; t <= 13; ++t) buf.append(2, 1, constant_frame(1, static_cast<float>(t)));
  CHECK(buf.size() == 8);
  CHECK(buf.episodes() == 2);
  CHECK(buf.observation(0) == std::vector<float>{0, 0, 0, 0});
  CHECK(buf.next_observation(4) == std::vector<float>{2, 3, 4, 5});
  CHECK(buf.observation(5) == std::vector<float>{10, 10, 10, 10});
  CHECK(buf.next_observation(6) == std::vector<float>{10, 10, 11, 12});
  CHECK(buf.at(6).step == 1);
  CHECK(buf.window_valid(0, 5));
  CHECK_FALSE(buf.window_valid(3, 3));
  CHECK(buf.window_starts(3) == std::vector<std::size_t>{0, 1, 2, 5});
  buf.append(0, 0, constant_frame(1, 14));
  buf.append(0, 0, constant_frame(1, 15));
  CHECK_THROWS_AS(buf.append(0, 0, constant_frame(1, 16)), std::length_error);
  CHECK_THROWS_AS(buf.append(0, 2, constant_frame(1, 16)), std::length_error);

  ByteWriter w;
  buf.serialize(w);
  ByteReader r(w.bytes());
  CHECK(ReplayBuffer::deserialize(r) == buf);
}

TEST_CASE("windows never cross episode boundaries") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    ReplayBuffer buf(1, 1, 1, 200);
    std::size_t n = 0;
    while (n < 150) {
      buf.begin_episode(constant_frame(1, 0));
      const std::size_t len = 1 + rng.uniform_index(20);
      for (std::size_t i = 0; i < len && n < 150; ++i, ++n) buf.append(0, 0, constant_frame(1, 0));
    }
    const std::size_t w = 1 + rng.uniform_index(8);
    for (std::size_t s : buf.window_starts(w)) {
      for (std::size_t i = 1; i < w; ++i) {
        CHECK(buf.at(s + i).episode == buf.at(s).episode);
        CHECK(buf.at(s + i).step == buf.at(s).step + i);
      }
    }
  }
}

TEST_CASE("collect_experience counts, determinism and random action frequencies") {
  PreprocessConfig p = small_pre(4);
  ReplayBuffer a(4, 8, 8, 3000), b(4, 8, 8, 3000);
  Collector ca(make_env("catcher", 5), p), cb(make_env("catcher", 5), p);
  Rng ra(1), rb(1);
  CHECK(ca.collect(random_actions(3), 1000, a, ra) == 1000);
  CHECK(a.size() == 1000);
  CHECK(ca.collect(random_actions(3), 1000, a, ra) == 1000);
  cb.collect(random_actions(3), 2000, b, rb);
  CHECK(a == b);
  CHECK(a.size() == 2000);
  CHECK_THROWS_AS(ca.collect(random_actions(3), 0, a, ra), std::invalid_argument);
  CHECK_THROWS_AS(ca.collect(random_actions(3), 1001, a, ra), std::length_error);

  // Collector state round-trips mid-episode.
  ByteWriter w;
  ca.serialize(w);
  Collector cc(make_env("catcher", 77), p);
  ByteReader r(w.bytes());
  cc.deserialize(r);
  ReplayBuffer x = a, y = a;
  Rng rx = ra, ry = ra;
  ca.collect(random_actions(3), 100, x, rx);
  cc.collect(random_actions(3), 100, y, ry);
  CHECK(x == y);

  PreprocessConfig tiny = small_pre(1);
  tiny.height = tiny.width = 2;
  const std::size_t n = 100000;
  ReplayBuffer big(1, 2, 2, n);
  Collector cbig(make_env("catcher", 8), tiny);
  Rng rr(3);
  cbig.collect(random_actions(3), n, big, rr);
  std::vector<double> freq(3, 0);
  for (std::size_t i = 0; i < n; ++i) freq[static_cast<std::size_t>(big.at(i).action)] += 1.0 / n;
  for (double f : freq) CHECK(std::abs(f - 1.0 / 3.0) < 0.01);
}

TEST_CASE("run_episodes statistics") {
  Catcher env(21);
  auto oracle = [&env](std::span<const float>, Rng&) { return env.oracle_action(); };
  Rng rng(1);
  EpisodeStats s = run_episodes(env, small_pre(), oracle, 5, rng);
  CHECK(s.mean == 8.0);
  CHECK(s.std == 0.0);
  CHECK(s.steps == 5 * 64);
  EpisodeStats one = run_episodes(env, small_pre(), random_actions(3), 1, rng);
  CHECK(one.std == 0.0);
}

TEST_CASE("png and base64 round trips") {
  CHECK(base64_encode({'M', 'a', 'n'}) == "TWFu");
  CHECK(base64_encode({'M', 'a'}) == "TWE=");
  CHECK(base64_encode({'M'}) == "TQ==");
  Rng rng(2);
  std::vector<std::uint8_t> bytes(1000);
  for (auto& v : bytes) v = static_cast<std::uint8_t>(rng.uniform_index(256));
  for (std::size_t n : {0u, 1u, 2u, 3u, 999u, 1000u}) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + n);
    CHECK(base64_decode(base64_encode(part)) == part);
  }
  CHECK_THROWS_AS(base64_decode("ab$c"), std::invalid_argument);

  Catcher env(1);
  Image frame = env.reset();
  CHECK(decode_png(encode_png(frame)) == frame);
  Image gray{5, 3, 1, std::vector<std::uint8_t>(15, 77)};
  CHECK(decode_png(encode_png(gray)) == gray);
  CHECK_THROWS(decode_png({1, 2, 3}));
}

TEST_CASE("line protocol server") {
  Catcher env(4), ref(4);
  std::istringstream in("spec\nreset\nstep 2\nstep 9\nbogus\nquit\nreset\n");
  std::ostringstream out;
  serve_env(env, in, out);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "spec catcher 3 64");
  std::getline(lines, line);
  CHECK(line == "frame " + base64_encode(encode_png(ref.reset())));
  std::getline(lines, line);
  StepResult r = ref.step(2);
  CHECK(line == "frame " + base64_encode(encode_png(r.frame)) + " 0 0");
  std::getline(lines, line);
  CHECK(line.rfind("error", 0) == 0);
  std::getline(lines, line);
  CHECK(line.rfind("error unknown command", 0) == 0);
  CHECK_FALSE(std::getline(lines, line));  // nothing after quit
}
