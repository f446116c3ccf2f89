#include <filesystem>
#include <fstream>
#include <regex>
#include <set>

#include "doctest.h"
#include "ldwm/dream/dream.hpp"

using namespace ldwm;

namespace {

struct Micro {
  CodecConfig cc;
  Encoder<float> encoder;
  Codebook<float> codebook;
  DynamicsNetwork<float> dynamics;
  Policy<float> policy;

  explicit Micro(std::uint64_t seed, std::size_t actions = 3) {
    cc.stack = 1;
    cc.height = cc.width = 8;
    cc.channels = {4};
    cc.embed_dim = 3;
    cc.codebook_size = 8;
    Rng rng(seed);
    encoder = Encoder<float>(cc, rng);
    codebook = Codebook<float>(cc.codebook_size, cc.embed_dim, rng);
    // Spread the entries so that different inputs land on different codes.
    for (auto& v : codebook.embeddings.data()) v = static_cast<float>(rng.uniform(-1, 1));
    DynamicsConfig dc;
    dc.grid_h = dc.grid_w = 4;
    dc.embed_dim = 3;
    dc.codebook_size = 8;
    dc.actions = actions;
    dc.action_channels = actions;
    dc.hidden = 4;
    dc.reward_channels = 2;
    dc.reward_hidden = 4;
    dynamics = DynamicsNetwork<float>(dc, rng);
    PolicyConfig pc;
    pc.grid_h = pc.grid_w = 4;
    pc.embed_dim = 3;
    pc.actions = actions;
    pc.conv1 = pc.conv2 = 2;
    pc.hidden = 8;
    policy = Policy<float>(pc, rng);
  }

  InitialPool pool(std::size_t n, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<float> data(n * 64);
    for (auto& v : data) v = static_cast<float>(rng.uniform());
    return InitialPool::from_observations(std::move(data), 64);
  }

  void force_reward_category(int category) {
    for (auto& v : dynamics.reward_fc2.weight.data()) v = 0;
    for (std::size_t k = 0; k < 3; ++k) dynamics.reward_fc2.bias.data()[k] = static_cast<int>(k) + 1 == category ? 1e4f : -1e4f;
  }
};

std::vector<Rng> slot_rngs(std::size_t n, std::uint64_t seed) {
  std::vector<Rng> r;
  for (std::size_t i = 0; i < n; ++i) r.emplace_back(mix_seed(seed, i));
  return r;
}

}  // namespace

TEST_CASE("dream_reset examples") {
  Micro m(1);
  auto one = m.pool(1, 2);
  Rng r0(3);
  auto s = dream_reset(one, m.encoder, m.codebook, m.dynamics, 6, r0);
  for (std::size_t b = 1; b < 6; ++b) CHECK(s.z.grid(b) == s.z.grid(0));
  for (std::size_t st : s.step) CHECK(st == 0);
  for (float v : s.h.first.hidden.data()) CHECK(v == 0.0f);
  for (float v : s.h.second.cell.data()) CHECK(v == 0.0f);

  auto pool = m.pool(10, 4);
  Rng r1(5), r2(5);
  CHECK(dream_reset(pool, m.encoder, m.codebook, m.dynamics, 8, r1).origin ==
        dream_reset(pool, m.encoder, m.codebook, m.dynamics, 8, r2).origin);

  InitialPool empty = InitialPool::from_observations({}, 64);
  Rng r3(1);
  CHECK_THROWS_AS(dream_reset(empty, m.encoder, m.codebook, m.dynamics, 2, r3), std::invalid_argument);
}

TEST_CASE("dream_reset draws pool entries uniformly") {
  Micro m(2);
  auto pool = m.pool(10, 6);
  Rng rng(7);
  auto s = dream_reset(pool, m.encoder, m.codebook, m.dynamics, 10000, rng);
  std::vector<int> counts(10, 0);
  for (std::size_t o : s.origin) ++counts[o];
  for (int c : counts) {
    CHECK(c >= 900);
    CHECK(c <= 1100);
  }
}

TEST_CASE("dream_step truncates exactly at the horizon") {
  Micro m(3);
  auto pool = m.pool(4, 1);
  auto rngs = slot_rngs(2, 9);
  auto s = dream_reset(pool, m.encoder, m.codebook, m.dynamics, std::span<Rng>(rngs));
  const std::vector<int> actions{0, 2};
  for (std::size_t t = 1; t <= 50; ++t) {
    auto r = dream_step(s, actions, m.dynamics, m.codebook, 50, rngs);
    for (bool tr : r.truncated) CHECK(tr == (t == 50));
    for (int rew : r.rewards) CHECK((rew >= -1 && rew <= 1));
  }
  CHECK_THROWS_AS(dream_step(s, actions, m.dynamics, m.codebook, 50, rngs), std::logic_error);
}

TEST_CASE("dream_step maps reward category 2 to 0 and is reproducible") {
  Micro m(4);
  m.force_reward_category(2);
  auto pool = m.pool(4, 1);
  auto ra = slot_rngs(3, 1), rb = slot_rngs(3, 1);
  auto sa = dream_reset(pool, m.encoder, m.codebook, m.dynamics, std::span<Rng>(ra));
  auto sb = dream_reset(pool, m.encoder, m.codebook, m.dynamics, std::span<Rng>(rb));
  const std::vector<int> actions{1, 1, 0};
  for (int t = 0; t < 5; ++t) {
    auto a = dream_step(sa, actions, m.dynamics, m.codebook, 10, ra);
    auto b = dream_step(sb, actions, m.dynamics, m.codebook, 10, rb);
    for (int r : a.rewards) CHECK(r == 0);
    CHECK(a.rewards == b.rewards);
    CHECK(sa.z == sb.z);
    CHECK(std::vector<float>(sa.h.second.hidden.data().begin(), sa.h.second.hidden.data().end()) ==
          std::vector<float>(sb.h.second.hidden.data().begin(), sb.h.second.hidden.data().end()));
  }
}

TEST_CASE("rollout_dreams sizes, rewards and truncation flags") {
  Micro m(5);
  m.force_reward_category(3);
  auto pool = m.pool(6, 2);
  auto rngs = slot_rngs(16, 3);
  DreamConfig dc;
  dc.horizon = 50;
  TrajectoryBatch tb = rollout_dreams(m.policy, m.dynamics, m.encoder, m.codebook, pool, dc, rngs);
  CHECK(tb.size() == 800);
  CHECK(tb.actions.size() == 800);
  CHECK(tb.rewards.size() == 800);
  CHECK(tb.latents.size() == 50);
  CHECK(tb.bootstrap_values.size() == 16);
  for (double r : tb.rewards) CHECK(r == 1.0);
  for (std::size_t i = 0; i < tb.size(); ++i) CHECK(tb.truncated[i] == (i / 16 == 49));

  dc.burn_in = 2;
  CHECK_THROWS_AS(rollout_dreams(m.policy, m.dynamics, m.encoder, m.codebook, pool, dc, rngs), std::invalid_argument);
}

TEST_CASE("rollout_dreams feeds the same grid to the policy and the dynamics") {
  Micro m(6);
  auto pool = m.pool(5, 3);
  DreamConfig dc;
  dc.horizon = 6;
  auto ra = slot_rngs(4, 8), rb = slot_rngs(4, 8);
  TrajectoryBatch tb = rollout_dreams(m.policy, m.dynamics, m.encoder, m.codebook, pool, dc, ra);

  // Replay by hand with identical generators.
  auto s = dream_reset(pool, m.encoder, m.codebook, m.dynamics, std::span<Rng>(rb));
  for (std::size_t t = 0; t < dc.horizon; ++t) {
    CHECK(tb.latents[t] == s.z);
    ActResult a = act(m.policy, m.codebook, s.z, std::span<Rng>(rb));
    CHECK(std::vector<int>(tb.actions.begin() + static_cast<std::ptrdiff_t>(t * 4),
                           tb.actions.begin() + static_cast<std::ptrdiff_t>((t + 1) * 4)) == a.actions);
    dream_step(s, a.actions, m.dynamics, m.codebook, dc.horizon, rb);
  }
}

TEST_CASE("slot trajectories do not depend on the batch partition") {
  Micro m(7);
  auto pool = m.pool(9, 4);
  DreamConfig dc;
  dc.horizon = 8;
  auto all = slot_rngs(16, 21);
  TrajectoryBatch full = rollout_dreams(m.policy, m.dynamics, m.encoder, m.codebook, pool, dc, all);
  for (std::size_t slot : {0u, 5u, 15u}) {
    std::vector<Rng> one{Rng(mix_seed(21, slot))};
    TrajectoryBatch single = rollout_dreams(m.policy, m.dynamics, m.encoder, m.codebook, pool, dc, one);
    for (std::size_t t = 0; t < dc.horizon; ++t) {
      CHECK(single.latents[t].grid(0) == full.latents[t].grid(slot));
      CHECK(single.actions[t] == full.actions[t * 16 + slot]);
      CHECK(single.rewards[t] == full.rewards[t * 16 + slot]);
      CHECK(single.logp_old[t] == full.logp_old[t * 16 + slot]);
      CHECK(single.values_old[t] == full.values_old[t * 16 + slot]);
    }
    CHECK(single.bootstrap_values[0] == full.bootstrap_values[slot]);
  }
}

TEST_CASE("the dream module never reaches the decoder") {
  namespace fs = std::filesystem;
  const fs::path root = LDWM_SOURCE_DIR;
  std::set<fs::path> seen;
  std::vector<fs::path> todo;
  for (const char* dir : {"include/ldwm/dream", "src/dream"}) {
    for (const auto& e : fs::directory_iterator(root / dir)) todo.push_back(e.path());
  }
  REQUIRE_FALSE(todo.empty());
  const std::regex inc(R"(#include\s+"(ldwm/[^"]+)\")");
  while (!todo.empty()) {
    fs::path p = todo.back();
    todo.pop_back();
    if (!seen.insert(p).second) continue;
    std::ifstream f(p);
    std::string line;
    while (std::getline(f, line)) {
      std::smatch mt;
      if (std::regex_search(line, mt, inc)) {
        const std::string header = mt[1];
        INFO(p.string() << " includes " << header);
        CHECK(header != "ldwm/codec/decoder.hpp");
        CHECK(header != "ldwm/codec/codec.hpp");
        todo.push_back(root / "include" / header);
      }
    }
  }
  for (const auto& p : seen) {
    if (p.parent_path().filename() != "dream") continue;
    std::ifstream f(p);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(text.find("Decoder") == std::string::npos);
    CHECK(text.find("decoder") == std::string::npos);
  }
}
