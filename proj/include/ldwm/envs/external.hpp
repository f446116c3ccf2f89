#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ldwm/envs/env.hpp"

// Line protocol for out-of-process environments. Every message is one line.
//
//   host -> env          env -> host
//   spec                 spec <name> <actions> <max_steps>
//   reset                frame <base64 png>
//   step <a>             frame <base64 png> <reward> <done 0|1>
//   quit                 (exits)
//
// Errors are reported as "error <message>". Frames may be gray or RGB PNGs;
// action repeat, if any, is the environment side's business.

namespace ldwm {

/// Environment backed by a child process speaking the line protocol on its
/// stdin/stdout. State save/load is not available.
class ExternalEnv final : public Environment {
 public:
  /// argv[0] is resolved through PATH.
  explicit ExternalEnv(const std::vector<std::string>& argv);
  ~ExternalEnv() override;
  ExternalEnv(const ExternalEnv&) = delete;
  ExternalEnv& operator=(const ExternalEnv&) = delete;

  const EnvSpec& spec() const override { return spec_; }
  Image reset() override;
  StepResult step(int action) override;
  std::string save_state() const override;
  void load_state(const std::string& state) override;

 private:
  std::string request(const std::string& line);

  EnvSpec spec_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
};

/// Serves `env` over the protocol until "quit" or end of input.
void serve_env(Environment& env, std::istream& in, std::ostream& out);

}  // namespace ldwm
