#pragma once

#include <string>

#include "ldwm/agent/policy.hpp"
#include "ldwm/codec/encoder.hpp"
#include "ldwm/envs/collect.hpp"
#include "ldwm/orchestrator/config.hpp"

namespace ldwm {

/// The deployable part of a trained run: encoder, codebook and policy.
struct InferenceAgent {
  RunConfig config;
  Encoder<float> encoder;
  Codebook<float> codebook;
  Policy<float> policy;

  /// Encodes the stacked observation and samples the policy.
  ActionSource actions();
};

/// Reads only the config, encoder, codebook and policy segments.
InferenceAgent load_inference_agent(const std::string& checkpoint_path);

}  // namespace ldwm
