#include "ldwm/orchestrator/inference.hpp"

#include "ldwm/orchestrator/checkpoint.hpp"

namespace ldwm {

ActionSource InferenceAgent::actions() {
  return [this](std::span<const float> obs, Rng& rng) {
    const auto& c = config.codec;
    Tensor<float> x(Shape{1, c.stack, c.height, c.width}, std::vector<float>(obs.begin(), obs.end()));
    return act(policy, codebook, encode_latents(encoder, codebook, x), rng).actions[0];
  };
}

InferenceAgent load_inference_agent(const std::string& path) {
  const Checkpoint ckpt = Checkpoint::load(path);
  const auto& text = ckpt.get("config");
  InferenceAgent a;
  a.config = parse_config(std::string(text.begin(), text.end()), RunConfig{});
  a.config.validate();
  Rng rng(0);
  a.encoder = Encoder<float>(a.config.codec, rng);
  a.codebook = Codebook<float>(a.config.codec.codebook_size, a.config.codec.embed_dim, rng);
  a.policy = Policy<float>(a.config.policy, rng);
  ParamList<float> enc, cb;
  a.encoder.collect(enc);
  a.encoder.collect_buffers(enc);
  a.codebook.collect("codebook", cb);
  unpack_tensors(ckpt.get("encoder"), enc);
  unpack_tensors(ckpt.get("codebook"), cb);
  unpack_tensors(ckpt.get("policy"), a.policy.parameters());
  return a;
}

}  // namespace ldwm
