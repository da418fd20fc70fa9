#include "recomp/pipeline/model_io.hpp"

namespace recomp {

namespace {

void put_adam(CheckpointData& out, const std::map<std::string, AdamState<float>>& adam) {
  int64_t t = 0;
  for (const auto& [name, state] : adam) {
    out.tensors.emplace("adam." + name + ".m",
                        Tensor<float>({int64_t(state.m.size())}, state.m));
    out.tensors.emplace("adam." + name + ".v",
                        Tensor<float>({int64_t(state.v.size())}, state.v));
    t = state.t;
  }
  out.tensors.emplace("adam.t", Tensor<float>({1}, {float(t)}));
}

void get_adam(const CheckpointData& data, std::map<std::string, AdamState<float>>& adam) {
  const int64_t t = int64_t(data.tensors.at("adam.t").data[0]);
  for (auto& [name, state] : adam) {
    state.m = data.tensors.at("adam." + name + ".m").data;
    state.v = data.tensors.at("adam." + name + ".v").data;
    state.t = t;
  }
}

template <typename Model>
void put_params(CheckpointData& out, const Model& model) {
  model.visit_params([&](const std::string& name, const Tensor<float>& v) {
    out.tensors.emplace(name, v);
  });
}

template <typename Model>
void get_params(const CheckpointData& data, Model& model) {
  model.visit_params([&](const std::string& name, Tensor<float>& v) {
    const Tensor<float>& stored = data.tensors.at(name);
    if (stored.shape != v.shape)
      throw Error(ErrorKind::Corrupt, "checkpoint: tensor '" + name + "' has shape " +
                                          shape_str(stored.shape) + ", expected " +
                                          shape_str(v.shape));
    v.data = stored.data;
  });
}

}  // namespace

Json vqvae_config_json(const VqVaeConfig& cfg, uint64_t seed, const ToneVocab& tone_vocab,
                       uint32_t tone_fp, uint32_t chord_fp) {
  Json j;
  j["model"] = "vqvae";
  j["input_h"] = cfg.input_h;
  j["input_w"] = cfg.input_w;
  j["voices"] = cfg.voices;
  j["channels"] = cfg.channels;
  j["codebook_size"] = cfg.codebook_size;
  j["beta"] = cfg.beta;
  j["seed"] = seed;
  j["tone_pitches"] = tone_vocab.pitches;
  j["tone_fp"] = tone_fp;
  j["chord_fp"] = chord_fp;
  return j;
}

Json prior_config_json(const PriorConfig& cfg, uint64_t seed, const ChordVocab& chord_vocab,
                       uint32_t tone_fp, uint32_t chord_fp, bool spatial) {
  Json j;
  j["model"] = "prior";
  j["grid_h"] = cfg.grid_h;
  j["grid_w"] = cfg.grid_w;
  j["codebook_size"] = cfg.codebook_size;
  j["channels"] = cfg.channels;
  j["layers"] = cfg.layers;
  j["kernel_first"] = cfg.kernel_first;
  j["kernel_rest"] = cfg.kernel_rest;
  j["chord_vocab"] = chord_vocab.serialize();
  j["tone_fp"] = tone_fp;
  j["chord_fp"] = chord_fp;
  j["spatial"] = spatial;
  j["seed"] = seed;
  return j;
}

CheckpointData pack_vqvae(const VqVaeBundle<float>& bundle, const Json& config) {
  CheckpointData out;
  out.kind = ModelKind::VqVae;
  Json cfg = config;
  cfg["steps"] = bundle.steps_done;
  out.config_json = cfg.dump();
  put_params(out, bundle.model);
  bundle.model.visit_buffers([&](const std::string& name, const std::vector<float>& buf) {
    out.tensors.emplace("buffer." + name, Tensor<float>({int64_t(buf.size())}, buf));
  });
  put_adam(out, bundle.adam);
  return out;
}

CheckpointData pack_prior(const PriorBundle<float>& bundle, const Json& config) {
  CheckpointData out;
  out.kind = ModelKind::Prior;
  Json cfg = config;
  cfg["steps"] = bundle.steps_done;
  out.config_json = cfg.dump();
  put_params(out, bundle.model);
  put_adam(out, bundle.adam);
  return out;
}

LoadedVqVae unpack_vqvae(const CheckpointData& data) {
  LoadedVqVae out;
  out.config = Json::parse(data.config_json);
  VqVaeConfig cfg;
  cfg.input_h = out.config.at("input_h").get<int64_t>();
  cfg.input_w = out.config.at("input_w").get<int64_t>();
  cfg.voices = out.config.at("voices").get<int64_t>();
  cfg.channels = out.config.at("channels").get<std::array<int64_t, 4>>();
  cfg.codebook_size = out.config.at("codebook_size").get<int64_t>();
  cfg.beta = out.config.at("beta").get<double>();
  out.bundle = VqVaeBundle<float>::init(cfg, 0);
  get_params(data, out.bundle.model);
  out.bundle.model.visit_buffers([&](const std::string& name, std::vector<float>& buf) {
    buf = data.tensors.at("buffer." + name).data;
  });
  get_adam(data, out.bundle.adam);
  out.bundle.steps_done = out.config.at("steps").get<int64_t>();
  out.tone_vocab.pitches = out.config.at("tone_pitches").get<std::vector<int>>();
  return out;
}

LoadedPrior unpack_prior(const CheckpointData& data) {
  LoadedPrior out;
  out.config = Json::parse(data.config_json);
  PriorConfig cfg;
  cfg.grid_h = out.config.at("grid_h").get<int64_t>();
  cfg.grid_w = out.config.at("grid_w").get<int64_t>();
  cfg.codebook_size = out.config.at("codebook_size").get<int64_t>();
  cfg.channels = out.config.at("channels").get<int64_t>();
  cfg.layers = out.config.at("layers").get<int64_t>();
  cfg.kernel_first = out.config.at("kernel_first").get<int64_t>();
  cfg.kernel_rest = out.config.at("kernel_rest").get<int64_t>();
  out.chord_vocab = ChordVocab::deserialize(out.config.at("chord_vocab").get<std::string>());
  cfg.chord_vocab = out.chord_vocab.size();
  out.bundle = PriorBundle<float>::init(cfg, 0);
  get_params(data, out.bundle.model);
  get_adam(data, out.bundle.adam);
  out.bundle.steps_done = out.config.at("steps").get<int64_t>();
  return out;
}

void save_vqvae(const std::filesystem::path& path, const VqVaeBundle<float>& bundle,
                const Json& config) {
  save_checkpoint(path, pack_vqvae(bundle, config));
}

void save_prior(const std::filesystem::path& path, const PriorBundle<float>& bundle,
                const Json& config) {
  save_checkpoint(path, pack_prior(bundle, config));
}

LoadedVqVae load_vqvae(const std::filesystem::path& path) {
  return unpack_vqvae(load_checkpoint(path, ModelKind::VqVae));
}

LoadedPrior load_prior(const std::filesystem::path& path) {
  return unpack_prior(load_checkpoint(path, ModelKind::Prior));
}

}  // namespace recomp
