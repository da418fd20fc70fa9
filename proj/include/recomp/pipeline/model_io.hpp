// Typed checkpoint packing/unpacking for the two models. The config echo is
// a JSON object stored inside the checkpoint, so generation needs no
// original config files; tone/chord vocabularies and their fingerprints ride
// along in it.

#pragma once

#include <json.hpp>

#include "recomp/pipeline/checkpoint.hpp"
#include "recomp/prior/model.hpp"
#include "recomp/vqvae/model.hpp"

namespace recomp {

using Json = nlohmann::json;

Json vqvae_config_json(const VqVaeConfig& cfg, uint64_t seed, const ToneVocab& tone_vocab,
                       uint32_t tone_fp, uint32_t chord_fp);
Json prior_config_json(const PriorConfig& cfg, uint64_t seed, const ChordVocab& chord_vocab,
                       uint32_t tone_fp, uint32_t chord_fp, bool spatial);

CheckpointData pack_vqvae(const VqVaeBundle<float>& bundle, const Json& config);
CheckpointData pack_prior(const PriorBundle<float>& bundle, const Json& config);

struct LoadedVqVae {
  VqVaeBundle<float> bundle;
  Json config;
  ToneVocab tone_vocab;

  uint32_t tone_fp() const { return config.at("tone_fp").get<uint32_t>(); }
  uint32_t chord_fp() const { return config.at("chord_fp").get<uint32_t>(); }
};

struct LoadedPrior {
  PriorBundle<float> bundle;
  Json config;
  ChordVocab chord_vocab;

  uint32_t tone_fp() const { return config.at("tone_fp").get<uint32_t>(); }
  uint32_t chord_fp() const { return config.at("chord_fp").get<uint32_t>(); }
  bool spatial() const { return config.at("spatial").get<bool>(); }
};

LoadedVqVae unpack_vqvae(const CheckpointData& data);
LoadedPrior unpack_prior(const CheckpointData& data);

void save_vqvae(const std::filesystem::path& path, const VqVaeBundle<float>& bundle,
                const Json& config);
void save_prior(const std::filesystem::path& path, const PriorBundle<float>& bundle,
                const Json& config);
LoadedVqVae load_vqvae(const std::filesystem::path& path);
LoadedPrior load_prior(const std::filesystem::path& path);

}  // namespace recomp
