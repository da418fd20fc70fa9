// Implementations behind the CLI subcommands. Each throws recomp::Error on
// failure; the CLI maps error kinds to exit codes. Progress goes to stderr,
// outputs are files.

#pragma once

#include <cstdint>
#include <string>

namespace recomp {

struct BuildDatasetOpts {
  std::string in_dir;
  std::string out;
  int64_t holdout = 0;
};
void cmd_build_dataset(const BuildDatasetOpts& opts);

struct TrainVqvaeOpts {
  std::string data;
  std::string out;
  int64_t steps = 0;
  int64_t batch = 64;
  uint64_t seed = 0;
  double beta = 0.25;
  std::string channels = "64,128,256,256";
};
void cmd_train_vqvae(const TrainVqvaeOpts& opts);

struct EncodeOpts {
  std::string data;
  std::string vqvae;
  std::string out;
};
void cmd_encode(const EncodeOpts& opts);

struct TrainPriorOpts {
  std::string codes;
  std::string data;
  std::string out;
  int64_t steps = 0;
  int64_t batch = 50;
  uint64_t seed = 0;
  bool spatial = false;
};
void cmd_train_prior(const TrainPriorOpts& opts);

struct GenerateOpts {
  std::string vqvae;
  std::string prior;
  std::string chords;  // comma-separated labels, boundary repeats included
  double temperature = 1.0;
  uint64_t seed = 0;
  bool spatial = false;
  std::string out_midi;
  std::string out_ppm;
};
void cmd_generate(const GenerateOpts& opts);

struct SynthOpts {
  uint64_t seed = 1;
  int pieces = 2;
  int measures = 8;
  std::string out_dir;
};
void cmd_synth_corpus(const SynthOpts& opts);

}  // namespace recomp
