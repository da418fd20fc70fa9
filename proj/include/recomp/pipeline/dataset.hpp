// Dataset container: tone/chord vocabularies plus per-measure records (piece
// id, packed roll bits, chord label id) and a contiguous holdout span at the
// corpus tail whose chord sequences feed generation. Binary format is
// little-endian with a trailing CRC32.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "recomp/code_grid.hpp"
#include "recomp/harmony/chords.hpp"
#include "recomp/score/rolls.hpp"

namespace recomp {

struct DatasetMeasure {
  uint32_t piece_id = 0;
  uint32_t label_id = 0;
  RollMeasure roll;
};

struct Dataset {
  int64_t parts = 4;
  int64_t timesteps = 16;
  ToneVocab tone_vocab;
  ChordVocab chord_vocab;
  std::vector<std::string> piece_names;
  std::vector<Mode> piece_modes;  // estimated mode per piece
  std::vector<DatasetMeasure> measures;
  uint32_t holdout_start = 0, holdout_count = 0;

  int64_t size() const { return int64_t(measures.size()); }

  std::vector<size_t> train_indices() const {
    std::vector<size_t> idx;
    for (size_t i = 0; i < size_t(holdout_start); ++i) idx.push_back(i);
    return idx;
  }

  bool is_holdout(size_t i) const {
    return i >= size_t(holdout_start) && i < size_t(holdout_start) + size_t(holdout_count);
  }
};

uint32_t tone_vocab_fingerprint(const ToneVocab& vocab);
uint32_t chord_vocab_fingerprint(const ChordVocab& vocab);

// parse -> keep 4-part pieces -> normalize key per piece -> tone vocab ->
// rolls -> chord labels. Inputs are processed in sorted path order so
// rebuilding from identical files is byte-identical.
Dataset build_dataset(const std::vector<std::filesystem::path>& inputs, int64_t holdout_measures,
                      std::vector<std::string>* warnings = nullptr);

void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

// Per-measure conditioning triplets: borders repeat within each piece.
std::vector<ChordTriplet> dataset_triplets(const Dataset& ds);

// Codes sidecar written by the encode step, aligned with dataset order.
struct CodesFile {
  uint32_t tone_fp = 0, chord_fp = 0;
  std::vector<CodeGrid> grids;
};

void save_codes(const std::filesystem::path& path, const CodesFile& codes);
CodesFile load_codes(const std::filesystem::path& path);

}  // namespace recomp
