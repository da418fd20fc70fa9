// Deterministic synthetic micro-corpus: 4-voice kern files in C major whose
// measures each sound exactly one planted diatonic chord, so the intended
// label per measure is known in advance. Used by tests and for demo runs.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "recomp/rng.hpp"

namespace recomp {

struct SynthSpec {
  uint64_t seed = 1;
  int pieces = 1;
  int measures_per_piece = 8;
};

struct SynthPiece {
  std::string filename;
  std::string kern_text;
  std::vector<std::string> intended_labels;  // rendered label per measure
};

std::vector<SynthPiece> synth_corpus(const SynthSpec& spec);

// Writes each piece to dir/<filename>; creates dir if needed. Returns the
// written paths in order.
std::vector<std::filesystem::path> write_synth_corpus(const std::filesystem::path& dir,
                                                      const SynthSpec& spec);

// Kern spelling of a MIDI pitch (sharp spelling for black keys).
std::string midi_to_kern(int pitch);

}  // namespace recomp
