// Key estimation (Krumhansl-Schmuckler profile correlation) and
// transposition of a score so its tonic lands on pitch class 0.

#pragma once

#include <string>
#include <vector>

#include "recomp/score/score.hpp"

namespace recomp {

enum class Mode { Major, Minor };

inline const char* mode_name(Mode m) { return m == Mode::Major ? "major" : "minor"; }

struct KeyEstimate {
  int tonic = 0;  // pitch class 0-11
  Mode mode = Mode::Major;
  double correlation = 0;
};

// Correlates the duration-weighted pitch-class histogram against all 24
// rotated major/minor profiles; ties go to the lower tonic, major first.
KeyEstimate estimate_key(const Score& score);

// Shifts every pitch by ((-tonic + 6) mod 12) - 6 semitones, the
// octave-preserving shift into [-6,+5]. Pitches pushed outside 0-127 are
// folded back by octaves with a warning.
Score normalize_key(const Score& score, const KeyEstimate& key,
                    std::vector<std::string>* warnings = nullptr);

// The shift normalize_key applies for a given tonic.
inline int key_shift_semitones(int tonic) { return ((-tonic + 6) % 12 + 12) % 12 - 6; }

}  // namespace recomp
