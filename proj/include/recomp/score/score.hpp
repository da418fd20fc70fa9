// Score model: ordered voices, each a list of measures holding note events
// with exact rational onsets/durations (in quarter notes).

#pragma once

#include <boost/rational.hpp>
#include <vector>

#include "recomp/error.hpp"

namespace recomp {

using Rational = boost::rational<long long>;

struct NoteEvent {
  Rational onset;     // quarters from measure start
  Rational duration;  // quarters
  int pitch = -1;     // MIDI number 0-127, or -1 for a rest

  bool is_rest() const { return pitch < 0; }
};

struct Measure {
  std::vector<NoteEvent> events;  // sorted by onset
  Rational length;                // quarters
};

struct Part {
  std::vector<Measure> measures;
};

struct Score {
  std::vector<Part> parts;

  int64_t measure_count() const {
    return parts.empty() ? 0 : int64_t(parts.front().measures.size());
  }
};

}  // namespace recomp
