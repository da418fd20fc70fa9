// Parser for the kern subset used by this project: tab-separated spines, one
// per voice; duration digits {1,2,4,8,16} with an optional dot; pitch letters
// in kern octave convention ("c"=C4, "cc"=C5, "C"=C3, "CC"=C2) with '#'/'-'
// accidentals; rests 'r'; barlines '='; null token '.'; terminator '*-'.
// Tokens outside the subset are skipped, one warning per line.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "recomp/score/score.hpp"

namespace recomp {

struct ParseResult {
  Score score;
  std::vector<std::string> warnings;  // "line N: ..."
};

ParseResult parse_kern_subset(std::string_view text);

// Single-token helpers, exposed for tests.
Rational kern_duration_quarters(std::string_view token, int line);
int kern_pitch_midi(std::string_view token, int line);

}  // namespace recomp
