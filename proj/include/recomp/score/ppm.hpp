// Binary PPM (P6) rendering of piano rolls: one column per timestep, tone
// row 0 at the bottom, one fixed color per voice, overlaps added and
// clamped, white background.

#pragma once

#include <span>
#include <string>

#include "recomp/score/rolls.hpp"

namespace recomp {

std::string roll_to_ppm(std::span<const RollMeasure> rolls);

}  // namespace recomp
