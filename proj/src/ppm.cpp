#include "recomp/score/ppm.hpp"

#include <algorithm>
#include <array>

namespace recomp {

namespace {

constexpr std::array<std::array<int, 3>, 4> kVoiceColors = {{
    {220, 40, 40},
    {40, 160, 40},
    {40, 70, 230},
    {230, 180, 30},
}};

}  // namespace

std::string roll_to_ppm(std::span<const RollMeasure> rolls) {
  if (rolls.empty()) throw Error(ErrorKind::Contract, "roll_to_ppm: no measures");
  const int64_t steps = rolls.front().steps;
  const int64_t tones = rolls.front().tones;
  const int64_t voices = rolls.front().voices;
  const int64_t width = int64_t(rolls.size()) * steps;

  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(tones) + "\n255\n";
  out.reserve(out.size() + size_t(width * tones * 3));
  for (int64_t y = 0; y < tones; ++y) {
    const int64_t tone = tones - 1 - y;  // row 0 at the bottom
    for (int64_t x = 0; x < width; ++x) {
      const RollMeasure& roll = rolls[size_t(x / steps)];
      const int64_t step = x % steps;
      int r = 0, g = 0, b = 0;
      bool any = false;
      for (int64_t v = 0; v < voices; ++v) {
        if (!roll.at(tone, step, v)) continue;
        const auto& c = kVoiceColors[size_t(v % 4)];
        r += c[0];
        g += c[1];
        b += c[2];
        any = true;
      }
      if (!any) {
        r = g = b = 255;
      } else {
        r = std::min(r, 255);
        g = std::min(g, 255);
        b = std::min(b, 255);
      }
      out.push_back(char(r));
      out.push_back(char(g));
      out.push_back(char(b));
    }
  }
  return out;
}

}  // namespace recomp
