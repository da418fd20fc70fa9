#include "recomp/score/key.hpp"

#include <array>
#include <cmath>

namespace recomp {

namespace {

// Krumhansl-Kessler probe-tone profiles.
constexpr std::array<double, 12> kMajorProfile = {6.35, 2.23, 3.48, 2.33, 4.38, 4.09,
                                                  2.52, 5.19, 2.39, 3.66, 2.29, 2.88};
constexpr std::array<double, 12> kMinorProfile = {6.33, 2.68, 3.52, 5.38, 2.60, 3.53,
                                                  2.54, 4.75, 3.98, 2.69, 3.34, 3.17};

std::array<double, 12> pitch_class_histogram(const Score& score) {
  std::array<double, 12> h{};
  for (const Part& part : score.parts)
    for (const Measure& m : part.measures)
      for (const NoteEvent& ev : m.events)
        if (!ev.is_rest()) h[size_t(ev.pitch % 12)] += boost::rational_cast<double>(ev.duration);
  return h;
}

double pearson(const std::array<double, 12>& h, const std::array<double, 12>& profile,
               int tonic) {
  double hm = 0, pm = 0;
  for (int i = 0; i < 12; ++i) {
    hm += h[size_t(i)];
    pm += profile[size_t(i)];
  }
  hm /= 12;
  pm /= 12;
  double num = 0, dh = 0, dp = 0;
  for (int pc = 0; pc < 12; ++pc) {
    double hv = h[size_t(pc)] - hm;
    double pv = profile[size_t((pc - tonic + 12) % 12)] - pm;
    num += hv * pv;
    dh += hv * hv;
    dp += pv * pv;
  }
  double denom = std::sqrt(dh * dp);
  return denom > 0 ? num / denom : 0.0;
}

}  // namespace

KeyEstimate estimate_key(const Score& score) {
  std::array<double, 12> h = pitch_class_histogram(score);
  double total = 0;
  for (double v : h) total += v;
  if (total <= 0) throw Error(ErrorKind::Domain, "estimate_key: score has no pitched events");

  KeyEstimate best;
  bool first = true;
  for (int tonic = 0; tonic < 12; ++tonic)
    for (Mode mode : {Mode::Major, Mode::Minor}) {
      double r = pearson(h, mode == Mode::Major ? kMajorProfile : kMinorProfile, tonic);
      if (first || r > best.correlation) {
        best = KeyEstimate{tonic, mode, r};
        first = false;
      }
    }
  return best;
}

Score normalize_key(const Score& score, const KeyEstimate& key,
                    std::vector<std::string>* warnings) {
  const int shift = key_shift_semitones(key.tonic);
  Score out = score;
  for (Part& part : out.parts)
    for (Measure& m : part.measures)
      for (NoteEvent& ev : m.events) {
        if (ev.is_rest()) continue;
        int p = ev.pitch + shift;
        if (p < 0 || p > 127) {
          int folded = p;
          while (folded < 0) folded += 12;
          while (folded > 127) folded -= 12;
          if (warnings)
            warnings->push_back("pitch " + std::to_string(p) +
                                " outside MIDI range after transposition, folded to " +
                                std::to_string(folded));
          p = folded;
        }
        ev.pitch = p;
      }
  return out;
}

}  // namespace recomp
