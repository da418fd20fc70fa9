#include "recomp/score/rolls.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace recomp {

namespace {

// round-half-up of a nonnegative rational
int64_t round_rational(const Rational& x) {
  Rational y = x + Rational(1, 2);
  return y.numerator() / y.denominator();
}

}  // namespace

ToneVocab build_tone_vocab(std::span<const Score> corpus) {
  if (corpus.empty()) throw Error(ErrorKind::Contract, "build_tone_vocab: empty corpus");
  std::set<int> pitches;
  for (const Score& s : corpus)
    for (const Part& part : s.parts)
      for (const Measure& m : part.measures)
        for (const NoteEvent& ev : m.events)
          if (!ev.is_rest()) pitches.insert(ev.pitch);
  ToneVocab v;
  v.pitches.assign(pitches.begin(), pitches.end());
  return v;
}

std::vector<RollMeasure> score_to_rolls(const Score& score, const ToneVocab& vocab) {
  const int64_t voices = int64_t(score.parts.size());
  const int64_t steps = 16;
  const int64_t tones = vocab.padded_size();
  const int64_t measures = score.measure_count();
  for (const Part& p : score.parts)
    if (int64_t(p.measures.size()) != measures)
      throw Error(ErrorKind::Contract, "score_to_rolls: parts have unequal measure counts");

  std::vector<RollMeasure> rolls;
  rolls.reserve(size_t(measures));
  for (int64_t m = 0; m < measures; ++m) {
    RollMeasure roll = RollMeasure::zeros(tones, steps, voices);
    for (int64_t v = 0; v < voices; ++v) {
      const Measure& meas = score.parts[size_t(v)].measures[size_t(m)];
      for (const NoteEvent& ev : meas.events) {
        if (ev.is_rest()) continue;
        const int row = vocab.row_of(ev.pitch);
        if (row < 0)
          throw Error(ErrorKind::Index,
                      "score_to_rolls: pitch " + std::to_string(ev.pitch) + " not in tone vocab");
        const Rational len = meas.length;
        int64_t s0 = round_rational(Rational(16) * ev.onset / len);
        int64_t s1 = round_rational(Rational(16) * (ev.onset + ev.duration) / len);
        s0 = std::clamp<int64_t>(s0, 0, steps - 1);
        if (s1 <= s0) s1 = s0 + 1;
        s1 = std::min<int64_t>(s1, steps);
        for (int64_t s = s0; s < s1; ++s) roll.at(row, s, v) = 1;
      }
    }
    rolls.push_back(std::move(roll));
  }
  return rolls;
}

std::vector<NoteSpan> rolls_to_spans(std::span<const RollMeasure> rolls, const ToneVocab& vocab) {
  std::vector<NoteSpan> spans;
  if (rolls.empty()) return spans;
  const int64_t steps = rolls.front().steps;
  const int64_t voices = rolls.front().voices;
  const int64_t total = int64_t(rolls.size()) * steps;
  auto active = [&](int64_t tone, int64_t slot, int64_t voice) -> bool {
    return rolls[size_t(slot / steps)].at(tone, slot % steps, voice) != 0;
  };
  for (int64_t v = 0; v < voices; ++v)
    for (int64_t tone = 0; tone < vocab.raw_size(); ++tone) {
      int64_t slot = 0;
      while (slot < total) {
        if (!active(tone, slot, v)) {
          ++slot;
          continue;
        }
        int64_t start = slot;
        while (slot < total && active(tone, slot, v)) ++slot;
        spans.push_back(NoteSpan{start, slot, vocab.pitches[size_t(tone)], int(v)});
      }
    }
  std::sort(spans.begin(), spans.end(), [](const NoteSpan& a, const NoteSpan& b) {
    return std::tie(a.start_slot, a.voice, a.pitch, a.end_slot) <
           std::tie(b.start_slot, b.voice, b.pitch, b.end_slot);
  });
  return spans;
}

}  // namespace recomp
