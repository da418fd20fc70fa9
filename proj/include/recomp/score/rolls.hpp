// Piano-roll construction: tone vocabulary over a normalized corpus and the
// binary (tones x 16 x voices) grid for each measure. Layout matches the
// model input: index ((tone * steps) + step) * voices + voice, tone row 0 =
// lowest pitch.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "recomp/score/score.hpp"

namespace recomp {

struct ToneVocab {
  std::vector<int> pitches;  // sorted ascending, distinct

  int64_t raw_size() const { return int64_t(pitches.size()); }
  int64_t padded_size() const { return 4 * ((raw_size() + 3) / 4); }

  // Row for a pitch, or -1.
  int row_of(int pitch) const {
    auto it = std::lower_bound(pitches.begin(), pitches.end(), pitch);
    if (it == pitches.end() || *it != pitch) return -1;
    return int(it - pitches.begin());
  }
};

ToneVocab build_tone_vocab(std::span<const Score> corpus);

struct RollMeasure {
  int64_t tones = 0, steps = 16, voices = 0;
  std::vector<uint8_t> cells;  // {0,1}

  static RollMeasure zeros(int64_t tones, int64_t steps, int64_t voices) {
    RollMeasure r;
    r.tones = tones;
    r.steps = steps;
    r.voices = voices;
    r.cells.assign(size_t(tones * steps * voices), 0);
    return r;
  }

  uint8_t& at(int64_t tone, int64_t step, int64_t voice) {
    return cells[size_t((tone * steps + step) * voices + voice)];
  }
  uint8_t at(int64_t tone, int64_t step, int64_t voice) const {
    return cells[size_t((tone * steps + step) * voices + voice)];
  }

  bool operator==(const RollMeasure&) const = default;
};

// One roll per measure; a note covers slots [round(16*onset/len),
// round(16*(onset+duration)/len)) with round-half-up endpoints, minimum one
// slot.
std::vector<RollMeasure> score_to_rolls(const Score& score, const ToneVocab& vocab);

// Merged active runs on the concatenated measure timeline; consecutive
// identical cells across a measure boundary fuse into one span.
struct NoteSpan {
  int64_t start_slot = 0, end_slot = 0;  // [start, end)
  int pitch = 0;
  int voice = 0;

  auto operator<=>(const NoteSpan&) const = default;
};

std::vector<NoteSpan> rolls_to_spans(std::span<const RollMeasure> rolls, const ToneVocab& vocab);

}  // namespace recomp
