// Standard MIDI file (format 0) export of piano rolls, plus a reader used to
// verify the export round-trips. Big-endian multi-byte fields, variable
// length deltas, division 480 ticks per quarter (4 slots/quarter -> 120
// ticks/slot).

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "recomp/score/rolls.hpp"

namespace recomp {

inline constexpr int kMidiDivision = 480;
inline constexpr int kTicksPerSlot = kMidiDivision / 4;
inline constexpr int kNoteOnVelocity = 80;
inline constexpr uint32_t kDefaultQuarterUs = 500000;  // 120 bpm

std::string rolls_to_midi(std::span<const RollMeasure> rolls, const ToneVocab& vocab,
                          uint32_t quarter_note_us = kDefaultQuarterUs);

struct MidiNote {
  int64_t start_tick = 0, end_tick = 0;
  int channel = 0;
  int pitch = 0;
  int velocity = 0;

  auto operator<=>(const MidiNote&) const = default;
};

struct MidiFile {
  uint16_t format = 0;
  uint16_t division = 0;
  uint32_t tempo_us = 0;
  int64_t end_tick = 0;
  std::vector<MidiNote> notes;  // paired on/off events, sorted
};

MidiFile read_midi(std::span<const uint8_t> bytes);

inline MidiFile read_midi(const std::string& bytes) {
  return read_midi(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(bytes.data()),
                                            bytes.size()));
}

}  // namespace recomp
