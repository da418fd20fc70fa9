#include "recomp/score/midi.hpp"

#include <algorithm>
#include <cstring>

namespace recomp {

namespace {

void put_u16(std::string& out, uint16_t v) {
  out.push_back(char(v >> 8));
  out.push_back(char(v & 0xFF));
}

void put_u32(std::string& out, uint32_t v) {
  out.push_back(char(v >> 24));
  out.push_back(char((v >> 16) & 0xFF));
  out.push_back(char((v >> 8) & 0xFF));
  out.push_back(char(v & 0xFF));
}

void put_vlq(std::string& out, int64_t value) {
  uint8_t stack[8];
  int n = 0;
  uint64_t v = uint64_t(value);
  do {
    stack[n++] = uint8_t(v & 0x7F);
    v >>= 7;
  } while (v);
  while (n > 1) out.push_back(char(stack[--n] | 0x80));
  out.push_back(char(stack[0]));
}

struct TrackEvent {
  int64_t tick;
  int order;  // note-offs sort before note-ons at the same tick
  uint8_t status, data1, data2;
};

}  // namespace

std::string rolls_to_midi(std::span<const RollMeasure> rolls, const ToneVocab& vocab,
                          uint32_t quarter_note_us) {
  if (rolls.empty()) throw Error(ErrorKind::Contract, "rolls_to_midi: no measures");

  std::vector<TrackEvent> events;
  for (const NoteSpan& span : rolls_to_spans(rolls, vocab)) {
    const uint8_t ch = uint8_t(span.voice & 0x0F);
    const uint8_t pitch = uint8_t(span.pitch);
    events.push_back({span.start_slot * kTicksPerSlot, 1, uint8_t(0x90 | ch), pitch,
                      uint8_t(kNoteOnVelocity)});
    events.push_back({span.end_slot * kTicksPerSlot, 0, uint8_t(0x80 | ch), pitch, 0});
  }
  std::sort(events.begin(), events.end(), [](const TrackEvent& a, const TrackEvent& b) {
    return std::tie(a.tick, a.order, a.status, a.data1) <
           std::tie(b.tick, b.order, b.status, b.data1);
  });

  std::string track;
  // tempo meta event at tick 0
  put_vlq(track, 0);
  track += '\xFF';
  track += '\x51';
  track += '\x03';
  track.push_back(char((quarter_note_us >> 16) & 0xFF));
  track.push_back(char((quarter_note_us >> 8) & 0xFF));
  track.push_back(char(quarter_note_us & 0xFF));

  int64_t cursor = 0;
  for (const TrackEvent& ev : events) {
    put_vlq(track, ev.tick - cursor);
    cursor = ev.tick;
    track.push_back(char(ev.status));
    track.push_back(char(ev.data1));
    track.push_back(char(ev.data2));
  }
  // end of track at the end of the final measure, even if it is silent
  const int64_t end_tick = int64_t(rolls.size()) * rolls.front().steps * kTicksPerSlot;
  put_vlq(track, end_tick - cursor);
  track += '\xFF';
  track += '\x2F';
  track += '\x00';

  std::string out;
  out += "MThd";
  put_u32(out, 6);
  put_u16(out, 0);  // format 0
  put_u16(out, 1);  // one track
  put_u16(out, uint16_t(kMidiDivision));
  out += "MTrk";
  put_u32(out, uint32_t(track.size()));
  out += track;
  return out;
}

namespace {

struct Reader {
  std::span<const uint8_t> bytes;
  size_t pos = 0;

  uint8_t u8() {
    if (pos >= bytes.size()) throw Error(ErrorKind::Corrupt, "midi: truncated file");
    return bytes[pos++];
  }
  uint16_t u16() { return uint16_t(u8()) << 8 | u8(); }
  uint32_t u32() { return uint32_t(u16()) << 16 | u16(); }
  int64_t vlq() {
    int64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw Error(ErrorKind::Corrupt, "midi: overlong delta time");
  }
  void skip(size_t n) {
    if (pos + n > bytes.size()) throw Error(ErrorKind::Corrupt, "midi: truncated file");
    pos += n;
  }
};

}  // namespace

MidiFile read_midi(std::span<const uint8_t> bytes) {
  Reader r{bytes};
  if (bytes.size() < 14 || std::memcmp(bytes.data(), "MThd", 4) != 0)
    throw Error(ErrorKind::Corrupt, "midi: missing MThd header");
  r.pos = 4;
  if (r.u32() != 6) throw Error(ErrorKind::Corrupt, "midi: bad header length");
  MidiFile file;
  file.format = r.u16();
  uint16_t ntrks = r.u16();
  file.division = r.u16();
  if (ntrks != 1) throw Error(ErrorKind::Corrupt, "midi: expected a single track");
  if (r.pos + 8 > bytes.size() || std::memcmp(bytes.data() + r.pos, "MTrk", 4) != 0)
    throw Error(ErrorKind::Corrupt, "midi: missing MTrk chunk");
  r.pos += 4;
  const uint32_t track_len = r.u32();
  const size_t track_end = r.pos + track_len;

  struct Open {
    int64_t tick;
    int velocity;
  };
  std::vector<std::vector<Open>> open(16 * 128);
  auto open_slot = [&](int ch, int pitch) -> std::vector<Open>& {
    return open[size_t(ch * 128 + pitch)];
  };

  int64_t tick = 0;
  uint8_t running = 0;
  bool ended = false;
  while (r.pos < track_end && !ended) {
    tick += r.vlq();
    uint8_t status = bytes[r.pos];
    if (status & 0x80) {
      r.pos++;
      if (status < 0xF0) running = status;
    } else {
      if (!(running & 0x80)) throw Error(ErrorKind::Corrupt, "midi: data byte without status");
      status = running;
    }
    if (status == 0xFF) {
      uint8_t type = r.u8();
      int64_t len = r.vlq();
      if (type == 0x51 && len == 3) {
        file.tempo_us = uint32_t(r.u8()) << 16;
        file.tempo_us |= uint32_t(r.u8()) << 8;
        file.tempo_us |= r.u8();
      } else if (type == 0x2F) {
        r.skip(size_t(len));
        file.end_tick = tick;
        ended = true;
      } else {
        r.skip(size_t(len));
      }
      continue;
    }
    const uint8_t kind = status & 0xF0;
    const int ch = status & 0x0F;
    switch (kind) {
      case 0x90: {
        int pitch = r.u8(), vel = r.u8();
        if (vel > 0) {
          open_slot(ch, pitch).push_back({tick, vel});
          break;
        }
        [[fallthrough]];
      }
      case 0x80: {
        int pitch = kind == 0x80 ? r.u8() : int(bytes[r.pos - 2]);
        if (kind == 0x80) r.u8();  // release velocity
        auto& stack = open_slot(ch, pitch);
        if (stack.empty())
          throw Error(ErrorKind::Corrupt, "midi: note-off without matching note-on");
        Open on = stack.back();
        stack.pop_back();
        file.notes.push_back(MidiNote{on.tick, tick, ch, pitch, on.velocity});
        break;
      }
      case 0xA0:
      case 0xB0:
      case 0xE0:
        r.skip(2);
        break;
      case 0xC0:
      case 0xD0:
        r.skip(1);
        break;
      default:
        throw Error(ErrorKind::Corrupt, "midi: unsupported event status");
    }
  }
  for (const auto& stack : open)
    if (!stack.empty()) throw Error(ErrorKind::Corrupt, "midi: unterminated note");
  std::sort(file.notes.begin(), file.notes.end());
  return file;
}

}  // namespace recomp
