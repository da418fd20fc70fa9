#include "recomp/pipeline/dataset.hpp"

#include <algorithm>

#include "recomp/pipeline/binio.hpp"
#include "recomp/score/kern.hpp"
#include "recomp/score/key.hpp"

namespace recomp {

namespace {

constexpr char kDatasetMagic[4] = {'R', 'C', 'D', 'S'};
constexpr char kCodesMagic[4] = {'R', 'C', 'C', 'D'};
constexpr uint32_t kVersion = 1;

std::string tone_vocab_text(const ToneVocab& v) {
  std::string s;
  for (size_t i = 0; i < v.pitches.size(); ++i)
    s += (i ? "," : "") + std::to_string(v.pitches[i]);
  s += "\n";
  return s;
}

void pack_roll(ByteWriter& w, const RollMeasure& roll) {
  uint8_t acc = 0;
  int filled = 0;
  for (uint8_t cell : roll.cells) {
    acc |= uint8_t((cell & 1) << filled);
    if (++filled == 8) {
      w.u8(acc);
      acc = 0;
      filled = 0;
    }
  }
  if (filled) w.u8(acc);
}

RollMeasure unpack_roll(ByteReader& r, int64_t tones, int64_t steps, int64_t voices) {
  RollMeasure roll = RollMeasure::zeros(tones, steps, voices);
  uint8_t acc = 0;
  int left = 0;
  for (auto& cell : roll.cells) {
    if (left == 0) {
      acc = r.u8();
      left = 8;
    }
    cell = acc & 1;
    acc >>= 1;
    --left;
  }
  return roll;
}

}  // namespace

uint32_t tone_vocab_fingerprint(const ToneVocab& vocab) {
  const std::string text = tone_vocab_text(vocab);
  return crc32_bytes(text.data(), text.size());
}

uint32_t chord_vocab_fingerprint(const ChordVocab& vocab) {
  const std::string text = vocab.serialize();
  return crc32_bytes(text.data(), text.size());
}

Dataset build_dataset(const std::vector<std::filesystem::path>& inputs, int64_t holdout_measures,
                      std::vector<std::string>* warnings) {
  std::vector<std::filesystem::path> paths = inputs;
  std::sort(paths.begin(), paths.end());

  struct Piece {
    std::string name;
    Score normalized;
    Mode mode;
  };
  std::vector<Piece> pieces;
  for (const auto& path : paths) {
    ParseResult parsed = parse_kern_subset(read_file(path));
    if (warnings)
      for (const std::string& wmsg : parsed.warnings)
        warnings->push_back(path.filename().string() + ": " + wmsg);
    if (parsed.score.parts.size() != 4) {
      if (warnings)
        warnings->push_back(path.filename().string() + ": skipped (" +
                            std::to_string(parsed.score.parts.size()) + " parts, need 4)");
      continue;
    }
    KeyEstimate key = estimate_key(parsed.score);
    Piece piece;
    piece.name = path.filename().string();
    piece.normalized = normalize_key(parsed.score, key, warnings);
    piece.mode = key.mode;
    pieces.push_back(std::move(piece));
  }
  if (pieces.empty())
    throw Error(ErrorKind::Contract, "build_dataset: no 4-part pieces among the inputs");

  std::vector<Score> corpus;
  for (const Piece& p : pieces) corpus.push_back(p.normalized);
  Dataset ds;
  ds.tone_vocab = build_tone_vocab(corpus);

  std::vector<std::string> labels;
  for (size_t pi = 0; pi < pieces.size(); ++pi) {
    const Piece& piece = pieces[pi];
    ds.piece_names.push_back(piece.name);
    ds.piece_modes.push_back(piece.mode);
    std::vector<RollMeasure> rolls = score_to_rolls(piece.normalized, ds.tone_vocab);
    for (RollMeasure& roll : rolls) {
      DatasetMeasure m;
      m.piece_id = uint32_t(pi);
      ChordLabel label = label_measure(roll, ds.tone_vocab, piece.mode);
      labels.push_back(label.rendered);
      m.roll = std::move(roll);
      ds.measures.push_back(std::move(m));
    }
  }
  ds.chord_vocab = build_chord_vocab(labels);
  for (size_t i = 0; i < ds.measures.size(); ++i)
    ds.measures[i].label_id = uint32_t(ds.chord_vocab.id_of(labels[i]));

  if (holdout_measures < 0 || holdout_measures >= ds.size())
    throw Error(ErrorKind::Contract,
                "build_dataset: holdout " + std::to_string(holdout_measures) +
                    " out of range for corpus of " + std::to_string(ds.size()) + " measures");
  ds.holdout_count = uint32_t(holdout_measures);
  ds.holdout_start = uint32_t(ds.size() - holdout_measures);
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  ByteWriter w;
  w.raw(kDatasetMagic, 4);
  w.u32(kVersion);
  w.u32(uint32_t(ds.parts));
  w.u32(uint32_t(ds.timesteps));
  w.u32(uint32_t(ds.tone_vocab.raw_size()));
  w.u32(uint32_t(ds.tone_vocab.padded_size()));
  for (int p : ds.tone_vocab.pitches) w.u8(uint8_t(p));
  w.str(ds.chord_vocab.serialize());
  w.u32(uint32_t(ds.piece_names.size()));
  for (size_t i = 0; i < ds.piece_names.size(); ++i) {
    w.str(ds.piece_names[i]);
    w.u8(ds.piece_modes[i] == Mode::Major ? 0 : 1);
  }
  w.u32(uint32_t(ds.measures.size()));
  w.u32(ds.holdout_start);
  w.u32(ds.holdout_count);
  for (const DatasetMeasure& m : ds.measures) {
    w.u32(m.piece_id);
    w.u32(m.label_id);
    pack_roll(w, m.roll);
  }
  w.finish_crc();
  write_file_atomic(path, w.bytes());
}

Dataset load_dataset(const std::filesystem::path& path) {
  ByteReader r(read_file(path));
  r.check_crc("dataset");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw Error(ErrorKind::Corrupt, "dataset: bad magic in " + path.string());
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw Error(ErrorKind::Version,
                "dataset: unsupported format version " + std::to_string(version));
  Dataset ds;
  ds.parts = r.u32();
  ds.timesteps = r.u32();
  const uint32_t raw = r.u32();
  const uint32_t padded = r.u32();
  for (uint32_t i = 0; i < raw; ++i) ds.tone_vocab.pitches.push_back(int(r.u8()));
  if (int64_t(padded) != ds.tone_vocab.padded_size())
    throw Error(ErrorKind::Corrupt, "dataset: padded vocab size mismatch");
  ds.chord_vocab = ChordVocab::deserialize(r.str());
  const uint32_t piece_count = r.u32();
  for (uint32_t i = 0; i < piece_count; ++i) {
    ds.piece_names.push_back(r.str());
    ds.piece_modes.push_back(r.u8() == 0 ? Mode::Major : Mode::Minor);
  }
  const uint32_t measure_count = r.u32();
  ds.holdout_start = r.u32();
  ds.holdout_count = r.u32();
  if (ds.holdout_start + ds.holdout_count != measure_count)
    throw Error(ErrorKind::Corrupt, "dataset: holdout span does not end at the corpus tail");
  for (uint32_t i = 0; i < measure_count; ++i) {
    DatasetMeasure m;
    m.piece_id = r.u32();
    m.label_id = r.u32();
    if (m.piece_id >= piece_count)
      throw Error(ErrorKind::Corrupt, "dataset: piece id out of range");
    if (int64_t(m.label_id) >= int64_t(ds.chord_vocab.size()))
      throw Error(ErrorKind::Corrupt, "dataset: label id out of range");
    m.roll = unpack_roll(r, int64_t(padded), ds.timesteps, ds.parts);
    ds.measures.push_back(std::move(m));
  }
  if (r.remaining() != 0)
    throw Error(ErrorKind::Corrupt, "dataset: trailing bytes after measure records");
  return ds;
}

std::vector<ChordTriplet> dataset_triplets(const Dataset& ds) {
  std::vector<ChordTriplet> out(ds.measures.size());
  size_t start = 0;
  while (start < ds.measures.size()) {
    size_t end = start;
    while (end < ds.measures.size() &&
           ds.measures[end].piece_id == ds.measures[start].piece_id)
      ++end;
    for (size_t i = start; i < end; ++i) {
      const size_t prev = i == start ? i : i - 1;
      const size_t next = i + 1 == end ? i : i + 1;
      out[i] = ChordTriplet{int32_t(ds.measures[prev].label_id),
                            int32_t(ds.measures[i].label_id),
                            int32_t(ds.measures[next].label_id)};
    }
    start = end;
  }
  return out;
}

void save_codes(const std::filesystem::path& path, const CodesFile& codes) {
  if (codes.grids.empty()) throw Error(ErrorKind::Contract, "save_codes: no grids");
  ByteWriter w;
  w.raw(kCodesMagic, 4);
  w.u32(kVersion);
  w.u32(codes.tone_fp);
  w.u32(codes.chord_fp);
  w.u32(uint32_t(codes.grids.size()));
  w.u32(uint32_t(codes.grids.front().rows));
  w.u32(uint32_t(codes.grids.front().cols));
  for (const CodeGrid& g : codes.grids)
    for (uint16_t c : g.codes) w.u16(c);
  w.finish_crc();
  write_file_atomic(path, w.bytes());
}

CodesFile load_codes(const std::filesystem::path& path) {
  ByteReader r(read_file(path));
  r.check_crc("codes");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kCodesMagic, 4) != 0)
    throw Error(ErrorKind::Corrupt, "codes: bad magic in " + path.string());
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw Error(ErrorKind::Version, "codes: unsupported format version " +
                                        std::to_string(version));
  CodesFile codes;
  codes.tone_fp = r.u32();
  codes.chord_fp = r.u32();
  const uint32_t count = r.u32();
  const uint32_t rows = r.u32();
  const uint32_t cols = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    CodeGrid g = CodeGrid::zeros(int64_t(rows), int64_t(cols));
    for (auto& c : g.codes) c = r.u16();
    codes.grids.push_back(std::move(g));
  }
  if (r.remaining() != 0) throw Error(ErrorKind::Corrupt, "codes: trailing bytes");
  return codes;
}

}  // namespace recomp
