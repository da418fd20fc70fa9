#include "recomp/harmony/chords.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>

namespace recomp {

namespace {

constexpr std::array<int, 7> kMajorScale = {0, 2, 4, 5, 7, 9, 11};
constexpr std::array<int, 7> kMinorScale = {0, 2, 3, 5, 7, 8, 10};  // natural minor

constexpr std::array<const char*, 7> kNumerals = {"i", "ii", "iii", "iv", "v", "vi", "vii"};

TriadQuality triad_quality(int third, int fifth) {
  if (third == 4 && fifth == 7) return TriadQuality::Major;
  if (third == 3 && fifth == 7) return TriadQuality::Minor;
  if (third == 3 && fifth == 6) return TriadQuality::Diminished;
  return TriadQuality::Augmented;
}

}  // namespace

std::string render_chord_label(int degree, TriadQuality quality, const std::string& figure) {
  std::string numeral = kNumerals[size_t(degree - 1)];
  if (quality == TriadQuality::Major || quality == TriadQuality::Augmented)
    for (char& c : numeral) c = char(std::toupper(static_cast<unsigned char>(c)));
  return numeral + figure;
}

std::vector<int> chord_template(Mode mode, int degree, bool seventh) {
  if (degree < 1 || degree > 7)
    throw Error(ErrorKind::Domain, "chord_template: degree " + std::to_string(degree));
  const auto& scale = mode == Mode::Major ? kMajorScale : kMinorScale;
  std::vector<int> pcs;
  for (int step = 0; step < (seventh ? 4 : 3); ++step)
    pcs.push_back(scale[size_t((degree - 1 + 2 * step) % 7)]);
  return pcs;
}

ChordLabel label_measure(const RollMeasure& roll, const ToneVocab& vocab, Mode mode) {
  // Slot-mass histogram over pitch classes.
  std::array<double, 12> mass{};
  double total = 0;
  int64_t first_slot = -1;
  int bass_pitch = -1;
  for (int64_t s = 0; s < roll.steps; ++s) {
    for (int64_t tone = 0; tone < vocab.raw_size(); ++tone)
      for (int64_t v = 0; v < roll.voices; ++v) {
        if (!roll.at(tone, s, v)) continue;
        const int pitch = vocab.pitches[size_t(tone)];
        mass[size_t(pitch % 12)] += 1;
        total += 1;
        if (first_slot < 0) first_slot = s;
        if (s == first_slot && (bass_pitch < 0 || pitch < bass_pitch)) bass_pitch = pitch;
      }
  }
  if (total <= 0) {
    ChordLabel rest;
    rest.rendered = kRestLabel;
    return rest;
  }

  // Candidates in tie-break order: triads first, then sevenths, degrees
  // ascending; strict improvement required to displace an earlier candidate.
  int best_degree = 1;
  bool best_seventh = false;
  double best_score = -1e9;
  std::vector<int> best_pcs;
  for (bool seventh : {false, true})
    for (int degree = 1; degree <= 7; ++degree) {
      std::vector<int> pcs = chord_template(mode, degree, seventh);
      double cover = 0;
      for (int pc : pcs) cover += mass[size_t(pc)];
      cover /= total;
      double score = cover - 0.5 * (1.0 - cover);
      if (score > best_score + 1e-12) {
        best_score = score;
        best_degree = degree;
        best_seventh = seventh;
        best_pcs = pcs;
      }
    }

  ChordLabel label;
  label.degree = best_degree;
  label.seventh = best_seventh;
  label.quality = triad_quality((best_pcs[1] - best_pcs[0] + 12) % 12,
                                (best_pcs[2] - best_pcs[0] + 12) % 12);

  const int bass_pc = bass_pitch % 12;
  int bass_role = 0;  // default to root position when the bass is a non-chord tone
  for (size_t i = 0; i < best_pcs.size(); ++i)
    if (best_pcs[i] == bass_pc) {
      bass_role = int(i);
      break;
    }
  static constexpr std::array<const char*, 4> kTriadFigures = {"", "6", "64", ""};
  static constexpr std::array<const char*, 4> kSeventhFigures = {"7", "65", "43", "42"};
  label.figure = best_seventh ? kSeventhFigures[size_t(bass_role)]
                              : kTriadFigures[size_t(bass_role)];
  label.rendered = render_chord_label(label.degree, label.quality, label.figure);
  return label;
}

std::vector<std::array<std::string, 3>> make_triplets(std::span<const std::string> labels) {
  if (labels.empty()) throw Error(ErrorKind::Contract, "make_triplets: empty label list");
  const size_t n = labels.size();
  std::vector<std::array<std::string, 3>> out;
  out.reserve(n);
  for (size_t t = 0; t < n; ++t) {
    const std::string& prev = labels[t == 0 ? 0 : t - 1];
    const std::string& next = labels[t + 1 >= n ? n - 1 : t + 1];
    out.push_back({prev, labels[t], next});
  }
  return out;
}

int32_t ChordVocab::add(const std::string& label) {
  auto it = ids_.find(label);
  if (it != ids_.end()) return it->second;
  int32_t id = int32_t(labels_.size());
  labels_.push_back(label);
  ids_.emplace(label, id);
  return id;
}

int32_t ChordVocab::id_of(const std::string& label) const {
  auto it = ids_.find(label);
  if (it == ids_.end())
    throw Error(ErrorKind::Index, "chord label '" + label + "' not in vocabulary");
  return it->second;
}

bool ChordVocab::contains(const std::string& label) const { return ids_.count(label) > 0; }

const std::string& ChordVocab::label_of(int32_t id) const {
  if (id < 0 || id >= size())
    throw Error(ErrorKind::Index, "chord id " + std::to_string(id) + " out of range");
  return labels_[size_t(id)];
}

std::string ChordVocab::serialize() const {
  std::string out;
  for (size_t i = 0; i < labels_.size(); ++i)
    out += labels_[i] + "\t" + std::to_string(i) + "\n";
  return out;
}

ChordVocab ChordVocab::deserialize(const std::string& text) {
  ChordVocab v;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(line_no, "chord vocab line missing tab");
    std::string label = line.substr(0, tab);
    int32_t id = int32_t(std::stol(line.substr(tab + 1)));
    if (id != int32_t(v.labels_.size()))
      throw ParseError(line_no, "chord vocab ids out of order");
    v.add(label);
  }
  return v;
}

ChordVocab build_chord_vocab(std::span<const std::string> labels) {
  ChordVocab v;
  for (const std::string& l : labels) v.add(l);
  return v;
}

}  // namespace recomp
