// Roman-numeral labeling of measures (template matching over diatonic triads
// and sevenths of the normalized key), figured bass from the lowest sounding
// pitch, and the previous/current/next conditioning triplets.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "recomp/score/key.hpp"
#include "recomp/score/rolls.hpp"

namespace recomp {

enum class TriadQuality { Major, Minor, Diminished, Augmented };

struct ChordLabel {
  int degree = 0;  // 1-7, or 0 for the REST sentinel
  TriadQuality quality = TriadQuality::Major;
  bool seventh = false;
  std::string figure;    // "", "6", "64", "7", "65", "43", "42"
  std::string rendered;  // e.g. "ii42"; uppercase numeral = major triad part

  bool is_rest() const { return degree == 0; }
};

inline constexpr const char* kRestLabel = "REST";

// Renders degree/quality/figure ("V" + "65" -> "V65"); pure function.
std::string render_chord_label(int degree, TriadQuality quality, const std::string& figure);

// Pitch classes of the diatonic triad/seventh on a degree of the mode
// (natural minor for Mode::Minor). Root first, then third, fifth, [seventh].
std::vector<int> chord_template(Mode mode, int degree, bool seventh);

// Labels one measure of a key-normalized score. Scores every template by
// chord-tone slot mass minus half the non-chord mass; ties prefer triads
// over sevenths, then lower degrees. All-rest measures get the REST
// sentinel.
ChordLabel label_measure(const RollMeasure& roll, const ToneVocab& vocab, Mode mode);

struct ChordTriplet {
  int32_t prev_id = 0, cur_id = 0, next_id = 0;

  bool operator==(const ChordTriplet&) const = default;
};

// (label[t-1], label[t], label[t+1]) with both borders repeated; output
// length equals input length.
std::vector<std::array<std::string, 3>> make_triplets(std::span<const std::string> labels);

class ChordVocab {
 public:
  // First-appearance ordering.
  int32_t add(const std::string& label);
  int32_t id_of(const std::string& label) const;  // throws Index if absent
  bool contains(const std::string& label) const;
  const std::string& label_of(int32_t id) const;
  int32_t size() const { return int32_t(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }

  std::string serialize() const;  // one "label<TAB>id" line per entry
  static ChordVocab deserialize(const std::string& text);

 private:
  std::vector<std::string> labels_;
  std::map<std::string, int32_t> ids_;
};

ChordVocab build_chord_vocab(std::span<const std::string> labels);

}  // namespace recomp
