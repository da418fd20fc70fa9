#include "recomp/pipeline/synth.hpp"

#include <array>
#include <fstream>

#include "recomp/harmony/chords.hpp"
#include "recomp/pipeline/binio.hpp"
#include "recomp/score/kern.hpp"
#include "recomp/score/key.hpp"

namespace recomp {

namespace {

struct PoolChord {
  int degree;
  bool seventh;
  int inversion;  // 0 = root, 1 = third, 2 = fifth, 3 = seventh in the bass
};

// Twelve chords with pairwise distinct rendered labels; a piece of up to 12
// measures draws without replacement, so its labels (and hence its
// conditioning triplets) are distinct.
constexpr std::array<PoolChord, 12> kPool = {{
    {1, false, 0},  // I
    {4, false, 0},  // IV
    {5, false, 0},  // V
    {6, false, 0},  // vi
    {2, false, 1},  // ii6
    {1, false, 2},  // I64
    {5, true, 0},   // V7
    {5, true, 1},   // V65
    {5, true, 2},   // V43
    {2, true, 3},   // ii42
    {3, false, 0},  // iii
    {4, false, 1},  // IV6
}};

std::string pool_label(const PoolChord& c) {
  std::vector<int> pcs = chord_template(Mode::Major, c.degree, c.seventh);
  TriadQuality q;
  const int third = (pcs[1] - pcs[0] + 12) % 12;
  const int fifth = (pcs[2] - pcs[0] + 12) % 12;
  if (third == 4 && fifth == 7)
    q = TriadQuality::Major;
  else if (third == 3 && fifth == 7)
    q = TriadQuality::Minor;
  else
    q = TriadQuality::Diminished;
  static constexpr std::array<const char*, 4> kTriadFig = {"", "6", "64", ""};
  static constexpr std::array<const char*, 4> kSeventhFig = {"7", "65", "43", "42"};
  const char* fig = c.seventh ? kSeventhFig[size_t(c.inversion)] : kTriadFig[size_t(c.inversion)];
  return render_chord_label(c.degree, q, fig);
}

}  // namespace

std::string midi_to_kern(int pitch) {
  static constexpr std::array<const char*, 12> kNames = {"c", "c#", "d", "d#", "e", "f",
                                                         "f#", "g", "g#", "a", "a#", "b"};
  const int pc = pitch % 12;
  const int octave = pitch / 12 - 1;  // MIDI 60 -> octave 4
  std::string name = kNames[size_t(pc)];
  char letter = name[0];
  std::string accidental = name.size() > 1 ? name.substr(1) : "";
  std::string out;
  if (octave >= 4) {
    for (int i = 0; i < octave - 3; ++i) out.push_back(letter);
  } else {
    char upper = char(letter - 'a' + 'A');
    for (int i = 0; i < 4 - octave; ++i) out.push_back(upper);
  }
  return out + accidental;
}

namespace {

SynthPiece compose_piece(int pi, int measures, Rng& rng) {
  std::vector<size_t> order(kPool.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  SynthPiece piece;
  char fname[32];
  std::snprintf(fname, sizeof(fname), "piece_%03d.krn", pi);
  piece.filename = fname;

  std::string text = "**kern\t**kern\t**kern\t**kern\n*M4/4\t*M4/4\t*M4/4\t*M4/4\n";
  for (int mi = 0; mi < measures; ++mi) {
    const PoolChord& chord = kPool[order[size_t(mi) % kPool.size()]];
    piece.intended_labels.push_back(pool_label(chord));

    std::vector<int> pcs = chord_template(Mode::Major, chord.degree, chord.seventh);
    const int bass_pc = pcs[size_t(chord.inversion)];
    std::vector<int> others;
    for (size_t i = 0; i < pcs.size(); ++i)
      if (int(i) != chord.inversion) others.push_back(pcs[i]);

    const std::string bass = midi_to_kern(36 + bass_pc);
    const std::string t0 = midi_to_kern(48 + others[0]);
    const std::string t1 = midi_to_kern(48 + others[1 % others.size()]);
    const std::string a0 = midi_to_kern(60 + others[others.size() - 1]);
    const std::string a1 = midi_to_kern(60 + others[0]);
    std::array<std::string, 4> sop;
    for (int s = 0; s < 4; ++s)
      sop[size_t(s)] = midi_to_kern(72 + others[size_t(s) % others.size()]);

    text += "1" + bass + "\t2" + t0 + "\t2" + a0 + "\t4" + sop[0] + "\n";
    text += ".\t.\t.\t4" + sop[1] + "\n";
    text += ".\t2" + t1 + "\t2" + a1 + "\t4" + sop[2] + "\n";
    text += ".\t.\t.\t4" + sop[3] + "\n";
    const std::string bar = "=" + std::to_string(mi + 2);
    text += bar + "\t" + bar + "\t" + bar + "\t" + bar + "\n";
  }
  text += "*-\t*-\t*-\t*-\n";
  piece.kern_text = std::move(text);
  return piece;
}

}  // namespace

std::vector<SynthPiece> synth_corpus(const SynthSpec& spec) {
  std::vector<SynthPiece> out;
  for (int pi = 0; pi < spec.pieces; ++pi) {
    // Redraw (deterministically) until the piece estimates as C major, so
    // downstream key normalization is the identity and the planted labels
    // survive the pipeline unchanged.
    SynthPiece piece;
    for (uint64_t attempt = 0;; ++attempt) {
      if (attempt >= 64)
        throw Error(ErrorKind::Contract, "synth_corpus: no C-major draw after 64 attempts");
      Rng rng(Rng::derive(spec.seed, uint64_t(pi) * 997 + attempt));
      piece = compose_piece(pi, spec.measures_per_piece, rng);
      KeyEstimate key = estimate_key(parse_kern_subset(piece.kern_text).score);
      if (key.tonic == 0 && key.mode == Mode::Major) break;
    }
    out.push_back(std::move(piece));
  }
  return out;
}

std::vector<std::filesystem::path> write_synth_corpus(const std::filesystem::path& dir,
                                                      const SynthSpec& spec) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const SynthPiece& piece : synth_corpus(spec)) {
    const std::filesystem::path path = dir / piece.filename;
    write_file_atomic(path, piece.kern_text);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace recomp
