#include "recomp/pipeline/commands.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "recomp/pipeline/binio.hpp"
#include "recomp/pipeline/dataset.hpp"
#include "recomp/pipeline/model_io.hpp"
#include "recomp/pipeline/synth.hpp"
#include "recomp/score/midi.hpp"
#include "recomp/score/ppm.hpp"

namespace recomp {

namespace fs = std::filesystem;

namespace {

void write_loss_csv(const std::string& ckpt_path, const std::vector<LossRecord>& records) {
  std::string csv = "step,loss\n";
  for (const LossRecord& r : records) {
    std::ostringstream row;
    row << r.step << "," << r.loss << "\n";
    csv += row.str();
  }
  write_file_atomic(ckpt_path + ".loss.csv", csv);
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (std::string& s : out) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  }
  return out;
}

std::array<int64_t, 4> parse_channels(const std::string& text) {
  std::vector<std::string> parts = split_csv(text);
  if (parts.size() != 4)
    throw Error(ErrorKind::Contract, "expected 4 comma-separated channel sizes, got '" + text +
                                         "'");
  std::array<int64_t, 4> out{};
  for (size_t i = 0; i < 4; ++i) out[i] = std::stoll(parts[i]);
  return out;
}

std::vector<int64_t> train_index_list(const Dataset& ds) {
  std::vector<int64_t> idx;
  for (size_t i : ds.train_indices()) idx.push_back(int64_t(i));
  return idx;
}

}  // namespace

void cmd_build_dataset(const BuildDatasetOpts& opts) {
  std::vector<fs::path> inputs;
  if (!fs::is_directory(opts.in_dir))
    throw Error(ErrorKind::Io, "input directory " + opts.in_dir + " does not exist");
  for (const auto& entry : fs::directory_iterator(opts.in_dir))
    if (entry.is_regular_file()) inputs.push_back(entry.path());
  if (inputs.empty()) throw Error(ErrorKind::Contract, "no input files in " + opts.in_dir);

  std::vector<std::string> warnings;
  Dataset ds = build_dataset(inputs, opts.holdout, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  save_dataset(opts.out, ds);
  std::cerr << "dataset: " << ds.piece_names.size() << " pieces, " << ds.size()
            << " measures (" << ds.holdout_count << " held out), tone vocab "
            << ds.tone_vocab.raw_size() << " padded to " << ds.tone_vocab.padded_size()
            << ", chord vocab " << ds.chord_vocab.size() << "\n";
  if (ds.holdout_count > 0) {
    std::cerr << "holdout chords:";
    for (size_t i = size_t(ds.holdout_start); i < ds.measures.size(); ++i)
      std::cerr << " " << ds.chord_vocab.label_of(int32_t(ds.measures[i].label_id));
    std::cerr << "\n";
  }
}

void cmd_train_vqvae(const TrainVqvaeOpts& opts) {
  Dataset ds = load_dataset(opts.data);
  VqVaeConfig cfg;
  cfg.input_h = ds.tone_vocab.padded_size();
  cfg.input_w = ds.timesteps;
  cfg.voices = ds.parts;
  cfg.channels = parse_channels(opts.channels);
  cfg.beta = opts.beta;
  VqVaeBundle<float> bundle = VqVaeBundle<float>::init(cfg, opts.seed);

  VqTrainConfig tc;
  tc.steps = opts.steps;
  tc.batch = opts.batch;
  tc.seed = opts.seed;
  tc.indices = train_index_list(ds);
  std::vector<RollMeasure> rolls;
  for (const DatasetMeasure& m : ds.measures) rolls.push_back(m.roll);
  std::vector<LossRecord> records = train_vqvae(bundle, rolls, tc);

  const Json config = vqvae_config_json(cfg, opts.seed, ds.tone_vocab,
                                        tone_vocab_fingerprint(ds.tone_vocab),
                                        chord_vocab_fingerprint(ds.chord_vocab));
  save_vqvae(opts.out, bundle, config);
  write_loss_csv(opts.out, records);
  std::cerr << "train-vqvae: " << records.size() << " steps on " << tc.indices.size()
            << " measures";
  if (!records.empty()) std::cerr << ", final loss " << records.back().loss;
  std::cerr << "\n";
}

void cmd_encode(const EncodeOpts& opts) {
  Dataset ds = load_dataset(opts.data);
  LoadedVqVae vq = load_vqvae(opts.vqvae);
  const uint32_t tone_fp = tone_vocab_fingerprint(ds.tone_vocab);
  const uint32_t chord_fp = chord_vocab_fingerprint(ds.chord_vocab);
  if (vq.tone_fp() != tone_fp)
    throw Error(ErrorKind::VocabMismatch,
                "dataset tone vocab fingerprint does not match the vqvae checkpoint");

  std::vector<RollMeasure> rolls;
  for (const DatasetMeasure& m : ds.measures) rolls.push_back(m.roll);
  CodesFile codes;
  codes.tone_fp = tone_fp;
  codes.chord_fp = chord_fp;
  codes.grids = encode_dataset(vq.bundle.model, rolls);
  save_codes(opts.out, codes);
  std::cerr << "encode: " << codes.grids.size() << " grids of "
            << vq.bundle.model.cfg.grid_h() << "x" << vq.bundle.model.cfg.grid_w() << "\n";
}

void cmd_train_prior(const TrainPriorOpts& opts) {
  Dataset ds = load_dataset(opts.data);
  CodesFile codes = load_codes(opts.codes);
  const uint32_t tone_fp = tone_vocab_fingerprint(ds.tone_vocab);
  const uint32_t chord_fp = chord_vocab_fingerprint(ds.chord_vocab);
  if (codes.tone_fp != tone_fp || codes.chord_fp != chord_fp)
    throw Error(ErrorKind::VocabMismatch,
                "codes file fingerprints do not match the dataset");
  if (int64_t(codes.grids.size()) != ds.size())
    throw Error(ErrorKind::Contract, "codes file holds " + std::to_string(codes.grids.size()) +
                                         " grids for a dataset of " + std::to_string(ds.size()) +
                                         " measures");

  PriorConfig cfg;
  cfg.grid_h = codes.grids.front().rows;
  cfg.grid_w = codes.grids.front().cols;
  cfg.chord_vocab = ds.chord_vocab.size();
  PriorBundle<float> bundle = PriorBundle<float>::init(cfg, opts.seed);

  const std::vector<ChordTriplet> triplets = dataset_triplets(ds);
  std::vector<CondSpec> conds;
  for (size_t i = 0; i < codes.grids.size(); ++i) {
    CondSpec cond;
    cond.triplet = triplets[i];
    if (opts.spatial && i > 0 && ds.measures[i - 1].piece_id == ds.measures[i].piece_id)
      cond.spatial = codes.grids[i - 1];
    conds.push_back(std::move(cond));
  }

  PriorTrainConfig tc;
  tc.steps = opts.steps;
  tc.batch = opts.batch;
  tc.seed = opts.seed;
  tc.indices = train_index_list(ds);
  std::vector<LossRecord> records = train_prior(bundle, codes.grids, conds, tc);

  const Json config = prior_config_json(cfg, opts.seed, ds.chord_vocab, tone_fp, chord_fp,
                                        opts.spatial);
  save_prior(opts.out, bundle, config);
  write_loss_csv(opts.out, records);
  std::cerr << "train-prior: " << records.size() << " steps on " << tc.indices.size()
            << " grids";
  if (!records.empty()) std::cerr << ", final loss " << records.back().loss;
  std::cerr << "\n";
}

void cmd_generate(const GenerateOpts& opts) {
  if (opts.out_midi.empty() && opts.out_ppm.empty())
    throw Error(ErrorKind::Contract, "generate: no outputs requested (need --out-midi and/or "
                                     "--out-ppm)");
  LoadedVqVae vq = load_vqvae(opts.vqvae);
  LoadedPrior prior = load_prior(opts.prior);
  if (vq.tone_fp() != prior.tone_fp() || vq.chord_fp() != prior.chord_fp())
    throw Error(ErrorKind::VocabMismatch,
                "vqvae and prior checkpoints were built from different vocabularies");
  if (prior.bundle.model.cfg.grid_h != vq.bundle.model.cfg.grid_h() ||
      prior.bundle.model.cfg.grid_w != vq.bundle.model.cfg.grid_w())
    throw Error(ErrorKind::Dimension, "checkpoint grid shapes disagree");

  std::vector<std::string> labels = split_csv(opts.chords);
  if (labels.size() < 3)
    throw Error(ErrorKind::Contract,
                "generate: need at least 3 chord labels (boundary repeats included)");
  std::vector<int32_t> ids;
  for (const std::string& label : labels) {
    if (!prior.chord_vocab.contains(label)) {
      std::string known;
      for (const std::string& l : prior.chord_vocab.labels())
        known += (known.empty() ? "" : ",") + l;
      throw Error(ErrorKind::Index,
                  "unknown chord label '" + label + "'; vocabulary: " + known);
    }
    ids.push_back(prior.chord_vocab.id_of(label));
  }

  std::vector<CodeGrid> grids = generate_sequence(prior.bundle.model, ids, opts.spatial,
                                                  opts.temperature, opts.seed);
  std::vector<RollMeasure> rolls;
  for (const CodeGrid& g : grids) rolls.push_back(reconstruct(vq.bundle.model, g));

  if (!opts.out_midi.empty())
    write_file_atomic(opts.out_midi, rolls_to_midi(rolls, vq.tone_vocab));
  if (!opts.out_ppm.empty()) write_file_atomic(opts.out_ppm, roll_to_ppm(rolls));
  std::cerr << "generate: " << grids.size() << " measures ("
            << grids.size() * size_t(vq.bundle.model.cfg.input_w) << " timesteps)\n";
}

void cmd_synth_corpus(const SynthOpts& opts) {
  SynthSpec spec;
  spec.seed = opts.seed;
  spec.pieces = opts.pieces;
  spec.measures_per_piece = opts.measures;
  std::vector<fs::path> paths = write_synth_corpus(opts.out_dir, spec);
  std::cerr << "synth-corpus: wrote " << paths.size() << " pieces to " << opts.out_dir << "\n";
}

}  // namespace recomp
