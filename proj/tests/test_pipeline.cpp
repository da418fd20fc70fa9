// Dataset building/serialization, checkpoint container, holdout hygiene,
// synthetic corpus, command-level end-to-end flows, CLI exit codes.

#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "recomp/pipeline/binio.hpp"
#include "recomp/pipeline/commands.hpp"
#include "recomp/pipeline/dataset.hpp"
#include "recomp/pipeline/model_io.hpp"
#include "recomp/pipeline/synth.hpp"
#include "recomp/score/kern.hpp"
#include "recomp/score/key.hpp"
#include "recomp/score/midi.hpp"

using namespace recomp;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() /
                 ("recomp_test_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Dataset synth_dataset(const fs::path& dir, uint64_t seed, int pieces, int measures,
                      int64_t holdout) {
  SynthSpec spec;
  spec.seed = seed;
  spec.pieces = pieces;
  spec.measures_per_piece = measures;
  auto paths = write_synth_corpus(dir, spec);
  std::vector<std::string> warnings;
  Dataset ds = build_dataset(paths, holdout, &warnings);
  CHECK(warnings.empty());
  return ds;
}

}  // namespace

TEST_CASE("synth corpus: deterministic, parses clean, labels as planted") {
  SynthSpec spec;
  spec.seed = 5;
  spec.pieces = 2;
  spec.measures_per_piece = 6;
  auto a = synth_corpus(spec);
  auto b = synth_corpus(spec);
  REQUIRE(a.size() == 2);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].kern_text == b[i].kern_text);
    CHECK(a[i].intended_labels == b[i].intended_labels);
  }

  for (const SynthPiece& piece : a) {
    ParseResult parsed = parse_kern_subset(piece.kern_text);
    CHECK(parsed.warnings.empty());
    CHECK(parsed.score.parts.size() == 4);
    CHECK(parsed.score.measure_count() == 6);
  }

  // planted chords survive the full dataset path
  fs::path dir = temp_dir("synthlabels");
  Dataset ds = synth_dataset(dir, 5, 2, 6, 0);
  size_t mi = 0;
  for (const SynthPiece& piece : a)
    for (const std::string& intended : piece.intended_labels) {
      CHECK(ds.chord_vocab.label_of(int32_t(ds.measures[mi].label_id)) == intended);
      ++mi;
    }
  fs::remove_all(dir);
}

TEST_CASE("build_dataset: counts, rebuild determinism, errors") {
  fs::path dir = temp_dir("build");
  Dataset ds = synth_dataset(dir, 9, 2, 4, 2);
  CHECK(ds.piece_names.size() == 2);
  CHECK(ds.size() == 8);
  CHECK(ds.holdout_count == 2);
  CHECK(ds.holdout_start == 6);
  CHECK(ds.train_indices().size() == 6);
  CHECK(ds.parts == 4);
  CHECK(ds.timesteps == 16);
  CHECK(ds.tone_vocab.padded_size() % 4 == 0);
  CHECK(ds.tone_vocab.padded_size() - ds.tone_vocab.raw_size() < 4);

  // byte-identical rebuild
  save_dataset(dir / "a.ds", ds);
  std::vector<fs::path> inputs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".krn") inputs.push_back(e.path());
  Dataset ds2 = build_dataset(inputs, 2, nullptr);
  save_dataset(dir / "b.ds", ds2);
  CHECK(read_file(dir / "a.ds") == read_file(dir / "b.ds"));

  // load round trip
  Dataset loaded = load_dataset(dir / "a.ds");
  CHECK(loaded.size() == ds.size());
  CHECK(loaded.tone_vocab.pitches == ds.tone_vocab.pitches);
  CHECK(loaded.chord_vocab.serialize() == ds.chord_vocab.serialize());
  CHECK(loaded.holdout_start == ds.holdout_start);
  for (int64_t i = 0; i < ds.size(); ++i) {
    CHECK(loaded.measures[size_t(i)].roll == ds.measures[size_t(i)].roll);
    CHECK(loaded.measures[size_t(i)].label_id == ds.measures[size_t(i)].label_id);
  }

  // holdout >= corpus errors
  CHECK_THROWS_AS(build_dataset(inputs, 8, nullptr), Error);

  // zero 4-part pieces errors
  write_file_atomic(dir / "three.krn", "**kern\t**kern\t**kern\n4c\t4e\t4g\n=\t=\t=\n*-\t*-\t*-\n");
  std::vector<std::string> warnings;
  CHECK_THROWS_AS(build_dataset({dir / "three.krn"}, 0, &warnings), Error);
  CHECK(warnings.size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("dataset triplets repeat borders per piece") {
  fs::path dir = temp_dir("triplets");
  Dataset ds = synth_dataset(dir, 11, 2, 3, 0);
  auto triplets = dataset_triplets(ds);
  REQUIRE(triplets.size() == 6);
  // piece 0: measures 0..2, piece 1: measures 3..5
  CHECK(triplets[0].prev_id == int32_t(ds.measures[0].label_id));
  CHECK(triplets[0].next_id == int32_t(ds.measures[1].label_id));
  CHECK(triplets[2].next_id == int32_t(ds.measures[2].label_id));
  CHECK(triplets[3].prev_id == int32_t(ds.measures[3].label_id));  // piece border, not 2
  CHECK(triplets[5].next_id == int32_t(ds.measures[5].label_id));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint container: round trip, corruption, kind and version checks") {
  fs::path dir = temp_dir("ckpt");
  VqVaeConfig cfg;
  cfg.input_h = 8;
  cfg.input_w = 8;
  cfg.voices = 2;
  cfg.channels = {8, 16, 16, 16};
  cfg.codebook_size = 8;
  VqVaeBundle<float> bundle = VqVaeBundle<float>::init(cfg, 77);
  ToneVocab tv;
  tv.pitches = {60, 62, 64};
  const Json config = vqvae_config_json(cfg, 77, tv, 123, 456);

  const fs::path p1 = dir / "m1.ckpt";
  save_vqvae(p1, bundle, config);
  LoadedVqVae loaded = load_vqvae(p1);
  CHECK(loaded.tone_vocab.pitches == tv.pitches);
  CHECK(loaded.tone_fp() == 123);
  const fs::path p2 = dir / "m2.ckpt";
  save_vqvae(p2, loaded.bundle, loaded.config);
  CHECK(read_file(p1) == read_file(p2));

  // flipping one payload byte -> CRC error naming the checksum offset
  std::string bytes = read_file(p1);
  bytes[bytes.size() / 2] = char(bytes[bytes.size() / 2] ^ 0x40);
  write_file_atomic(dir / "corrupt.ckpt", bytes);
  try {
    load_checkpoint(dir / "corrupt.ckpt");
    FAIL("expected corruption error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Corrupt);
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }

  // loading a vqvae checkpoint as a prior -> model-kind error
  try {
    load_checkpoint(p1, ModelKind::Prior);
    FAIL("expected model-kind error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ModelKind);
  }

  // unsupported version (patched field + recomputed CRC)
  std::string vbytes = read_file(p1);
  vbytes.resize(vbytes.size() - 4);
  vbytes[4] = 99;
  const uint32_t crc = crc32_bytes(vbytes.data(), vbytes.size());
  for (int i = 0; i < 4; ++i) vbytes.push_back(char((crc >> (8 * i)) & 0xFF));
  write_file_atomic(dir / "future.ckpt", vbytes);
  try {
    load_checkpoint(dir / "future.ckpt");
    FAIL("expected version error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Version);
  }
  fs::remove_all(dir);
}

TEST_CASE("codes file round trip") {
  fs::path dir = temp_dir("codes");
  CodesFile codes;
  codes.tone_fp = 7;
  codes.chord_fp = 8;
  Rng rng(3);
  for (int i = 0; i < 3; ++i) {
    CodeGrid g = CodeGrid::zeros(7, 4);
    for (auto& c : g.codes) c = uint16_t(rng.next_below(256));
    codes.grids.push_back(std::move(g));
  }
  save_codes(dir / "c.codes", codes);
  CodesFile loaded = load_codes(dir / "c.codes");
  CHECK(loaded.tone_fp == 7);
  CHECK(loaded.chord_fp == 8);
  CHECK(loaded.grids == codes.grids);
  fs::remove_all(dir);
}

TEST_CASE("holdout hygiene: no holdout index ever reaches a training batch") {
  fs::path dir = temp_dir("hygiene");
  Dataset ds = synth_dataset(dir, 21, 2, 4, 3);
  std::vector<RollMeasure> rolls;
  for (const DatasetMeasure& m : ds.measures) rolls.push_back(m.roll);

  VqVaeConfig cfg;
  cfg.input_h = ds.tone_vocab.padded_size();
  cfg.input_w = 16;
  cfg.voices = 4;
  cfg.channels = {4, 8, 8, 8};
  cfg.codebook_size = 4;
  VqVaeBundle<float> bundle = VqVaeBundle<float>::init(cfg, 1);

  VqTrainConfig tc;
  tc.steps = 9;  // several epochs over 5 train measures at batch 2
  tc.batch = 2;
  tc.seed = 1;
  for (size_t i : ds.train_indices()) tc.indices.push_back(int64_t(i));
  std::set<int64_t> seen;
  tc.batch_observer = [&](std::span<const int64_t> batch) {
    for (int64_t i : batch) {
      seen.insert(i);
      CHECK(!ds.is_holdout(size_t(i)));
    }
  };
  train_vqvae(bundle, rolls, tc);
  CHECK(seen.size() == ds.train_indices().size());
  fs::remove_all(dir);
}

TEST_CASE("command pipeline end to end; greedy generation is byte-identical") {
  fs::path dir = temp_dir("e2e");
  cmd_synth_corpus({31, 2, 4, (dir / "corpus").string()});
  cmd_build_dataset({(dir / "corpus").string(), (dir / "data.ds").string(), 2});

  TrainVqvaeOpts vq;
  vq.data = (dir / "data.ds").string();
  vq.out = (dir / "vq.ckpt").string();
  vq.steps = 2;
  vq.batch = 4;
  vq.seed = 3;
  vq.channels = "8,16,32,32";
  cmd_train_vqvae(vq);
  CHECK(fs::exists(dir / "vq.ckpt.loss.csv"));

  cmd_encode({(dir / "data.ds").string(), (dir / "vq.ckpt").string(),
              (dir / "z.codes").string()});

  TrainPriorOpts pr;
  pr.codes = (dir / "z.codes").string();
  pr.data = (dir / "data.ds").string();
  pr.out = (dir / "prior.ckpt").string();
  pr.steps = 2;
  pr.batch = 4;
  pr.seed = 4;
  cmd_train_prior(pr);

  Dataset ds = load_dataset(dir / "data.ds");
  std::string chords;
  // a 10-label sequence with boundary repeats, drawn from the vocab
  std::vector<std::string> labels = ds.chord_vocab.labels();
  REQUIRE(labels.size() >= 3);
  std::vector<std::string> seq;
  seq.push_back(labels[0]);
  for (int i = 0; i < 8; ++i) seq.push_back(labels[size_t(i) % labels.size()]);
  seq.push_back(seq.back());
  for (size_t i = 0; i < seq.size(); ++i) chords += (i ? "," : "") + seq[i];

  GenerateOpts gen;
  gen.vqvae = (dir / "vq.ckpt").string();
  gen.prior = (dir / "prior.ckpt").string();
  gen.chords = chords;
  gen.temperature = 0.0;
  gen.seed = 5;
  gen.out_midi = (dir / "out1.mid").string();
  gen.out_ppm = (dir / "out1.ppm").string();
  cmd_generate(gen);
  gen.out_midi = (dir / "out2.mid").string();
  gen.out_ppm = (dir / "out2.ppm").string();
  cmd_generate(gen);

  const std::string midi1 = read_file(dir / "out1.mid");
  CHECK(midi1 == read_file(dir / "out2.mid"));
  CHECK(read_file(dir / "out1.ppm") == read_file(dir / "out2.ppm"));

  // 10 labels -> 8 measures -> 128 slots of timeline
  MidiFile parsed = read_midi(midi1);
  CHECK(parsed.end_tick == 8 * 16 * 120);

  // unknown chord label lists the vocabulary
  GenerateOpts bad = gen;
  bad.chords = "I,NOPE,I";
  try {
    cmd_generate(bad);
    FAIL("expected unknown-label error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Index);
    CHECK(std::string(e.what()).find(labels[1]) != std::string::npos);
  }

  // vocab mismatch: dataset from a different corpus
  cmd_synth_corpus({99, 1, 6, (dir / "corpus2").string()});
  cmd_build_dataset({(dir / "corpus2").string(), (dir / "data2.ds").string(), 0});
  try {
    cmd_encode({(dir / "data2.ds").string(), (dir / "vq.ckpt").string(),
                (dir / "z2.codes").string()});
    FAIL("expected vocab mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::VocabMismatch);
  }
  fs::remove_all(dir);
}

TEST_CASE("steps=0 pipeline still completes") {
  fs::path dir = temp_dir("steps0");
  cmd_synth_corpus({41, 1, 5, (dir / "corpus").string()});
  cmd_build_dataset({(dir / "corpus").string(), (dir / "data.ds").string(), 0});
  TrainVqvaeOpts vq{(dir / "data.ds").string(), (dir / "vq.ckpt").string(), 0, 4, 1, 0.25,
                    "8,16,32,32"};
  cmd_train_vqvae(vq);
  cmd_encode({(dir / "data.ds").string(), (dir / "vq.ckpt").string(), (dir / "z.codes").string()});
  TrainPriorOpts pr;
  pr.codes = (dir / "z.codes").string();
  pr.data = (dir / "data.ds").string();
  pr.out = (dir / "prior.ckpt").string();
  pr.steps = 0;
  cmd_train_prior(pr);
  Dataset ds = load_dataset(dir / "data.ds");
  GenerateOpts gen;
  gen.vqvae = (dir / "vq.ckpt").string();
  gen.prior = (dir / "prior.ckpt").string();
  gen.chords = ds.chord_vocab.label_of(0) + "," + ds.chord_vocab.label_of(0) + "," +
               ds.chord_vocab.label_of(0);
  gen.temperature = 1.0;
  gen.seed = 2;
  gen.out_midi = (dir / "o.mid").string();
  gen.out_ppm = (dir / "o.ppm").string();
  cmd_generate(gen);
  CHECK_NOTHROW(read_midi(read_file(dir / "o.mid")));
  CHECK(read_file(dir / "o.ppm").substr(0, 3) == "P6\n");
  fs::remove_all(dir);
}

#ifdef RECOMP_CLI_PATH
TEST_CASE("CLI exit codes: usage 2, vocab mismatch 3, success 0") {
  const std::string cli = RECOMP_CLI_PATH;
  fs::path dir = temp_dir("cli");
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " 2>/dev/null";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
  };

  CHECK(run("--definitely-not-a-flag") == 2);
  CHECK(run("build-dataset --nope x") == 2);

  CHECK(run("synth-corpus --seed 7 --pieces 1 --measures 5 --out " +
            (dir / "c").string()) == 0);
  CHECK(run("build-dataset --in " + (dir / "c").string() + " --out " +
            (dir / "d.ds").string() + " --holdout 1") == 0);
  CHECK(run("train-vqvae --data " + (dir / "d.ds").string() + " --steps 0 --batch 4 --seed 1 " +
            "--channels 8,16,32,32 --out " + (dir / "vq.ckpt").string()) == 0);

  // second corpus -> different vocab -> encode mismatch exits 3
  CHECK(run("synth-corpus --seed 99 --pieces 1 --measures 6 --out " + (dir / "c2").string()) ==
        0);
  CHECK(run("build-dataset --in " + (dir / "c2").string() + " --out " + (dir / "d2.ds").string() +
            " --holdout 0") == 0);
  CHECK(run("encode --data " + (dir / "d2.ds").string() + " --vqvae " +
            (dir / "vq.ckpt").string() + " --out " + (dir / "z.codes").string()) == 3);

  // missing input file is a runtime error -> 1
  CHECK(run("encode --data " + (dir / "missing.ds").string() + " --vqvae " +
            (dir / "vq.ckpt").string() + " --out " + (dir / "z.codes").string()) == 1);
  fs::remove_all(dir);
}
#endif

TEST_CASE("minor-mode pieces get natural-minor labels through the dataset path") {
  // Four whole-measure chords authored in A minor: i, iv, v, VI.
  const char* piece =
      "**kern\t**kern\t**kern\t**kern\n"
      "1AA\t1c\t1e\t1a\n"
      "=2\t=2\t=2\t=2\n"
      "1DD\t1f\t1a\t1dd\n"
      "=3\t=3\t=3\t=3\n"
      "1EE\t1g\t1b\t1ee\n"
      "=4\t=4\t=4\t=4\n"
      "1FF\t1a\t1cc\t1ff\n"
      "==\t==\t==\t==\n"
      "*-\t*-\t*-\t*-\n";
  fs::path dir = temp_dir("minor");
  write_file_atomic(dir / "aminor.krn", piece);

  ParseResult parsed = parse_kern_subset(piece);
  KeyEstimate key = estimate_key(parsed.score);
  CHECK(key.tonic == 9);
  CHECK(key.mode == Mode::Minor);

  Dataset ds = build_dataset({dir / "aminor.krn"}, 0, nullptr);
  REQUIRE(ds.size() == 4);
  CHECK(ds.piece_modes[0] == Mode::Minor);
  std::vector<std::string> labels;
  for (const DatasetMeasure& m : ds.measures)
    labels.push_back(ds.chord_vocab.label_of(int32_t(m.label_id)));
  CHECK(labels == std::vector<std::string>{"i", "iv", "v", "VI"});
  fs::remove_all(dir);
}

TEST_CASE("spatial conditioning runs through the command pipeline") {
  fs::path dir = temp_dir("spatial");
  cmd_synth_corpus({51, 1, 6, (dir / "corpus").string()});
  cmd_build_dataset({(dir / "corpus").string(), (dir / "data.ds").string(), 0});
  TrainVqvaeOpts vq{(dir / "data.ds").string(), (dir / "vq.ckpt").string(), 2, 6, 1, 0.25,
                    "8,16,32,32"};
  cmd_train_vqvae(vq);
  cmd_encode({(dir / "data.ds").string(), (dir / "vq.ckpt").string(), (dir / "z.codes").string()});
  TrainPriorOpts pr;
  pr.codes = (dir / "z.codes").string();
  pr.data = (dir / "data.ds").string();
  pr.out = (dir / "prior.ckpt").string();
  pr.steps = 2;
  pr.batch = 6;
  pr.spatial = true;
  cmd_train_prior(pr);
  CHECK(load_prior(dir / "prior.ckpt").spatial());

  Dataset ds = load_dataset(dir / "data.ds");
  GenerateOpts gen;
  gen.vqvae = (dir / "vq.ckpt").string();
  gen.prior = (dir / "prior.ckpt").string();
  gen.chords = ds.chord_vocab.label_of(0) + "," + ds.chord_vocab.label_of(1) + "," +
               ds.chord_vocab.label_of(2) + "," + ds.chord_vocab.label_of(2);
  gen.temperature = 0.0;
  gen.seed = 1;
  gen.spatial = true;
  gen.out_midi = (dir / "s.mid").string();
  gen.out_ppm = (dir / "s.ppm").string();
  cmd_generate(gen);
  MidiFile parsed = read_midi(read_file(dir / "s.mid"));
  CHECK(parsed.end_tick == 2 * 16 * 120);  // 4 labels -> 2 measures
  fs::remove_all(dir);
}
