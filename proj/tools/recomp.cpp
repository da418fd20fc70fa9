// Command-line front end for the recomposition pipeline:
//   synth-corpus -> build-dataset -> train-vqvae -> encode -> train-prior
//   -> generate
// Exit codes: 0 ok, 1 runtime error, 2 usage error, 3 vocabulary mismatch.

#include <CLI11.hpp>
#include <iostream>

#include "recomp/error.hpp"
#include "recomp/pipeline/commands.hpp"

namespace {

bool flag_on(const std::string& v) { return v == "on"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage chord-conditional recomposition pipeline"};
  app.require_subcommand(1);

  recomp::BuildDatasetOpts build_opts;
  auto* build = app.add_subcommand("build-dataset", "Parse kern files into a dataset");
  build->add_option("--in", build_opts.in_dir, "Directory of kern files")->required();
  build->add_option("--out", build_opts.out, "Output dataset file")->required();
  build->add_option("--holdout", build_opts.holdout,
                    "Measures held out at the corpus tail for generation chords");

  recomp::TrainVqvaeOpts vq_opts;
  auto* train_vq = app.add_subcommand("train-vqvae", "Train the first-stage VQ-VAE");
  train_vq->add_option("--data", vq_opts.data, "Dataset file")->required();
  train_vq->add_option("--steps", vq_opts.steps, "Minibatch steps")->required();
  train_vq->add_option("--batch", vq_opts.batch, "Minibatch size (default 64)");
  train_vq->add_option("--seed", vq_opts.seed, "RNG seed");
  train_vq->add_option("--beta", vq_opts.beta, "Commitment loss weight (default 0.25)");
  train_vq->add_option("--channels", vq_opts.channels,
                       "Encoder channel sizes (default 64,128,256,256)");
  train_vq->add_option("--out", vq_opts.out, "Output checkpoint")->required();

  recomp::EncodeOpts enc_opts;
  auto* encode = app.add_subcommand("encode", "Encode every measure to a code grid");
  encode->add_option("--data", enc_opts.data, "Dataset file")->required();
  encode->add_option("--vqvae", enc_opts.vqvae, "VQ-VAE checkpoint")->required();
  encode->add_option("--out", enc_opts.out, "Output codes file")->required();

  recomp::TrainPriorOpts prior_opts;
  std::string prior_spatial = "off";
  auto* train_prior = app.add_subcommand("train-prior", "Train the conditional prior");
  train_prior->add_option("--codes", prior_opts.codes, "Codes file from encode")->required();
  train_prior->add_option("--data", prior_opts.data, "Dataset file")->required();
  train_prior->add_option("--steps", prior_opts.steps, "Minibatch steps")->required();
  train_prior->add_option("--batch", prior_opts.batch, "Minibatch size (default 50)");
  train_prior->add_option("--seed", prior_opts.seed, "RNG seed");
  train_prior->add_option("--spatial", prior_spatial, "Condition on the previous measure's grid")
      ->check(CLI::IsMember({"on", "off"}));
  train_prior->add_option("--out", prior_opts.out, "Output checkpoint")->required();

  recomp::GenerateOpts gen_opts;
  std::string gen_spatial = "off";
  auto* generate = app.add_subcommand("generate", "Sample measures over a chord sequence");
  generate->add_option("--vqvae", gen_opts.vqvae, "VQ-VAE checkpoint")->required();
  generate->add_option("--prior", gen_opts.prior, "Prior checkpoint")->required();
  generate
      ->add_option("--chords", gen_opts.chords,
                   "Comma-separated labels, boundary repeats included")
      ->required();
  generate->add_option("--temperature", gen_opts.temperature, "Sampling temperature (default 1)");
  generate->add_option("--seed", gen_opts.seed, "RNG seed");
  generate->add_option("--spatial", gen_spatial, "Condition on the previous generated grid")
      ->check(CLI::IsMember({"on", "off"}));
  generate->add_option("--out-midi", gen_opts.out_midi, "Output MIDI file");
  generate->add_option("--out-ppm", gen_opts.out_ppm, "Output PPM image");

  recomp::SynthOpts synth_opts;
  auto* synth = app.add_subcommand("synth-corpus", "Write a synthetic kern micro-corpus");
  synth->add_option("--seed", synth_opts.seed, "RNG seed");
  synth->add_option("--pieces", synth_opts.pieces, "Number of pieces");
  synth->add_option("--measures", synth_opts.measures, "Measures per piece");
  synth->add_option("--out", synth_opts.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    std::cerr << app.help();
    return 2;
  }

  try {
    if (build->parsed()) recomp::cmd_build_dataset(build_opts);
    if (train_vq->parsed()) recomp::cmd_train_vqvae(vq_opts);
    if (encode->parsed()) recomp::cmd_encode(enc_opts);
    if (train_prior->parsed()) {
      prior_opts.spatial = flag_on(prior_spatial);
      recomp::cmd_train_prior(prior_opts);
    }
    if (generate->parsed()) {
      gen_opts.spatial = flag_on(gen_spatial);
      recomp::cmd_generate(gen_opts);
    }
    if (synth->parsed()) recomp::cmd_synth_corpus(synth_opts);
  } catch (const recomp::Error& e) {
    std::cerr << e.oneline() << "\n";
    return e.kind() == recomp::ErrorKind::VocabMismatch ? 3 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
