#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "grhd/cli/commands.hpp"
#include "grhd/common/error.hpp"
#include "grhd/common/key_value.hpp"

namespace {

using grhd::KeyValues;
using grhd::format_double;

struct Flags {
  std::string data, machine, config, out;
  std::vector<std::string> checkpoints;
  std::optional<unsigned long long> seed;
  std::optional<long> epochs;
  std::optional<double> alpha, beta, gamma, p;
  std::optional<std::string> scorer, precision;
  bool inject_fault = false;
};

// Flags override the config file, so they are folded in as key-value pairs after it.
grhd::cli::RunConfig resolve(const Flags& f) {
  grhd::cli::RunConfig config;
  if (!f.config.empty()) config.apply_file(f.config);
  KeyValues kv;
  if (f.seed) kv.emplace_back("seed", std::to_string(*f.seed));
  if (f.epochs) kv.emplace_back("epochs", std::to_string(*f.epochs));
  if (f.alpha) kv.emplace_back("alpha", format_double(*f.alpha));
  if (f.beta) kv.emplace_back("beta", format_double(*f.beta));
  if (f.gamma) kv.emplace_back("gamma", format_double(*f.gamma));
  if (f.p) kv.emplace_back("p", format_double(*f.p));
  if (f.scorer) kv.emplace_back("scorer", *f.scorer);
  if (f.precision) kv.emplace_back("precision", *f.precision);
  config.apply(kv);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grhd: anomalous machine sound detection with gradient-reversal hierarchical classifiers"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "random seed");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  common(synth);
  synth->add_option("--out", f.out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train one model per machine type");
  common(train);
  train->add_option("--data", f.data, "corpus directory")->required();
  train->add_option("--machine", f.machine, "machine type")->required();
  train->add_option("--out", f.out, "checkpoint path")->required();
  train->add_option("--epochs", f.epochs, "training epochs");
  train->add_option("--alpha", f.alpha, "weight of the reversed attribute loss");
  train->add_option("--beta", f.beta, "weight of the section loss");
  train->add_option("--gamma", f.gamma, "weight of the attribute loss");
  train->add_option("--precision", f.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

  auto* eval = app.add_subcommand("eval", "score test clips and write the AUC report");
  common(eval);
  eval->add_option("--checkpoint", f.checkpoints, "checkpoint path (repeat for several machines)")->required();
  eval->add_option("--data", f.data, "corpus directory")->required();
  eval->add_option("--out", f.out, "report CSV path")->required();
  eval->add_option("--scorer", f.scorer, "nls or knn")->check(CLI::IsMember({"nls", "knn"}));
  eval->add_option("--p", f.p, "pAUC false-positive limit");

  auto* embed = app.add_subcommand("embed", "export pooled embeddings");
  embed->add_option("--checkpoint", f.checkpoints, "checkpoint path")->required()->expected(1);
  embed->add_option("--data", f.data, "corpus directory")->required();
  embed->add_option("--out", f.out, "embeddings CSV path")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "run the gradient checks");
  gradcheck->add_option("--seed", f.seed, "random seed");
  gradcheck->add_flag("--inject-grl-fault", f.inject_fault, "flip the sign of the reversal layer")->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return grhd::cli::cmd_synth(resolve(f), f.out, std::cout);
    if (*train) return grhd::cli::cmd_train(resolve(f), f.data, f.machine, f.out, std::cout);
    if (*eval) {
      std::vector<std::filesystem::path> paths(f.checkpoints.begin(), f.checkpoints.end());
      return grhd::cli::cmd_eval(resolve(f), paths, f.data, f.out, std::cout);
    }
    if (*embed) return grhd::cli::cmd_embed(f.checkpoints.front(), f.data, f.out, std::cout);
    if (*gradcheck) return grhd::cli::cmd_gradcheck(f.seed.value_or(0), f.inject_fault, std::cout);
  } catch (const grhd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
