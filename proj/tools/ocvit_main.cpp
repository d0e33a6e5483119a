#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ocvit/errors.hpp"
#include "ocvit/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"one-class classification with a from-scratch ViT extractor"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> protocol;
  std::optional<std::string> head;
  std::optional<std::size_t> depth;
  std::vector<std::string> inputs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file")
        ->required();
    sub->add_option("--seed", seed,
                    "override train.seed; the seed list is rebuilt from it "
                    "keeping its length");
    sub->add_option("--out", out_dir, "override the output directory");
    sub->add_option("--protocol", protocol,
                    "override the split protocol (normal-vs-rest, "
                    "paper-literal)");
    sub->add_option("--head", head, "override head.kind (mlp, svm, kde)");
    sub->add_option("--depth", depth, "override head.depth");
  };

  CLI::App* train =
      app.add_subcommand("train", "train one model per class and seed");
  add_common(train);
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "train, score the test split, report AUC");
  add_common(eval_cmd);
  CLI::App* ablate =
      app.add_subcommand("ablate", "sweep the configured ablation grid");
  add_common(ablate);
  CLI::App* score =
      app.add_subcommand("score", "score images against a trained checkpoint");
  add_common(score);
  score->add_option("inputs", inputs, "single-image idx files")
      ->expected(-1);
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "run the gradient-check suite");
  add_common(gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  ocvit::ExperimentConfig cfg;
  try {
    cfg = ocvit::load_config(config_path);
    if (seed) {
      std::size_t count = cfg.seeds.size();
      cfg.train.seed = *seed;
      cfg.seeds.clear();
      for (std::size_t i = 0; i < count; ++i) cfg.seeds.push_back(*seed + i);
    }
    if (out_dir) cfg.out_dir = *out_dir;
    if (protocol) cfg.protocol = ocvit::parse_protocol(*protocol);
    if (head) {
      if (*head != "mlp" && *head != "svm" && *head != "kde") {
        throw ocvit::ConfigError("--head '" + *head +
                                 "' not in {mlp, svm, kde}");
      }
      cfg.head_kind = *head;
    }
    if (depth) {
      if (*depth < 1) throw ocvit::ConfigError("--depth must be >= 1");
      cfg.head_depth = *depth;
    }
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << "\n";
    return 2;
  }

  if (train->parsed()) return ocvit::cmd_train(cfg);
  if (eval_cmd->parsed()) return ocvit::cmd_eval(cfg);
  if (ablate->parsed()) return ocvit::cmd_ablate(cfg);
  if (score->parsed()) {
    std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
    return ocvit::cmd_score(cfg, paths);
  }
  return ocvit::cmd_gradcheck(cfg);
}
