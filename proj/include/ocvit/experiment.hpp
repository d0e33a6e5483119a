#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ocvit/dataio.hpp"
#include "ocvit/encoder.hpp"
#include "ocvit/evalproto.hpp"
#include "ocvit/gradcheck.hpp"
#include "ocvit/oneclass.hpp"
#include "ocvit/param_store.hpp"

namespace ocvit {

enum class DatasetKind { kSynthetic, kIdx, kCifarBin };

struct ExperimentConfig {
  EncoderConfig encoder;
  TrainConfig train;
  std::string head_kind = "mlp";  // mlp | svm | kde
  std::size_t head_depth = 1;
  double svm_c = 1.0;
  std::optional<double> kde_bandwidth;
  Protocol protocol = Protocol::kNormalVsRest;

  DatasetKind kind = DatasetKind::kSynthetic;
  SyntheticSpec synthetic;
  std::filesystem::path train_images, train_labels;  // idx
  std::filesystem::path test_images, test_labels;
  std::vector<std::filesystem::path> train_bins, test_bins;  // cifar
  std::size_t cifar_label_bytes = 1;

  std::vector<std::uint64_t> seeds;
  std::optional<std::vector<int>> class_filter;  // restrict eval to these
  int score_class = 0;
  std::filesystem::path out_dir = "runs/out";
  AblationGrid ablate;  // axes default to the single configured value

  std::string to_text() const;  // flat key=value snapshot
};

/// Parses the flat key=value config format (dotted section prefixes, '#'
/// comments). Unknown keys and missing referenced files are errors.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::filesystem::path& base_dir);

/// Loads the configured dataset, resizing to the encoder input size and
/// adapting the channel count.
Dataset load_dataset(const ExperimentConfig& cfg);

std::vector<SplitSpec> make_splits(const ExperimentConfig& cfg,
                                   const Dataset& data);

struct SplitRunResult {
  ParamStore store;
  TrainHistory history;
  std::vector<double> test_scores;
  double auc = 0.0;
};

/// Deterministic train + score + AUC for one split and seed; the path every
/// command (train, eval, ablate) shares.
SplitRunResult run_split(const ExperimentConfig& cfg, const Dataset& data,
                         const SplitSpec& split, std::uint64_t seed);

// Output layout inside cfg.out_dir.
std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, int cls,
                                      std::uint64_t seed);
std::filesystem::path history_path(const ExperimentConfig& cfg, int cls,
                                   std::uint64_t seed);
std::filesystem::path eval_csv_path(const ExperimentConfig& cfg);
std::filesystem::path ablation_csv_path(const ExperimentConfig& cfg);

/// Shortest-round-trip, locale-independent decimal formatting.
std::string format_double(double v);

void write_history_csv(const std::filesystem::path& path,
                       const TrainHistory& history);

struct EvalRow {
  int cls = 0;
  std::uint64_t seed = 0;
  double auc = 0.0;
};

/// "class,seed,auc" rows followed by "mean" / "std" summary rows.
void write_eval_csv(const std::filesystem::path& path,
                    const std::vector<EvalRow>& rows, double mean,
                    double stddev);

struct GradSuiteCase {
  std::string name;
  double tolerance = 1e-4;
  GradCheckReport report;
};

/// The differentiable-op gradient suite: 50 random points per op at rel tol
/// 1e-4, plus one full tiny-pipeline BCE check at 1e-3.
std::vector<GradSuiteCase> run_gradient_suite(std::uint64_t seed);

// Command entry points (shared by the CLI and tests). Each returns the
// process exit code: 0 success, 1 runtime failure, 2 usage error.
int cmd_train(const ExperimentConfig& cfg);
int cmd_eval(const ExperimentConfig& cfg);
int cmd_ablate(const ExperimentConfig& cfg);
int cmd_score(const ExperimentConfig& cfg,
              const std::vector<std::filesystem::path>& inputs);
int cmd_gradcheck(const ExperimentConfig& cfg);

}  // namespace ocvit
