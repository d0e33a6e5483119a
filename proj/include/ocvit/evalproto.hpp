#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocvit/tensor.hpp"

namespace ocvit {

struct Dataset {
  std::vector<Tensor> train_images;
  std::vector<int> train_labels;
  std::vector<Tensor> test_images;
  std::vector<int> test_labels;  // class ids, or 0/1 anomaly flags for synthetic
};

enum class Protocol {
  kNormalVsRest,  // train = normal-class train images, test = full test set
  kPaperLiteral,  // non-normal test pool subsampled to the normal test count
};

Protocol parse_protocol(const std::string& name);
std::string protocol_name(Protocol p);

struct SplitSpec {
  int normal_class = 0;
  std::vector<std::size_t> train_indices;  // into Dataset::train_images
  std::vector<std::size_t> test_indices;   // into Dataset::test_images
  std::vector<int> test_anomaly;           // 1 = not the normal class
  std::size_t train_count() const { return train_indices.size(); }
  std::size_t test_count() const { return test_indices.size(); }
};

/// One split per class found in the training labels (sorted order).
std::vector<SplitSpec> build_splits(const Dataset& data, Protocol protocol,
                                    std::uint64_t seed);

/// Rank-based Mann-Whitney AUC with average ranks for ties; anomalies are
/// label 1 and are expected to score higher.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

struct AblationPoint {
  std::size_t batch_size = 0;
  std::size_t latent_dim = 0;
  std::size_t depth = 0;
  std::string head;
};

struct EvalReport {
  std::map<int, std::vector<double>> per_class;  // class -> per-seed AUC
  std::map<int, double> class_mean;
  std::map<int, double> class_std;
  double mean = 0.0;    // unweighted over classes
  double stddev = 0.0;  // over per-seed dataset means, (n-1) denominator
  std::string config_snapshot;
  std::optional<AblationPoint> coords;
};

/// Per-class mean/std over seeds plus the dataset-level aggregate. Lists
/// must be non-empty and of equal length across classes.
EvalReport aggregate(const std::map<int, std::vector<double>>& per_seed_aucs);

struct AblationGrid {
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> latent_dims;
  std::vector<std::size_t> depths;
  std::vector<std::string> heads;

  /// The batch-size axis default: {8, 16, 32, 64, 128, 256}.
  static std::vector<std::size_t> default_batch_sizes();
};

struct AblationOutcome {
  AblationPoint point;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::map<int, double> class_auc;
};

/// Runs class -> AUC for one grid point and seed.
using PointRunner =
    std::function<std::map<int, double>(const AblationPoint&, std::uint64_t)>;

/// Cartesian product of the grid axes; each point runs once per seed. A
/// throwing point is recorded as failed (remaining seeds skipped) and the
/// sweep continues. on_result, when set, observes outcomes as they complete.
std::vector<AblationOutcome> run_ablation(
    const AblationGrid& grid, std::span<const std::uint64_t> seeds,
    const PointRunner& run,
    const std::function<void(const AblationOutcome&)>& on_result = {});

}  // namespace ocvit
