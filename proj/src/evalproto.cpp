#include "ocvit/evalproto.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ocvit/errors.hpp"
#include "ocvit/rng.hpp"

namespace ocvit {

namespace {

double sample_mean(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double mean = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

Protocol parse_protocol(const std::string& name) {
  if (name == "normal-vs-rest") return Protocol::kNormalVsRest;
  if (name == "paper-literal") return Protocol::kPaperLiteral;
  throw ConfigError("unknown protocol '" + name +
                    "' (expected normal-vs-rest or paper-literal)");
}

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kNormalVsRest:
      return "normal-vs-rest";
    case Protocol::kPaperLiteral:
      return "paper-literal";
  }
  throw ConfigError("unknown protocol value");
}

std::vector<SplitSpec> build_splits(const Dataset& data, Protocol protocol,
                                    std::uint64_t seed) {
  if (data.train_images.size() != data.train_labels.size() ||
      data.test_images.size() != data.test_labels.size()) {
    throw EvalError("build_splits: image/label count mismatch");
  }
  std::set<int> classes(data.train_labels.begin(), data.train_labels.end());
  if (classes.size() < 2) {
    throw EvalError("build_splits: need at least 2 classes, found " +
                    std::to_string(classes.size()));
  }
  std::vector<SplitSpec> splits;
  std::size_t class_index = 0;
  for (int c : classes) {
    SplitSpec split;
    split.normal_class = c;
    for (std::size_t i = 0; i < data.train_labels.size(); ++i) {
      if (data.train_labels[i] == c) split.train_indices.push_back(i);
    }
    std::vector<std::size_t> normal_test, other_test;
    for (std::size_t i = 0; i < data.test_labels.size(); ++i) {
      (data.test_labels[i] == c ? normal_test : other_test).push_back(i);
    }
    if (protocol == Protocol::kNormalVsRest) {
      split.test_indices = iota_indices(data.test_labels.size());
    } else {
      Rng rng = Rng(seed).split(class_index);
      rng.shuffle(other_test);
      std::size_t keep = std::min(other_test.size(), normal_test.size());
      std::vector<std::size_t> chosen(other_test.begin(),
                                      other_test.begin() + keep);
      split.test_indices = normal_test;
      split.test_indices.insert(split.test_indices.end(), chosen.begin(),
                                chosen.end());
      std::sort(split.test_indices.begin(), split.test_indices.end());
    }
    for (std::size_t i : split.test_indices) {
      split.test_anomaly.push_back(data.test_labels[i] != c ? 1 : 0);
    }
    splits.push_back(std::move(split));
    ++class_index;
  }
  return splits;
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw EvalError("auc_roc: " + std::to_string(scores.size()) +
                    " scores vs " + std::to_string(labels.size()) + " labels");
  }
  std::size_t n = scores.size();
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1) {
      ++n_pos;
    } else if (y == 0) {
      ++n_neg;
    } else {
      throw EvalError("auc_roc: label " + std::to_string(y) + " not in {0, 1}");
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw EvalError("auc_roc: both classes must be present");
  }
  std::vector<std::size_t> order = iota_indices(n);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) pos_rank_sum += rank[k];
  }
  double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

EvalReport aggregate(const std::map<int, std::vector<double>>& per_seed_aucs) {
  if (per_seed_aucs.empty()) throw EvalError("aggregate: no classes");
  std::size_t n_seeds = per_seed_aucs.begin()->second.size();
  EvalReport report;
  for (const auto& [cls, aucs] : per_seed_aucs) {
    if (aucs.empty()) {
      throw EvalError("aggregate: empty AUC list for class " +
                      std::to_string(cls));
    }
    if (aucs.size() != n_seeds) {
      throw EvalError("aggregate: ragged AUC lists (class " +
                      std::to_string(cls) + " has " +
                      std::to_string(aucs.size()) + " entries, expected " +
                      std::to_string(n_seeds) + ")");
    }
    for (double a : aucs) {
      if (!(a >= 0.0 && a <= 1.0)) {
        throw EvalError("aggregate: AUC " + std::to_string(a) +
                        " outside [0, 1] for class " + std::to_string(cls));
      }
    }
    report.per_class[cls] = aucs;
    report.class_mean[cls] = sample_mean(aucs);
    report.class_std[cls] = sample_std(aucs);
  }
  double mean_sum = 0.0;
  for (const auto& [cls, m] : report.class_mean) mean_sum += m;
  report.mean = mean_sum / static_cast<double>(report.class_mean.size());

  std::vector<double> seed_means(n_seeds, 0.0);
  for (const auto& [cls, aucs] : report.per_class) {
    for (std::size_t s = 0; s < n_seeds; ++s) seed_means[s] += aucs[s];
  }
  for (double& v : seed_means) v /= static_cast<double>(report.per_class.size());
  report.stddev = sample_std(seed_means);
  return report;
}

std::vector<std::size_t> AblationGrid::default_batch_sizes() {
  return {8, 16, 32, 64, 128, 256};
}

std::vector<AblationOutcome> run_ablation(
    const AblationGrid& grid, std::span<const std::uint64_t> seeds,
    const PointRunner& run,
    const std::function<void(const AblationOutcome&)>& on_result) {
  if (grid.batch_sizes.empty() || grid.latent_dims.empty() ||
      grid.depths.empty() || grid.heads.empty()) {
    throw ConfigError("ablation: every grid axis needs at least one value");
  }
  if (seeds.empty()) throw ConfigError("ablation: no seeds");
  if (!run) throw ConfigError("ablation: no point runner");

  std::vector<AblationOutcome> outcomes;
  for (std::size_t b : grid.batch_sizes) {
    for (std::size_t d : grid.latent_dims) {
      for (std::size_t depth : grid.depths) {
        for (const std::string& head : grid.heads) {
          AblationPoint point{b, d, depth, head};
          for (std::uint64_t seed : seeds) {
            AblationOutcome outcome;
            outcome.point = point;
            outcome.seed = seed;
            try {
              outcome.class_auc = run(point, seed);
            } catch (const std::exception& e) {
              outcome.failed = true;
              outcome.error = e.what();
            }
            bool failed = outcome.failed;
            if (on_result) on_result(outcome);
            outcomes.push_back(std::move(outcome));
            if (failed) break;  // abort this point, keep sweeping
          }
        }
      }
    }
  }
  return outcomes;
}

}  // namespace ocvit
