#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "ocvit/errors.hpp"
#include "ocvit/evalproto.hpp"
#include "ocvit/rng.hpp"

using namespace ocvit;

namespace {

double pairwise_auc(std::span<const double> scores,
                    std::span<const int> labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

Dataset toy_dataset() {
  Dataset data;
  auto img = [](double v) { return Tensor({1, 2, 2}, {v, v, v, v}); };
  for (int c : {0, 0, 1, 1, 2}) {
    data.train_images.push_back(img(c));
    data.train_labels.push_back(c);
  }
  for (int c : {0, 1, 1, 2, 2, 2}) {
    data.test_images.push_back(img(10 + c));
    data.test_labels.push_back(c);
  }
  return data;
}

}  // namespace

TEST_CASE("protocol names round trip") {
  CHECK(parse_protocol("normal-vs-rest") == Protocol::kNormalVsRest);
  CHECK(parse_protocol("paper-literal") == Protocol::kPaperLiteral);
  CHECK(protocol_name(Protocol::kPaperLiteral) == "paper-literal");
  CHECK_THROWS_AS(parse_protocol("other"), ConfigError);
}

TEST_CASE("normal-vs-rest splits cover the full test set") {
  Dataset data = toy_dataset();
  auto splits = build_splits(data, Protocol::kNormalVsRest, 1);
  REQUIRE(splits.size() == 3);

  const SplitSpec& s0 = splits[0];
  CHECK(s0.normal_class == 0);
  CHECK(s0.train_indices == std::vector<std::size_t>{0, 1});
  CHECK(s0.test_indices.size() == 6);
  CHECK(s0.test_anomaly == std::vector<int>{0, 1, 1, 1, 1, 1});

  const SplitSpec& s2 = splits[2];
  CHECK(s2.normal_class == 2);
  CHECK(s2.train_indices == std::vector<std::size_t>{4});
  CHECK(s2.test_anomaly == std::vector<int>{1, 1, 1, 0, 0, 0});
}

TEST_CASE("paper-literal subsamples anomalies to the normal count") {
  Dataset data = toy_dataset();
  auto splits = build_splits(data, Protocol::kPaperLiteral, 9);
  REQUIRE(splits.size() == 3);

  // Class 0 has one normal test image, so one anomaly is kept.
  const SplitSpec& s0 = splits[0];
  CHECK(s0.test_indices.size() == 2);
  int anomalies = 0;
  for (int a : s0.test_anomaly) anomalies += a;
  CHECK(anomalies == 1);
  CHECK(std::is_sorted(s0.test_indices.begin(), s0.test_indices.end()));

  // Class 2 has three normals but only three non-normals exist.
  const SplitSpec& s2 = splits[2];
  CHECK(s2.test_indices.size() == 6);

  auto again = build_splits(data, Protocol::kPaperLiteral, 9);
  CHECK(again[0].test_indices == s0.test_indices);
  auto other_seed = build_splits(data, Protocol::kPaperLiteral, 10);
  CHECK(other_seed[0].test_indices.size() == 2);
}

TEST_CASE("build_splits needs two classes and aligned labels") {
  Dataset single;
  single.train_images.push_back(Tensor({1, 2, 2}));
  single.train_labels.push_back(0);
  single.test_images.push_back(Tensor({1, 2, 2}));
  single.test_labels.push_back(0);
  CHECK_THROWS_AS(build_splits(single, Protocol::kNormalVsRest, 1), EvalError);

  Dataset ragged = toy_dataset();
  ragged.train_labels.pop_back();
  CHECK_THROWS_AS(build_splits(ragged, Protocol::kNormalVsRest, 1), EvalError);
}

TEST_CASE("auc analytic cases") {
  std::vector<int> labels = {0, 0, 1, 1};
  CHECK(auc_roc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, labels) == 1.0);
  CHECK(auc_roc(std::vector<double>{0.8, 0.9, 0.1, 0.2}, labels) == 0.0);
  CHECK(auc_roc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, labels) == 0.5);
}

TEST_CASE("auc equals the pairwise oracle on random instances") {
  Rng rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 2 + rng.bounded(60);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid so ties actually occur.
      scores[i] = static_cast<double>(rng.bounded(8)) / 4.0;
      labels[i] = static_cast<int>(rng.bounded(2));
      has_pos = has_pos || labels[i] == 1;
      has_neg = has_neg || labels[i] == 0;
    }
    if (!has_pos) labels[0] = 1;
    if (!has_neg) labels[n - 1] = 0;
    CHECK(auc_roc(scores, labels) ==
          doctest::Approx(pairwise_auc(scores, labels)).epsilon(1e-15));
  }
}

TEST_CASE("auc input validation") {
  std::vector<double> scores = {0.1, 0.2};
  CHECK_THROWS_AS(auc_roc(scores, std::vector<int>{1}), EvalError);
  CHECK_THROWS_AS(auc_roc(scores, std::vector<int>{1, 2}), EvalError);
  CHECK_THROWS_AS(auc_roc(scores, std::vector<int>{1, 1}), EvalError);
  CHECK_THROWS_AS(auc_roc(scores, std::vector<int>{0, 0}), EvalError);
}

TEST_CASE("aggregate oracle values") {
  std::map<int, std::vector<double>> per_class = {{3, {0.9, 1.0}}};
  EvalReport report = aggregate(per_class);
  CHECK(report.class_mean[3] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(report.class_std[3] ==
        doctest::Approx(0.07071067811865474).epsilon(1e-12));
  CHECK(report.mean == doctest::Approx(0.95).epsilon(1e-15));

  std::map<int, std::vector<double>> single = {{0, {0.7}}};
  EvalReport r1 = aggregate(single);
  CHECK(r1.class_std[0] == 0.0);
  CHECK(r1.stddev == 0.0);

  std::map<int, std::vector<double>> classes = {{0, {1.0}}, {1, {0.8}}};
  CHECK(aggregate(classes).mean == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("aggregate dataset stddev is over per-seed dataset means") {
  // Seeds: dataset means (0.8+0.6)/2 = 0.7 and (1.0+0.8)/2 = 0.9.
  std::map<int, std::vector<double>> per_class = {{0, {0.8, 1.0}},
                                                  {1, {0.6, 0.8}}};
  EvalReport report = aggregate(per_class);
  CHECK(report.mean == doctest::Approx(0.8).epsilon(1e-15));
  // std of {0.7, 0.9} with ddof 1.
  CHECK(report.stddev ==
        doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
}

TEST_CASE("aggregate rejects ragged or out-of-range inputs") {
  std::map<int, std::vector<double>> ragged = {{0, {0.9, 1.0}}, {1, {0.8}}};
  CHECK_THROWS_AS(aggregate(ragged), EvalError);
  std::map<int, std::vector<double>> out_of_range = {{0, {1.2}}};
  CHECK_THROWS_AS(aggregate(out_of_range), EvalError);
  std::map<int, std::vector<double>> empty;
  CHECK_THROWS_AS(aggregate(empty), EvalError);
}

TEST_CASE("default batch-size axis is the six powers of two") {
  CHECK(AblationGrid::default_batch_sizes() ==
        std::vector<std::size_t>{8, 16, 32, 64, 128, 256});
}

TEST_CASE("run_ablation enumerates the cartesian product") {
  AblationGrid grid;
  grid.batch_sizes = {8, 16};
  grid.latent_dims = {4};
  grid.depths = {1, 2};
  grid.heads = {"mlp"};
  std::vector<std::uint64_t> seeds = {1, 2};

  std::vector<AblationOutcome> streamed;
  auto outcomes = run_ablation(
      grid, seeds,
      [](const AblationPoint& p, std::uint64_t seed) {
        std::map<int, double> aucs;
        aucs[0] = 0.5 + 0.001 * static_cast<double>(p.batch_size + seed);
        return aucs;
      },
      [&](const AblationOutcome& o) { streamed.push_back(o); });

  CHECK(outcomes.size() == 8);  // 2 batch x 1 latent x 2 depth x 1 head x 2 seeds
  CHECK(streamed.size() == 8);
  for (const auto& o : outcomes) {
    CHECK(!o.failed);
    CHECK(o.class_auc.count(0) == 1);
  }
  std::set<std::size_t> batches;
  for (const auto& o : outcomes) batches.insert(o.point.batch_size);
  CHECK(batches == std::set<std::size_t>{8, 16});
}

TEST_CASE("a throwing point is recorded and the sweep continues") {
  AblationGrid grid;
  grid.batch_sizes = {8, 16};
  grid.latent_dims = {4};
  grid.depths = {1};
  grid.heads = {"mlp"};
  std::vector<std::uint64_t> seeds = {1, 2};

  auto outcomes = run_ablation(
      grid, seeds, [](const AblationPoint& p, std::uint64_t) {
        if (p.batch_size == 8) throw TrainError("boom");
        std::map<int, double> aucs;
        aucs[0] = 0.9;
        return aucs;
      });

  // The failing point records one failure and skips its remaining seeds.
  std::size_t failed = 0, ok = 0;
  for (const auto& o : outcomes) {
    if (o.failed) {
      ++failed;
      CHECK(o.point.batch_size == 8);
      CHECK(o.error.find("boom") != std::string::npos);
    } else {
      ++ok;
    }
  }
  CHECK(failed == 1);
  CHECK(ok == 2);
}

TEST_CASE("run_ablation validates its axes") {
  AblationGrid grid;
  grid.batch_sizes = {};
  grid.latent_dims = {4};
  grid.depths = {1};
  grid.heads = {"mlp"};
  std::vector<std::uint64_t> seeds = {1};
  auto runner = [](const AblationPoint&, std::uint64_t) {
    return std::map<int, double>{{0, 0.5}};
  };
  CHECK_THROWS_AS(run_ablation(grid, seeds, runner), ConfigError);
  grid.batch_sizes = {8};
  CHECK_THROWS_AS(run_ablation(grid, {}, runner), ConfigError);
  run_ablation(grid, seeds, runner);
}
