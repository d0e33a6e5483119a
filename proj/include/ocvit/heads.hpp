#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocvit/param_store.hpp"
#include "ocvit/rng.hpp"
#include "ocvit/tensor.hpp"

namespace ocvit {

/// FC classifier over the latent space: (depth-1) hidden D x D layers with
/// GELU between, then a D x 2 output layer. Depth 1 is the single FC layer.
struct FcHead {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  std::size_t depth() const { return weights.size(); }
};

void init_fc_head(std::size_t latent_dim, std::size_t depth, ParamStore& store,
                  Rng& rng);
FcHead collect_fc_head(const ParamStore& store, std::size_t latent_dim,
                       std::size_t depth);

/// Forward through the head; returns [M, 2] logits.
Tensor fc_forward(const Tensor& feat, const FcHead& head);

struct KdeHead {
  Tensor support;    // [N, D] training latents
  double bandwidth;  // h > 0
};

/// Isotropic Gaussian KDE over the positive-class latents. Bandwidth by
/// Scott's rule h = N^(-1/(D+4)) * mean per-dimension sample std unless
/// overridden; the automatic rule needs N >= 2 and non-constant support.
KdeHead kde_fit(const Tensor& train_latent,
                std::optional<double> bandwidth = std::nullopt);

/// log q(x) with q the mixture density, computed in log space.
double kde_log_density(std::span<const double> x, const KdeHead& head);

/// Anomaly score -log q(x): monotone decreasing in density.
double kde_score(std::span<const double> x, const KdeHead& head);

struct SvmFitOptions {
  double C = 1.0;
  std::size_t max_epochs = 500;
  double initial_step = 1.0;
};

struct SvmHead {
  std::vector<double> weight;  // [D]
  double bias = 0.0;
  double C = 1.0;
  bool converged = true;
  std::vector<double> objective_trace;  // accepted objective per epoch
};

/// Linear soft-margin SVM on the regularized hinge objective with
/// lambda = 1/(N*C), latents labeled -1 and noise +1, solved by full-batch
/// subgradient descent. A step that raises the objective is rejected and the
/// step size halved, so the recorded trace never increases. If the step
/// size is still above threshold after max_epochs the head is flagged
/// non-converged and the best iterate is returned.
SvmHead svm_fit(const Tensor& train_latent, const Tensor& noise,
                const SvmFitOptions& opts = {});

/// Signed distance toward the noise side: w . x + b.
double svm_score(std::span<const double> x, const SvmHead& head);

/// Hinge objective of a candidate (w, b) on the stacked problem; shared by
/// the solver and the brute-force test oracles.
double svm_objective(std::span<const double> w, double b,
                     const Tensor& train_latent, const Tensor& noise,
                     double lambda);

/// Common scoring surface: every head maps a batch of latent rows to
/// anomaly scores (higher = more anomalous).
class LatentScorer {
 public:
  virtual ~LatentScorer() = default;
  virtual std::vector<double> score_batch(const Tensor& latents) const = 0;
};

class FcScorer : public LatentScorer {
 public:
  explicit FcScorer(FcHead head) : head_(std::move(head)) {}
  std::vector<double> score_batch(const Tensor& latents) const override;

 private:
  FcHead head_;
};

class KdeScorer : public LatentScorer {
 public:
  explicit KdeScorer(KdeHead head) : head_(std::move(head)) {}
  std::vector<double> score_batch(const Tensor& latents) const override;

 private:
  KdeHead head_;
};

class SvmScorer : public LatentScorer {
 public:
  explicit SvmScorer(SvmHead head) : head_(std::move(head)) {}
  std::vector<double> score_batch(const Tensor& latents) const override;

 private:
  SvmHead head_;
};

}  // namespace ocvit
