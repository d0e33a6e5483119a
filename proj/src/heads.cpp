#include "ocvit/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ocvit/errors.hpp"
#include "ocvit/ops.hpp"

namespace ocvit {

namespace {

std::string fc_name(std::size_t i, const char* kind) {
  return "head.fc" + std::to_string(i) + "." + kind;
}

}  // namespace

void init_fc_head(std::size_t latent_dim, std::size_t depth, ParamStore& store,
                  Rng& rng) {
  if (depth < 1) throw ConfigError("fc head: depth must be >= 1");
  if (latent_dim < 1) throw ConfigError("fc head: latent dim must be >= 1");
  for (std::size_t i = 0; i < depth; ++i) {
    std::size_t out_dim = i + 1 == depth ? 2 : latent_dim;
    Tensor w({latent_dim, out_dim});
    rng.fill_gaussian(w.data(), 0.0, 0.02);
    quantize_f32(w);
    store.add(fc_name(i, "w"), std::move(w));
    store.add(fc_name(i, "b"), Tensor({out_dim}));
  }
}

FcHead collect_fc_head(const ParamStore& store, std::size_t latent_dim,
                       std::size_t depth) {
  if (depth < 1) throw ConfigError("fc head: depth must be >= 1");
  FcHead head;
  for (std::size_t i = 0; i < depth; ++i) {
    std::size_t out_dim = i + 1 == depth ? 2 : latent_dim;
    std::vector<std::size_t> w_shape = {latent_dim, out_dim};
    std::vector<std::size_t> b_shape = {out_dim};
    for (const char* kind : {"w", "b"}) {
      if (!store.contains(fc_name(i, kind))) {
        throw ConfigError("fc head: missing parameter '" + fc_name(i, kind) +
                          "'");
      }
    }
    const Tensor& w = store.get(fc_name(i, "w"));
    const Tensor& b = store.get(fc_name(i, "b"));
    if (w.shape() != w_shape || b.shape() != b_shape) {
      throw ConfigError("fc head: layer " + std::to_string(i) +
                        " has shape " + w.shape_str() + "/" + b.shape_str() +
                        ", expected " + shape_to_string(w_shape) + "/" +
                        shape_to_string(b_shape));
    }
    head.weights.push_back(w);
    head.biases.push_back(b);
  }
  return head;
}

Tensor fc_forward(const Tensor& feat, const FcHead& head) {
  if (head.depth() == 0) throw ConfigError("fc head: no layers");
  Tensor h = feat;
  for (std::size_t i = 0; i < head.depth(); ++i) {
    h = linear(h, head.weights[i], head.biases[i]);
    if (i + 1 < head.depth()) h = gelu(h);
  }
  return h;
}

KdeHead kde_fit(const Tensor& train_latent, std::optional<double> bandwidth) {
  if (train_latent.ndim() != 2 || train_latent.rows() == 0) {
    throw ConfigError("kde: support must be a non-empty [N, D] matrix, got " +
                      train_latent.shape_str());
  }
  std::size_t n = train_latent.rows(), d = train_latent.cols();
  KdeHead head;
  head.support = train_latent.clone();
  if (bandwidth) {
    head.bandwidth = *bandwidth;
  } else {
    if (n < 2) {
      throw ConfigError(
          "kde: automatic bandwidth needs at least 2 support points");
    }
    double sigma_bar = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += train_latent.at(i, j);
      mean /= static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double dv = train_latent.at(i, j) - mean;
        ss += dv * dv;
      }
      sigma_bar += std::sqrt(ss / static_cast<double>(n - 1));
    }
    sigma_bar /= static_cast<double>(d);
    head.bandwidth =
        std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0)) *
        sigma_bar;
  }
  if (!(head.bandwidth > 0.0)) {
    throw ConfigError("kde: bandwidth must be positive, got " +
                      std::to_string(head.bandwidth));
  }
  return head;
}

double kde_log_density(std::span<const double> x, const KdeHead& head) {
  std::size_t n = head.support.rows(), d = head.support.cols();
  if (x.size() != d) {
    throw ShapeError("kde: query has " + std::to_string(x.size()) +
                     " dims, support has " + std::to_string(d));
  }
  double h2 = head.bandwidth * head.bandwidth;
  std::vector<double> exponents(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double dv = x[j] - head.support.at(i, j);
      d2 += dv * dv;
    }
    exponents[i] = -d2 / (2.0 * h2);
    mx = std::max(mx, exponents[i]);
  }
  double sum = 0.0;
  for (double e : exponents) sum += std::exp(e - mx);
  double lse = mx + std::log(sum);
  return lse - std::log(static_cast<double>(n)) -
         0.5 * static_cast<double>(d) *
             std::log(2.0 * std::numbers::pi * h2);
}

double kde_score(std::span<const double> x, const KdeHead& head) {
  return -kde_log_density(x, head);
}

double svm_objective(std::span<const double> w, double b,
                     const Tensor& train_latent, const Tensor& noise,
                     double lambda) {
  std::size_t d = train_latent.cols();
  std::size_t total = train_latent.rows() + noise.rows();
  double hinge = 0.0;
  auto accumulate = [&](const Tensor& xs, double y) {
    for (std::size_t i = 0; i < xs.rows(); ++i) {
      double m = b;
      for (std::size_t j = 0; j < d; ++j) m += w[j] * xs.at(i, j);
      hinge += std::max(0.0, 1.0 - y * m);
    }
  };
  accumulate(train_latent, -1.0);
  accumulate(noise, 1.0);
  double w2 = 0.0;
  for (double v : w) w2 += v * v;
  return 0.5 * lambda * w2 + hinge / static_cast<double>(total);
}

SvmHead svm_fit(const Tensor& train_latent, const Tensor& noise,
                const SvmFitOptions& opts) {
  if (train_latent.ndim() != 2 || noise.ndim() != 2 ||
      train_latent.rows() == 0 || noise.rows() == 0) {
    throw ConfigError("svm: both classes must be non-empty matrices");
  }
  if (train_latent.cols() != noise.cols()) {
    throw ShapeError("svm: latent dim " + std::to_string(train_latent.cols()) +
                     " vs noise dim " + std::to_string(noise.cols()));
  }
  if (!(opts.C > 0.0)) throw ConfigError("svm: C must be positive");

  std::size_t d = train_latent.cols();
  std::size_t total = train_latent.rows() + noise.rows();
  double lambda = 1.0 / (static_cast<double>(total) * opts.C);
  double inv_total = 1.0 / static_cast<double>(total);

  std::vector<double> w(d, 0.0), gw(d), cand(d);
  double b = 0.0;
  double step = opts.initial_step;
  double obj = svm_objective(w, b, train_latent, noise, lambda);

  SvmHead head;
  head.C = opts.C;
  head.objective_trace.reserve(opts.max_epochs);
  constexpr double kStepFloor = 1e-12;

  for (std::size_t epoch = 0; epoch < opts.max_epochs && step > kStepFloor;
       ++epoch) {
    for (std::size_t j = 0; j < d; ++j) gw[j] = lambda * w[j];
    double gb = 0.0;
    auto accumulate = [&](const Tensor& xs, double y) {
      for (std::size_t i = 0; i < xs.rows(); ++i) {
        double m = b;
        for (std::size_t j = 0; j < d; ++j) m += w[j] * xs.at(i, j);
        if (y * m < 1.0) {
          for (std::size_t j = 0; j < d; ++j) {
            gw[j] -= inv_total * y * xs.at(i, j);
          }
          gb -= inv_total * y;
        }
      }
    };
    accumulate(train_latent, -1.0);
    accumulate(noise, 1.0);

    for (std::size_t j = 0; j < d; ++j) cand[j] = w[j] - step * gw[j];
    double cand_b = b - step * gb;
    double cand_obj = svm_objective(cand, cand_b, train_latent, noise, lambda);
    if (cand_obj <= obj) {
      w = cand;
      b = cand_b;
      obj = cand_obj;
    } else {
      step *= 0.5;
    }
    head.objective_trace.push_back(obj);
  }
  head.weight = std::move(w);
  head.bias = b;
  head.converged = step <= kStepFloor ||
                   (head.objective_trace.size() >= 2 &&
                    head.objective_trace[head.objective_trace.size() - 2] -
                            head.objective_trace.back() <
                        1e-12);
  return head;
}

double svm_score(std::span<const double> x, const SvmHead& head) {
  if (x.size() != head.weight.size()) {
    throw ShapeError("svm: query has " + std::to_string(x.size()) +
                     " dims, weight has " + std::to_string(head.weight.size()));
  }
  double m = head.bias;
  for (std::size_t j = 0; j < x.size(); ++j) m += head.weight[j] * x[j];
  return m;
}

std::vector<double> FcScorer::score_batch(const Tensor& latents) const {
  NoGradGuard no_grad;
  Tensor probs = softmax(fc_forward(latents, head_));
  std::vector<double> out(latents.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = probs.at(i, 1);
  return out;
}

std::vector<double> KdeScorer::score_batch(const Tensor& latents) const {
  std::vector<double> out(latents.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::span<const double> row =
        latents.data().subspan(i * latents.cols(), latents.cols());
    out[i] = kde_score(row, head_);
  }
  return out;
}

std::vector<double> SvmScorer::score_batch(const Tensor& latents) const {
  std::vector<double> out(latents.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::span<const double> row =
        latents.data().subspan(i * latents.cols(), latents.cols());
    out[i] = svm_score(row, head_);
  }
  return out;
}

}  // namespace ocvit
