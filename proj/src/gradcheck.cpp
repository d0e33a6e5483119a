#include "ocvit/gradcheck.hpp"

#include <cmath>

#include "ocvit/errors.hpp"
#include "ocvit/rng.hpp"

namespace ocvit {

namespace {

constexpr double kFdStep = 1e-5;

std::vector<double> reduction_weights(std::size_t n) {
  // Fixed weights in [0.5, 1.5) so every output element contributes.
  Rng rng(0x5EEDull);
  std::vector<double> w(n);
  for (double& v : w) v = 0.5 + rng.uniform();
  return w;
}

double weighted_scalar(const Tensor& out, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out.at(i);
  return s;
}

}  // namespace

GradCheckReport grad_check(const DifferentiableOp& op,
                           const std::vector<Tensor>& point, double rel_tol) {
  if (point.empty()) throw ShapeError("grad_check: no inputs");
  std::vector<Tensor> inputs;
  inputs.reserve(point.size());
  for (const Tensor& t : point) {
    inputs.push_back(t.clone());
    inputs.back().set_requires_grad(true);
  }

  Tensor out = op(inputs);
  std::vector<double> w = reduction_weights(out.size());
  double base = weighted_scalar(out, w);
  Tensor loss = make_tracked({1}, {base}, {out},
                             [out, w](const detail::TensorNode& o) mutable {
                               for (std::size_t i = 0; i < w.size(); ++i) {
                                 out.grad()[i] += o.grad[0] * w[i];
                               }
                             });
  backward(loss);

  GradCheckReport report;
  report.rel_tol = rel_tol;
  NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    double analytic_zero = 0.0;
    std::span<const double> grad =
        t.has_grad() ? t.grad() : std::span<const double>(&analytic_zero, 0);
    for (std::size_t ei = 0; ei < t.size(); ++ei) {
      double saved = t.at(ei);
      t.at(ei) = saved + kFdStep;
      double up = weighted_scalar(op(inputs), w);
      t.at(ei) = saved - kFdStep;
      double down = weighted_scalar(op(inputs), w);
      t.at(ei) = saved;
      double numeric = (up - down) / (2.0 * kFdStep);
      double analytic = ei < grad.size() ? grad[ei] : 0.0;
      double denom =
          std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
      double rel = std::fabs(analytic - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = ti;
        report.worst_element = ei;
      }
    }
  }
  report.pass = report.max_rel_err <= rel_tol;
  return report;
}

}  // namespace ocvit
