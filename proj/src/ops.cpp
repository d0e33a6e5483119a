#include "ocvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ocvit/errors.hpp"

namespace ocvit {

namespace {

void check_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got " +
                     t.shape_str());
  }
}

// C[N,M] += A[N,K] B[K,M]
void mm_nn(const double* a, const double* b, double* c, std::size_t n,
           std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[N,M] += A[N,K] B[M,K]^T
void mm_nt(const double* a, const double* b, double* c, std::size_t n,
           std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C[K,M] += A[N,K]^T B[N,M]
void mm_tn(const double* a, const double* b, double* c, std::size_t n,
           std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      double* cp = c + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

double phi_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double phi_cdf(double x) {
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make_tracked(a.shape(), std::move(out), {a, b},
                      [a, b](const detail::TensorNode& o) mutable {
                        for (std::size_t i = 0; i < o.grad.size(); ++i) {
                          if (a.requires_grad()) a.grad()[i] += o.grad[i];
                          if (b.requires_grad()) b.grad()[i] += o.grad[i];
                        }
                      });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a.at(i);
  return make_tracked(a.shape(), std::move(out), {a},
                      [a, s](const detail::TensorNode& o) mutable {
                        for (std::size_t i = 0; i < o.grad.size(); ++i) {
                          a.grad()[i] += s * o.grad[i];
                        }
                      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dims differ, " + a.shape_str() + " x " +
                     b.shape_str());
  }
  std::vector<double> out(n * m, 0.0);
  mm_nn(a.data().data(), b.data().data(), out.data(), n, k, m);
  return make_tracked(
      {n, m}, std::move(out), {a, b},
      [a, b, n, k, m](const detail::TensorNode& o) mutable {
        if (a.requires_grad()) {
          mm_nt(o.grad.data(), b.data().data(), a.grad().data(), n, m, k);
        }
        if (b.requires_grad()) {
          mm_tn(a.data().data(), o.grad.data(), b.grad().data(), n, k, m);
        }
      });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul_nt");
  check_2d(b, "matmul_nt");
  std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_nt: inner dims differ, " + a.shape_str() + " x " +
                     b.shape_str() + "^T");
  }
  std::vector<double> out(n * m, 0.0);
  mm_nt(a.data().data(), b.data().data(), out.data(), n, k, m);
  return make_tracked(
      {n, m}, std::move(out), {a, b},
      [a, b, n, k, m](const detail::TensorNode& o) mutable {
        if (a.requires_grad()) {
          mm_nn(o.grad.data(), b.data().data(), a.grad().data(), n, m, k);
        }
        if (b.requires_grad()) {
          mm_tn(o.grad.data(), a.data().data(), b.grad().data(), n, m, k);
        }
      });
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  check_2d(x, "add_row_bias");
  std::size_t n = x.rows(), m = x.cols();
  if (b.size() != m) {
    throw ShapeError("add_row_bias: bias size " + std::to_string(b.size()) +
                     " vs cols " + std::to_string(m));
  }
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x.at(i * m + j) + b.at(j);
  }
  return make_tracked({n, m}, std::move(out), {x, b},
                      [x, b, n, m](const detail::TensorNode& o) mutable {
                        if (x.requires_grad()) {
                          for (std::size_t i = 0; i < n * m; ++i) {
                            x.grad()[i] += o.grad[i];
                          }
                        }
                        if (b.requires_grad()) {
                          for (std::size_t i = 0; i < n; ++i) {
                            for (std::size_t j = 0; j < m; ++j) {
                              b.grad()[j] += o.grad[i * m + j];
                            }
                          }
                        }
                      });
}

Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  check_2d(x, "slice_rows");
  if (r0 >= r1 || r1 > x.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " +
                     std::to_string(r1) + ") out of " + x.shape_str());
  }
  std::size_t m = x.cols();
  std::vector<double> out(x.data().begin() + r0 * m, x.data().begin() + r1 * m);
  return make_tracked({r1 - r0, m}, std::move(out), {x},
                      [x, r0, m](const detail::TensorNode& o) mutable {
                        for (std::size_t i = 0; i < o.grad.size(); ++i) {
                          x.grad()[r0 * m + i] += o.grad[i];
                        }
                      });
}

Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  check_2d(x, "slice_cols");
  if (c0 >= c1 || c1 > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") out of " + x.shape_str());
  }
  std::size_t n = x.rows(), m = x.cols(), w = c1 - c0;
  std::vector<double> out(n * w);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.at(i, c0 + j);
  }
  return make_tracked({n, w}, std::move(out), {x},
                      [x, c0, m, w](const detail::TensorNode& o) mutable {
                        std::size_t n = o.grad.size() / w;
                        for (std::size_t i = 0; i < n; ++i) {
                          for (std::size_t j = 0; j < w; ++j) {
                            x.grad()[i * m + c0 + j] += o.grad[i * w + j];
                          }
                        }
                      });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  std::size_t m = parts[0].cols(), n = 0;
  for (const Tensor& t : parts) {
    check_2d(t, "concat_rows");
    if (t.cols() != m) {
      throw ShapeError("concat_rows: column mismatch " + t.shape_str());
    }
    n += t.rows();
  }
  std::vector<double> out;
  out.reserve(n * m);
  for (const Tensor& t : parts) {
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_tracked({n, m}, std::move(out), parents,
                      [parents](const detail::TensorNode& o) mutable {
                        std::size_t off = 0;
                        for (Tensor& p : parents) {
                          if (p.requires_grad()) {
                            for (std::size_t i = 0; i < p.size(); ++i) {
                              p.grad()[i] += o.grad[off + i];
                            }
                          }
                          off += p.size();
                        }
                      });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  std::size_t n = parts[0].rows(), m = 0;
  for (const Tensor& t : parts) {
    check_2d(t, "concat_cols");
    if (t.rows() != n) {
      throw ShapeError("concat_cols: row mismatch " + t.shape_str());
    }
    m += t.cols();
  }
  std::vector<double> out(n * m);
  std::size_t off = 0;
  for (const Tensor& t : parts) {
    std::size_t w = t.cols();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) out[i * m + off + j] = t.at(i, j);
    }
    off += w;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_tracked({n, m}, std::move(out), parents,
                      [parents, n, m](const detail::TensorNode& o) mutable {
                        std::size_t off = 0;
                        for (Tensor& p : parents) {
                          std::size_t w = p.cols();
                          if (p.requires_grad()) {
                            for (std::size_t i = 0; i < n; ++i) {
                              for (std::size_t j = 0; j < w; ++j) {
                                p.grad()[i * w + j] += o.grad[i * m + off + j];
                              }
                            }
                          }
                          off += w;
                        }
                      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_2d(x, "linear");
  check_2d(w, "linear");
  std::size_t n = x.rows(), k = x.cols(), m = w.cols();
  if (w.rows() != k) {
    throw ShapeError("linear: input cols " + std::to_string(k) +
                     " vs weight rows " + std::to_string(w.rows()));
  }
  if (b.size() != m) {
    throw ShapeError("linear: bias size " + std::to_string(b.size()) +
                     " vs out dim " + std::to_string(m));
  }
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = b.at(j);
  }
  mm_nn(x.data().data(), w.data().data(), out.data(), n, k, m);
  return make_tracked(
      {n, m}, std::move(out), {x, w, b},
      [x, w, b, n, k, m](const detail::TensorNode& o) mutable {
        if (x.requires_grad()) {
          mm_nt(o.grad.data(), w.data().data(), x.grad().data(), n, m, k);
        }
        if (w.requires_grad()) {
          mm_tn(x.data().data(), o.grad.data(), w.grad().data(), n, k, m);
        }
        if (b.requires_grad()) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) b.grad()[j] += o.grad[i * m + j];
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x.at(i) * phi_cdf(x.at(i));
  }
  return make_tracked(x.shape(), std::move(out), {x},
                      [x](const detail::TensorNode& o) mutable {
                        for (std::size_t i = 0; i < o.grad.size(); ++i) {
                          double v = x.at(i);
                          x.grad()[i] +=
                              o.grad[i] * (phi_cdf(v) + v * phi_pdf(v));
                        }
                      });
}

Tensor softmax(const Tensor& logits) {
  check_2d(logits, "softmax");
  std::size_t n = logits.rows(), m = logits.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, logits.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double e = std::exp(logits.at(i, j) - mx);
      out[i * m + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= sum;
  }
  return make_tracked(
      {n, m}, std::move(out), {logits},
      [logits, n, m](const detail::TensorNode& o) mutable {
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            dot += o.grad[i * m + j] * o.value[i * m + j];
          }
          for (std::size_t j = 0; j < m; ++j) {
            logits.grad()[i * m + j] +=
                o.value[i * m + j] * (o.grad[i * m + j] - dot);
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  check_2d(x, "layer_norm");
  std::size_t n = x.rows(), m = x.cols();
  if (gamma.size() != m || beta.size() != m) {
    throw ShapeError("layer_norm: affine size " + std::to_string(gamma.size()) +
                     "/" + std::to_string(beta.size()) + " vs cols " +
                     std::to_string(m));
  }
  std::vector<double> out(n * m);
  std::vector<double> xhat(n * m);
  std::vector<double> istd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += x.at(i, j);
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double d = x.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(m);
    istd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      double h = (x.at(i, j) - mu) * istd[i];
      xhat[i * m + j] = h;
      out[i * m + j] = h * gamma.at(j) + beta.at(j);
    }
  }
  return make_tracked(
      {n, m}, std::move(out), {x, gamma, beta},
      [x, gamma, beta, n, m, xhat = std::move(xhat),
       istd = std::move(istd)](const detail::TensorNode& o) mutable {
        double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < n; ++i) {
          double sum_dh = 0.0, sum_dh_h = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            double dh = o.grad[i * m + j] * gamma.at(j);
            sum_dh += dh;
            sum_dh_h += dh * xhat[i * m + j];
          }
          for (std::size_t j = 0; j < m; ++j) {
            double g = o.grad[i * m + j];
            double h = xhat[i * m + j];
            if (x.requires_grad()) {
              double dh = g * gamma.at(j);
              x.grad()[i * m + j] +=
                  istd[i] * (dh - inv_m * sum_dh - h * inv_m * sum_dh_h);
            }
            if (gamma.requires_grad()) gamma.grad()[j] += g * h;
            if (beta.requires_grad()) beta.grad()[j] += g;
          }
        }
      });
}

Tensor instance_norm(const Tensor& x, double eps) {
  check_2d(x, "instance_norm");
  std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(n * m);
  std::vector<double> istd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += x.at(i, j);
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double d = x.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(m);
    istd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      out[i * m + j] = (x.at(i, j) - mu) * istd[i];
    }
  }
  return make_tracked(
      {n, m}, std::move(out), {x},
      [x, n, m, istd = std::move(istd)](const detail::TensorNode& o) mutable {
        double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < n; ++i) {
          double sum_g = 0.0, sum_g_h = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            sum_g += o.grad[i * m + j];
            sum_g_h += o.grad[i * m + j] * o.value[i * m + j];
          }
          for (std::size_t j = 0; j < m; ++j) {
            x.grad()[i * m + j] +=
                istd[i] * (o.grad[i * m + j] - inv_m * sum_g -
                           o.value[i * m + j] * inv_m * sum_g_h);
          }
        }
      });
}

Tensor msa(const Tensor& tokens, const MsaParams& p, std::size_t heads) {
  check_2d(tokens, "msa");
  std::size_t d = tokens.cols();
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("msa: embed dim " + std::to_string(d) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  std::size_t dh = d / heads;
  Tensor q = linear(tokens, p.wq, p.bq);
  Tensor k = linear(tokens, p.wk, p.bk);
  Tensor v = linear(tokens, p.wv, p.bv);
  double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor attn = softmax(scale(matmul_nt(qh, kh), att_scale));
    head_outs.push_back(matmul(attn, vh));
  }
  Tensor merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  return linear(merged, p.wo, p.bo);
}

Tensor bce_softmax_loss(const Tensor& logits, std::span<const int> labels) {
  check_2d(logits, "bce_softmax_loss");
  std::size_t n = logits.rows();
  if (logits.cols() != 2) {
    throw ShapeError("bce_softmax_loss: expected [N,2] logits, got " +
                     logits.shape_str());
  }
  if (labels.size() != n) {
    throw ShapeError("bce_softmax_loss: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  }
  if (n == 0) throw ShapeError("bce_softmax_loss: empty batch");
  std::vector<int> y(labels.begin(), labels.end());
  for (int v : y) {
    if (v != 0 && v != 1) {
      throw ShapeError("bce_softmax_loss: label " + std::to_string(v) +
                       " not in {0, 1}");
    }
  }
  double total = 0.0;
  std::vector<double> probs(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    double z0 = logits.at(i, 0), z1 = logits.at(i, 1);
    double mx = std::max(z0, z1);
    double lse = mx + std::log(std::exp(z0 - mx) + std::exp(z1 - mx));
    probs[2 * i] = std::exp(z0 - lse);
    probs[2 * i + 1] = std::exp(z1 - lse);
    total += lse - (y[i] == 0 ? z0 : z1);
  }
  total /= static_cast<double>(n);
  return make_tracked(
      {1}, {total}, {logits},
      [logits, n, y = std::move(y),
       probs = std::move(probs)](const detail::TensorNode& o) mutable {
        double g = o.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          logits.grad()[2 * i] += g * (probs[2 * i] - (y[i] == 0 ? 1.0 : 0.0));
          logits.grad()[2 * i + 1] +=
              g * (probs[2 * i + 1] - (y[i] == 1 ? 1.0 : 0.0));
        }
      });
}

double bce_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) {
    throw ShapeError("bce_loss: " + std::to_string(probs.size()) +
                     " probs vs " + std::to_string(labels.size()) + " labels");
  }
  if (probs.empty()) throw ShapeError("bce_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = probs[i];
    if (labels[i] == 1) {
      total -= std::log(p);
    } else if (labels[i] == 0) {
      total -= std::log(1.0 - p);
    } else {
      throw ShapeError("bce_loss: label " + std::to_string(labels[i]) +
                       " not in {0, 1}");
    }
  }
  return total / static_cast<double>(probs.size());
}

}  // namespace ocvit
