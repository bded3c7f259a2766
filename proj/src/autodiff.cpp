#include "hmtgin/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace hmtgin {

namespace {

std::atomic<bool> g_corrupt_backward{false};

void accumulate_into(const Var& v, const Tensor& g) {
  if (v.requires_grad()) v.node()->accumulate(g);
}

bool same_2d(const Tensor& a, const Tensor& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

struct Broadcast {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Shape out_shape;
};

Broadcast broadcast_shapes(const Tensor& a, const Tensor& b,
                           const char* op) {
  if (a.shape() == b.shape()) {
    return {a.rows(), a.cols(), a.shape()};
  }
  const std::size_t ra = a.rows(), ca = a.cols();
  const std::size_t rb = b.rows(), cb = b.cols();
  auto compatible = [](std::size_t x, std::size_t y) {
    return x == y || x == 1 || y == 1;
  };
  if (!compatible(ra, rb) || !compatible(ca, cb)) {
    throw ShapeError(std::string(op) + ": incompatible shapes " +
                     shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  Broadcast out;
  out.rows = std::max(ra, rb);
  out.cols = std::max(ca, cb);
  if (a.rank() <= 1 && b.rank() <= 1) {
    out.out_shape = (a.rank() == 0 && b.rank() == 0) ? Shape{}
                                                     : Shape{out.cols};
  } else {
    out.out_shape = Shape{out.rows, out.cols};
  }
  return out;
}

inline std::size_t bindex(const Tensor& t, std::size_t r, std::size_t c) {
  const std::size_t rr = t.rows() == 1 ? 0 : r;
  const std::size_t cc = t.cols() == 1 ? 0 : c;
  return rr * t.cols() + cc;
}

// Sums a broadcast gradient back down to the shape of `like`.
Tensor reduce_to(const Tensor& g, const Broadcast& bc, const Tensor& like) {
  if (g.shape() == like.shape()) return g;
  Tensor out(like.shape());
  for (std::size_t r = 0; r < bc.rows; ++r) {
    for (std::size_t c = 0; c < bc.cols; ++c) {
      out[bindex(like, r, c)] += g[r * bc.cols + c];
    }
  }
  return out;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_string(t.shape()));
  }
}

// Gathered/scattered "rows": rank-1 tensors are columns of scalars here.
std::size_t row_width(const Tensor& t) { return t.rank() == 1 ? 1 : t.cols(); }
std::size_t row_count(const Tensor& t) {
  if (t.rank() == 1) return t.shape()[0];
  if (t.rank() == 2) return t.shape()[0];
  throw ShapeError("row access on tensor of shape " + shape_string(t.shape()));
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  if (grad.numel() != g.numel()) {
    throw ShapeError("gradient shape " + shape_string(g.shape()) +
                     " does not match " + shape_string(grad.shape()));
  }
  for (std::size_t i = 0; i < g.numel(); ++i) grad[i] += g[i];
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  Var v = constant(std::move(value));
  v.node_->requires_grad = true;
  return v;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor::zeros_like(node_->value);
  return node_->grad;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  Var out = Var::constant(std::move(value));
  if (!record_) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var& v) { return v.requires_grad(); });
  if (!needs) return out;
  out.node_->requires_grad = true;
  entries_.push_back(Entry{std::move(inputs), out, std::move(fn)});
  return out;
}

Var Tape::matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw ShapeError("matmul: inner extents differ, " +
                     shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  }
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  return record(std::move(out), {a, b}, [a, b, m, k, n](const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.requires_grad()) {
      Tensor ga(Shape{m, k});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] = s;
        }
      accumulate_into(a, ga);
    }
    if (b.requires_grad()) {
      Tensor gb(Shape{k, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      accumulate_into(b, gb);
    }
  });
}

Var Tape::transpose(const Var& a) {
  const Tensor& av = a.value();
  require_rank2(av, "transpose");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return record(std::move(out), {a}, [a, m, n](const Tensor& g) {
    Tensor ga(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] = g[j * m + i];
    accumulate_into(a, ga);
  });
}

Var Tape::reshape(const Var& a, Shape shape) {
  if (shape_numel(shape) != a.value().numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) +
                     " as " + shape_string(shape));
  }
  Tensor out(shape, std::vector<double>(a.value().data().begin(),
                                        a.value().data().end()));
  Shape original = a.shape();
  return record(std::move(out), {a}, [a, original](const Tensor& g) {
    accumulate_into(a, Tensor(original, std::vector<double>(g.data().begin(),
                                                            g.data().end())));
  });
}

Var Tape::add(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast_shapes(av, bv, "add");
  Tensor out(bc.out_shape);
  for (std::size_t r = 0; r < bc.rows; ++r)
    for (std::size_t c = 0; c < bc.cols; ++c)
      out[r * bc.cols + c] = av[bindex(av, r, c)] + bv[bindex(bv, r, c)];
  return record(std::move(out), {a, b}, [a, b, bc](const Tensor& g) {
    if (a.requires_grad()) accumulate_into(a, reduce_to(g, bc, a.value()));
    if (b.requires_grad()) accumulate_into(b, reduce_to(g, bc, b.value()));
  });
}

Var Tape::sub(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast_shapes(av, bv, "sub");
  Tensor out(bc.out_shape);
  for (std::size_t r = 0; r < bc.rows; ++r)
    for (std::size_t c = 0; c < bc.cols; ++c)
      out[r * bc.cols + c] = av[bindex(av, r, c)] - bv[bindex(bv, r, c)];
  return record(std::move(out), {a, b}, [a, b, bc](const Tensor& g) {
    if (a.requires_grad()) accumulate_into(a, reduce_to(g, bc, a.value()));
    if (b.requires_grad()) {
      Tensor neg = g;
      for (double& x : neg.data()) x = -x;
      accumulate_into(b, reduce_to(neg, bc, b.value()));
    }
  });
}

Var Tape::mul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast_shapes(av, bv, "mul");
  Tensor out(bc.out_shape);
  for (std::size_t r = 0; r < bc.rows; ++r)
    for (std::size_t c = 0; c < bc.cols; ++c)
      out[r * bc.cols + c] = av[bindex(av, r, c)] * bv[bindex(bv, r, c)];
  return record(std::move(out), {a, b}, [a, b, bc](const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.requires_grad()) {
      Tensor ga(g.shape());
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c)
          ga[r * bc.cols + c] = g[r * bc.cols + c] * bv[bindex(bv, r, c)];
      accumulate_into(a, reduce_to(ga, bc, av));
    }
    if (b.requires_grad()) {
      Tensor gb(g.shape());
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c)
          gb[r * bc.cols + c] = g[r * bc.cols + c] * av[bindex(av, r, c)];
      accumulate_into(b, reduce_to(gb, bc, bv));
    }
  });
}

Var Tape::scale(const Var& a, double c) {
  Tensor out = a.value();
  for (double& x : out.data()) x *= c;
  return record(std::move(out), {a}, [a, c](const Tensor& g) {
    Tensor ga = g;
    for (double& x : ga.data()) x *= c;
    accumulate_into(a, ga);
  });
}

Var Tape::concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t rank = parts.front().value().rank();
  for (const Var& p : parts) {
    if (p.value().rank() != rank || rank == 0 || rank > 2) {
      throw ShapeError("concat: mixed or unsupported ranks, " +
                       shape_string(parts.front().shape()) + " and " +
                       shape_string(p.shape()));
    }
  }
  if (axis >= rank) throw ShapeError("concat: axis out of range");

  std::vector<Var> inputs(parts.begin(), parts.end());
  if (rank == 1 || axis == 0) {
    const std::size_t width = rank == 1 ? 1 : parts.front().value().cols();
    std::vector<double> data;
    std::size_t rows = 0;
    for (const Var& p : parts) {
      if (rank == 2 && p.value().cols() != width) {
        throw ShapeError("concat: column mismatch, " +
                         shape_string(parts.front().shape()) + " and " +
                         shape_string(p.shape()));
      }
      data.insert(data.end(), p.value().data().begin(), p.value().data().end());
      rows += row_count(p.value());
    }
    Shape shape = rank == 1 ? Shape{rows} : Shape{rows, width};
    return record(Tensor(shape, std::move(data)), inputs,
                  [inputs](const Tensor& g) {
                    std::size_t offset = 0;
                    for (const Var& p : inputs) {
                      const std::size_t n = p.value().numel();
                      if (p.requires_grad()) {
                        Tensor gp(p.shape());
                        std::copy_n(g.data().begin() + offset, n,
                                    gp.data().begin());
                        accumulate_into(p, gp);
                      }
                      offset += n;
                    }
                  });
  }

  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) {
      throw ShapeError("concat: row mismatch, " +
                       shape_string(parts.front().shape()) + " and " +
                       shape_string(p.shape()));
    }
    cols += p.value().cols();
  }
  Tensor out(Shape{rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.value().cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.value().row(r).begin(), w,
                  out.data().begin() + r * cols + offset);
    }
    offset += w;
  }
  return record(std::move(out), inputs, [inputs, rows, cols](const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const std::size_t w = p.value().cols();
      if (p.requires_grad()) {
        Tensor gp(p.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(g.data().begin() + r * cols + offset, w,
                      gp.data().begin() + r * w);
        }
        accumulate_into(p, gp);
      }
      offset += w;
    }
  });
}

Var Tape::gather_rows(const Var& t, std::span<const std::size_t> indices) {
  const Tensor& tv = t.value();
  const std::size_t n = row_count(tv);
  const std::size_t w = row_width(tv);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Shape shape = tv.rank() == 1 ? Shape{idx.size()} : Shape{idx.size(), w};
  Tensor out(shape);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= n) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[k]) +
                              " out of range for " + shape_string(tv.shape()));
    }
    std::copy_n(tv.data().begin() + idx[k] * w, w, out.data().begin() + k * w);
  }
  return record(std::move(out), {t}, [t, idx, w](const Tensor& g) {
    Tensor gt = Tensor::zeros_like(t.value());
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t c = 0; c < w; ++c) gt[idx[k] * w + c] += g[k * w + c];
    accumulate_into(t, gt);
  });
}

Var Tape::scatter_add_rows(const Var& t, std::span<const std::size_t> indices,
                           const Var& rows) {
  const Tensor& tv = t.value();
  const Tensor& rv = rows.value();
  const std::size_t n = row_count(tv);
  const std::size_t w = row_width(tv);
  if (rv.rank() != tv.rank() || row_count(rv) != indices.size() ||
      row_width(rv) != w) {
    throw ShapeError("scatter_add_rows: rows " + shape_string(rv.shape()) +
                     " incompatible with target " + shape_string(tv.shape()) +
                     " and " + std::to_string(indices.size()) + " indices");
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out = tv;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= n) {
      throw std::out_of_range("scatter_add_rows: index " +
                              std::to_string(idx[k]) + " out of range for " +
                              shape_string(tv.shape()));
    }
    for (std::size_t c = 0; c < w; ++c) out[idx[k] * w + c] += rv[k * w + c];
  }
  return record(std::move(out), {t, rows}, [t, rows, idx, w](const Tensor& g) {
    accumulate_into(t, g);
    if (rows.requires_grad()) {
      Tensor gr(rows.shape());
      for (std::size_t k = 0; k < idx.size(); ++k)
        std::copy_n(g.data().begin() + idx[k] * w, w,
                    gr.data().begin() + k * w);
      accumulate_into(rows, gr);
    }
  });
}

Var Tape::sum_rows(const Var& t) {
  const Tensor& tv = t.value();
  require_rank2(tv, "sum_rows");
  const std::size_t n = tv.rows(), d = tv.cols();
  Tensor out(Shape{n});
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += tv[r * d + c];
    out[r] = s;
  }
  return record(std::move(out), {t}, [t, n, d](const Tensor& g) {
    Tensor gt(Shape{n, d});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) gt[r * d + c] = g[r];
    accumulate_into(t, gt);
  });
}

Var Tape::sum(const Var& t) {
  double s = 0.0;
  for (double x : t.value().data()) s += x;
  return record(Tensor::scalar(s), {t}, [t](const Tensor& g) {
    accumulate_into(t, Tensor(t.shape(), g.item()));
  });
}

Var Tape::mean(const Var& t) {
  const std::size_t n = t.value().numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(t), 1.0 / static_cast<double>(n));
}

Var Tape::leaky_relu(const Var& t, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw std::invalid_argument("leaky_relu: slope must lie in (0, 1)");
  }
  Tensor out = t.value();
  for (double& x : out.data()) x = x > 0.0 ? x : slope * x;
  return record(std::move(out), {t}, [t, slope](const Tensor& g) {
    const Tensor& x = t.value();
    const double fault = testing::corrupt_backward() ? 1.5 : 1.0;
    Tensor gt(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
      gt[i] = fault * g[i] * (x[i] > 0.0 ? 1.0 : slope);
    accumulate_into(t, gt);
  });
}

Var Tape::sigmoid(const Var& t) {
  Tensor out = t.value();
  for (double& x : out.data()) x = hmtgin::sigmoid(x);
  Tensor y = out;
  return record(std::move(out), {t}, [t, y](const Tensor& g) {
    Tensor gt(y.shape());
    for (std::size_t i = 0; i < y.numel(); ++i)
      gt[i] = g[i] * y[i] * (1.0 - y[i]);
    accumulate_into(t, gt);
  });
}

Var Tape::log_sigmoid(const Var& t) {
  Tensor out = t.value();
  for (double& x : out.data()) x = hmtgin::log_sigmoid(x);
  return record(std::move(out), {t}, [t](const Tensor& g) {
    const Tensor& x = t.value();
    Tensor gt(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
      gt[i] = g[i] * hmtgin::sigmoid(-x[i]);
    accumulate_into(t, gt);
  });
}

Var Tape::batch_norm(const Var& x, const Var& gamma, const Var& beta,
                     double eps) {
  const Tensor& xv = x.value();
  require_rank2(xv, "batch_norm");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (n == 0) throw ShapeError("batch_norm: empty batch");
  if (gamma.value().numel() != d || beta.value().numel() != d) {
    throw ShapeError("batch_norm: affine parameters " +
                     shape_string(gamma.shape()) + "/" +
                     shape_string(beta.shape()) + " do not match input " +
                     shape_string(xv.shape()));
  }
  std::vector<double> inv_std(d);
  Tensor xhat(Shape{n, d});
  for (std::size_t c = 0; c < d; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < n; ++r) mu += xv[r * d + c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double dev = xv[r * d + c] - mu;
      var += dev * dev;
    }
    var /= static_cast<double>(n);
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t r = 0; r < n; ++r)
      xhat[r * d + c] = (xv[r * d + c] - mu) * inv_std[c];
  }
  Tensor out(Shape{n, d});
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c)
      out[r * d + c] = gv[c] * xhat[r * d + c] + bv[c];

  return record(std::move(out), {x, gamma, beta},
                [x, gamma, beta, xhat, inv_std, n, d](const Tensor& g) {
                  const Tensor& gv = gamma.value();
                  Tensor ggamma(gamma.shape());
                  Tensor gbeta(beta.shape());
                  Tensor gx(Shape{n, d});
                  const double nn = static_cast<double>(n);
                  for (std::size_t c = 0; c < d; ++c) {
                    double sum_dxhat = 0.0;
                    double sum_dxhat_xhat = 0.0;
                    for (std::size_t r = 0; r < n; ++r) {
                      const double gy = g[r * d + c];
                      ggamma[c] += gy * xhat[r * d + c];
                      gbeta[c] += gy;
                      const double dxhat = gy * gv[c];
                      sum_dxhat += dxhat;
                      sum_dxhat_xhat += dxhat * xhat[r * d + c];
                    }
                    for (std::size_t r = 0; r < n; ++r) {
                      const double dxhat = g[r * d + c] * gv[c];
                      gx[r * d + c] = inv_std[c] / nn *
                                      (nn * dxhat - sum_dxhat -
                                       xhat[r * d + c] * sum_dxhat_xhat);
                    }
                  }
                  accumulate_into(x, gx);
                  accumulate_into(gamma, ggamma);
                  accumulate_into(beta, gbeta);
                });
}

Var Tape::softmax_cross_entropy(const Var& logits,
                                std::span<const std::size_t> labels) {
  const Tensor& lv = logits.value();
  require_rank2(lv, "softmax_cross_entropy");
  const std::size_t n = lv.rows(), k = lv.cols();
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_string(lv.shape()));
  }
  if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  std::vector<std::size_t> y(labels.begin(), labels.end());
  Tensor probs(Shape{n, k});
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (y[r] >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " +
                              std::to_string(y[r]) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    const auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[y[r]];
    for (std::size_t c = 0; c < k; ++c) probs[r * k + c] = std::exp(row[c] - lse);
  }
  const double nn = static_cast<double>(n);
  return record(Tensor::scalar(total / nn), {logits},
                [logits, probs, y, n, k, nn](const Tensor& g) {
                  Tensor gl = probs;
                  for (std::size_t r = 0; r < n; ++r) gl[r * k + y[r]] -= 1.0;
                  const double s = g.item() / nn;
                  for (double& v : gl.data()) v *= s;
                  accumulate_into(logits, gl);
                });
}

void Tape::backward(const Var& loss) {
  if (!loss.defined() || loss.value().numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     (loss.defined() ? shape_string(loss.shape())
                                     : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;
  for (Entry& e : entries_) e.output.zero_grad();
  loss.node()->accumulate(Tensor(loss.shape(), 1.0));
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(it->output.node()->grad);
  }
}

const GradCheckEntry* GradCheckReport::worst() const {
  const GradCheckEntry* best = nullptr;
  for (const auto& e : entries) {
    if (best == nullptr || e.max_rel_error > best->max_rel_error) best = &e;
  }
  return best;
}

GradCheckReport grad_check(const std::function<Var(Tape&)>& f,
                           std::span<const NamedParameter> params,
                           double step, double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;

  std::vector<NamedParameter> ps(params.begin(), params.end());
  for (auto& p : ps) p.var.zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(ps.size());
  for (auto& p : ps) analytic.push_back(p.var.grad());

  auto evaluate = [&f]() {
    Tape tape(false);
    return f(tape).value().item();
  };

  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    GradCheckEntry entry;
    entry.name = ps[pi].name;
    Tensor& value = ps[pi].var.mutable_value();
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double saved = value[i];
      value[i] = saved + step;
      const double plus = evaluate();
      value[i] = saved - step;
      const double minus = evaluate();
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      if (i == 0 || rel > entry.max_rel_error || std::isnan(rel)) {
        entry.max_rel_error = std::isnan(rel) ? INFINITY : rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    if (!(entry.max_rel_error <= tolerance)) report.passed = false;
    report.entries.push_back(std::move(entry));
  }
  for (auto& p : ps) p.var.zero_grad();
  return report;
}

namespace testing {
void set_corrupt_backward(bool enabled) { g_corrupt_backward = enabled; }
bool corrupt_backward() { return g_corrupt_backward; }
}  // namespace testing

}  // namespace hmtgin
