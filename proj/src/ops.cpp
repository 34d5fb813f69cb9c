#include "lexfusion/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lexfusion::ops {
namespace {

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch between " +
                   shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

bool is_bias_for(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) return false;
  if (b.rank() == 1) return b.shape()[0] == a.cols();
  if (b.rank() == 2) return b.shape()[0] == 1 && b.shape()[1] == a.cols();
  return false;
}

void accumulate(Tape& t, std::size_t id, const Tensor& g, double factor = 1.0) {
  if (!t.requires_grad(id)) return;
  Tensor& buf = t.grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += factor * g[i];
}

// Elementwise unary op with derivative expressed through input and output.
template <typename Fwd, typename Deriv>
Var unary(const char* name, Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(name, std::move(out), {a},
                         [ia, deriv](Tape& t, std::size_t self) {
                           const Tensor& g = t.out_grad(self);
                           const Tensor& x = t.value(ia);
                           const Tensor& y = t.value(self);
                           Tensor& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             ga[i] += g[i] * deriv(x[i], y[i]);
                           }
                         });
}

}  // namespace

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  if (x.same_shape(y)) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return a.tape().record("add", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
      const Tensor& g = t.out_grad(self);
      accumulate(t, ia, g);
      accumulate(t, ib, g);
    });
  }
  if (!is_bias_for(x, y)) mismatch("add", x, y);
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = x.at(r, c) + y[c];
  }
  return a.tape().record("add_bias", std::move(out), {a, b},
                         [ia, ib, rows, cols](Tape& t, std::size_t self) {
                           const Tensor& g = t.out_grad(self);
                           accumulate(t, ia, g);
                           if (!t.requires_grad(ib)) return;
                           Tensor& gb = t.grad_buffer(ib);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < cols; ++c) gb[c] += g.at(r, c);
                           }
                         });
}

Var sub(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (!x.same_shape(y)) mismatch("sub", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record("sub", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    accumulate(t, ia, g);
    accumulate(t, ib, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (!x.same_shape(y)) mismatch("mul", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record("mul", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = factor * x[i];
  const std::size_t ia = a.id();
  return a.tape().record("scale", std::move(out), {a}, [ia, factor](Tape& t, std::size_t self) {
    accumulate(t, ia, t.out_grad(self), factor);
  });
}

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() > 2 || y.rank() > 2 || x.cols() != y.rows()) mismatch("matmul", x, y);
  const std::size_t n = x.rows();
  const std::size_t k = x.cols();
  const std::size_t m = y.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &out[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* yrow = y.values().data() + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += xv * yrow[j];
    }
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record("matmul", std::move(out), {a, b},
                         [ia, ib, n, k, m](Tape& t, std::size_t self) {
                           const Tensor& g = t.out_grad(self);
                           const Tensor& x = t.value(ia);
                           const Tensor& y = t.value(ib);
                           if (t.requires_grad(ia)) {
                             Tensor& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t p = 0; p < k; ++p) {
                                 double acc = 0.0;
                                 for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * y[p * m + j];
                                 ga[i * k + p] += acc;
                               }
                             }
                           }
                           if (t.requires_grad(ib)) {
                             Tensor& gb = t.grad_buffer(ib);
                             for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t p = 0; p < k; ++p) {
                                 const double xv = x[i * k + p];
                                 if (xv == 0.0) continue;
                                 for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += xv * g[i * m + j];
                               }
                             }
                           }
                         });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  if (x.rank() > 2) throw ShapeError("transpose: expected rank <= 2, got " + shape_string(x.shape()));
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  }
  const std::size_t ia = a.id();
  return a.tape().record("transpose", std::move(out), {a}, [ia, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    }
  });
}

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  const Tensor& first = parts.front().value();
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  ids.reserve(parts.size());
  extents.reserve(parts.size());
  std::size_t total = 0;
  bool all_vectors = true;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (v.rank() > 2) throw ShapeError("concat: rank > 2 input " + shape_string(v.shape()));
    all_vectors = all_vectors && v.rank() <= 1;
    if (axis == 0 && v.cols() != first.cols()) mismatch("concat(axis 0)", first, v);
    if (axis == 1 && v.rows() != first.rows()) mismatch("concat(axis 1)", first, v);
    const std::size_t e = axis == 0 ? v.rows() : v.cols();
    ids.push_back(p.id());
    extents.push_back(e);
    total += e;
  }
  const std::size_t rows = axis == 0 ? total : first.rows();
  const std::size_t cols = axis == 0 ? first.cols() : total;
  Shape shape = (axis == 1 && all_vectors) ? Shape{cols} : Shape{rows, cols};
  Tensor out(shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < v.rows(); ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) {
          out[(offset + r) * cols + c] = v.at(r, c);
        } else {
          out[r * cols + offset + c] = v.at(r, c);
        }
      }
    }
    offset += extents[k];
  }
  return parts.front().tape().record(
      "concat", std::move(out), parts, [ids, extents, axis, cols](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.requires_grad(ids[k])) {
            const Tensor& v = t.value(ids[k]);
            Tensor& gv = t.grad_buffer(ids[k]);
            const std::size_t vc = v.cols();
            for (std::size_t r = 0; r < v.rows(); ++r) {
              for (std::size_t c = 0; c < vc; ++c) {
                gv[r * vc + c] += axis == 0 ? g[(offset + r) * cols + c] : g[r * cols + offset + c];
              }
            }
          }
          offset += extents[k];
        }
      });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  if (x.rank() > 2 || begin + count > x.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t c = x.cols();
  Tensor out({count, c});
  std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(begin * c), count * c,
              out.values().begin());
  const std::size_t ia = a.id();
  return a.tape().record("slice_rows", std::move(out), {a},
                         [ia, begin, c](Tape& t, std::size_t self) {
                           const Tensor& g = t.out_grad(self);
                           Tensor& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
                         });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  if (x.rank() > 2 || begin + count > x.cols()) {
    throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out({r, count});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x[i * c + begin + j];
  }
  const std::size_t ia = a.id();
  return a.tape().record("slice_cols", std::move(out), {a},
                         [ia, begin, count, r, c](Tape& t, std::size_t self) {
                           const Tensor& g = t.out_grad(self);
                           Tensor& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < r; ++i) {
                             for (std::size_t j = 0; j < count; ++j) ga[i * c + begin + j] += g[i * count + j];
                           }
                         });
}

Var select(Var a, std::size_t index) {
  const Tensor& x = a.value();
  if (x.rank() != 3 || index >= x.shape()[0]) {
    throw ShapeError("select: index " + std::to_string(index) + " invalid for " +
                     shape_string(x.shape()));
  }
  const std::size_t r = x.shape()[1];
  const std::size_t c = x.shape()[2];
  const std::size_t offset = index * r * c;
  Tensor out({r, c});
  std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(offset), r * c, out.values().begin());
  const std::size_t ia = a.id();
  return a.tape().record("select", std::move(out), {a}, [ia, offset](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record("reshape", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    accumulate(t, ia, t.out_grad(self));
  });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var leaky_relu(Var a, double slope) {
  return unary("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

namespace {

// Shared by softmax and masked_softmax: dL/dx_j = y_j (g_j - sum_k g_k y_k).
void softmax_backward(Tape& t, std::size_t self, std::size_t ia) {
  const Tensor& g = t.out_grad(self);
  const Tensor& y = t.value(self);
  Tensor& ga = t.grad_buffer(ia);
  const std::size_t rows = y.rows();
  const std::size_t cols = y.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += g.at(r, c) * y.at(r, c);
    for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += y.at(r, c) * (g.at(r, c) - dot);
  }
}

}  // namespace

Var softmax(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, x.at(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out.at(r, c) = std::exp(x.at(r, c) - mx);
      total += out.at(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= total;
  }
  const std::size_t ia = a.id();
  return a.tape().record("softmax", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    softmax_backward(t, self, ia);
  });
}

Var masked_softmax(Var a, const Tensor& mask) {
  const Tensor& x = a.value();
  if (!x.same_shape(mask)) mismatch("masked_softmax", x, mask);
  Tensor out(x.shape());
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.at(r, c) != 0.0) mx = std::max(mx, x.at(r, c));
    }
    if (!std::isfinite(mx)) {
      throw ShapeError("masked_softmax: row " + std::to_string(r) + " has no unmasked entry");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = mask.at(r, c) != 0.0 ? std::exp(x.at(r, c) - mx) : 0.0;
      out.at(r, c) = e;
      total += e;
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= total;
  }
  const std::size_t ia = a.id();
  return a.tape().record("masked_softmax", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    softmax_backward(t, self, ia);
  });
}

Var log_sum_exp(Var a) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (cols == 0) throw ShapeError("log_sum_exp: empty rows in " + shape_string(x.shape()));
  Tensor out(x.rank() <= 1 ? Shape{1} : Shape{rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, x.at(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(x.at(r, c) - mx);
    out[r] = mx + std::log(total);
  }
  const std::size_t ia = a.id();
  return a.tape().record("log_sum_exp", std::move(out), {a},
                         [ia, rows, cols](Tape& t, std::size_t self) {
                           const Tensor& g = t.out_grad(self);
                           const Tensor& y = t.value(self);
                           const Tensor& x = t.value(ia);
                           Tensor& ga = t.grad_buffer(ia);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < cols; ++c) {
                               ga[r * cols + c] += g[r] * std::exp(x[r * cols + c] - y[r]);
                             }
                           }
                         });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double total = 0.0;
  for (double v : x.values()) total += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", Tensor::scalar(total), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    Tensor& ga = t.grad_buffer(ia);
    for (double& v : ga.values()) v += g;
  });
}

Var mean(Var a) {
  const Tensor& x = a.value();
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (double v : x.values()) total += v;
  const std::size_t ia = a.id();
  return a.tape().record("mean", Tensor::scalar(total / n), {a}, [ia, n](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0] / n;
    Tensor& ga = t.grad_buffer(ia);
    for (double& v : ga.values()) v += g;
  });
}

Var embedding_lookup(Var table, std::span<const std::size_t> ids) {
  const Tensor& w = table.value();
  if (w.rank() != 2) throw ShapeError("embedding_lookup: table must be rank 2, got " + shape_string(w.shape()));
  const std::size_t vocab = w.rows();
  const std::size_t d = w.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(w.values().data() + ids[i] * d, d, &out[i * d]);
  }
  const std::size_t it = table.id();
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return table.tape().record("embedding_lookup", std::move(out), {table},
                             [it, rows = std::move(rows), d](Tape& t, std::size_t self) {
                               const Tensor& g = t.out_grad(self);
                               Tensor& gw = t.grad_buffer(it);
                               for (std::size_t i = 0; i < rows.size(); ++i) {
                                 for (std::size_t j = 0; j < d; ++j) gw[rows[i] * d + j] += g[i * d + j];
                               }
                             });
}

Var dropout(Var a, double rate, bool train, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  const Tensor& x = a.value();
  const double keep = 1.0 - rate;
  Tensor mask(x.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = uniform01(rng) < keep ? 1.0 / keep : 0.0;
    out[i] = x[i] * mask[i];
  }
  const std::size_t ia = a.id();
  return a.tape().record("dropout", std::move(out), {a},
                         [ia, mask = std::move(mask)](Tape& t, std::size_t self) {
                           const Tensor& g = t.out_grad(self);
                           Tensor& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
                         });
}

}  // namespace lexfusion::ops
