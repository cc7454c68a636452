#include "qamatch/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qamatch/errors.hpp"

namespace qamatch::op {
namespace {

Tape& tape_of(Var v) {
  if (!v.valid()) throw ContractError("operation on an unbound Var");
  return *v.tape();
}

void require_rank2(const char* op, Var v) {
  if (v.shape().size() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(v.shape()));
  }
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
  }
}

void accumulate(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// out[m x n] += a[m x k] * b[k x n], with optional transposes of the operands.
void gemm_acc(std::span<const double> a, bool ta, std::span<const double> b, bool tb, std::span<double> out,
              std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      if (!tb) {
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * b[j * k + p];
      }
    }
  }
}

template <typename F, typename D>
Var unary(const char* name, Var x, F f, D dfdx) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return tape_of(x).record(name, std::move(out), {x}, [x, dfdx](Tape& t, const Tensor&, std::span<const double> g) {
    auto gx = t.grad_buffer(x);
    if (gx.empty()) return;
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * dfdx(xv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions of " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " disagree");
  }
  Tensor out({m, n});
  gemm_acc(a.value().data(), false, b.value().data(), false, out.data(), m, k, n);
  return tape_of(a).record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor&, std::span<const double> g) {
    if (auto ga = t.grad_buffer(a); !ga.empty()) gemm_acc(g, false, b.value().data(), true, ga, m, n, k);
    if (auto gb = t.grad_buffer(b); !gb.empty()) gemm_acc(a.value().data(), true, g, false, gb, k, m, n);
  });
}

Var transpose(Var a) {
  require_rank2("transpose", a);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  const Tensor& av = a.value();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return tape_of(a).record("transpose", std::move(out), {a}, [a, m, n](Tape& t, const Tensor&, std::span<const double> g) {
    auto ga = t.grad_buffer(a);
    if (ga.empty()) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return tape_of(a).record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, std::span<const double> g) {
    if (auto ga = t.grad_buffer(a); !ga.empty()) accumulate(ga, g);
    if (auto gb = t.grad_buffer(b); !gb.empty()) accumulate(gb, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return tape_of(a).record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, std::span<const double> g) {
    if (auto ga = t.grad_buffer(a); !ga.empty()) accumulate(ga, g);
    if (auto gb = t.grad_buffer(b); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return tape_of(a).record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, std::span<const double> g) {
    if (auto ga = t.grad_buffer(a); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b.value()[i];
    if (auto gb = t.grad_buffer(b); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a.value()[i];
  });
}

Var add_bias(Var x, Var bias) {
  require_rank2("add_bias", x);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.shape() != Shape{n}) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not fit " + shape_str(x.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.value()[i * n + j] + bias.value()[j];
  return tape_of(x).record("add_bias", std::move(out), {x, bias}, [x, bias, m, n](Tape& t, const Tensor&, std::span<const double> g) {
    if (auto gx = t.grad_buffer(x); !gx.empty()) accumulate(gx, g);
    if (auto gb = t.grad_buffer(bias); !gb.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
  });
}

Var add_constant(Var x, const Tensor& c) {
  if (x.shape() != c.shape()) {
    throw DimensionError("add_constant: shapes " + shape_str(x.shape()) + " and " + shape_str(c.shape()) + " differ");
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] + c[i];
  return tape_of(x).record("add_constant", std::move(out), {x}, [x](Tape& t, const Tensor&, std::span<const double> g) {
    if (auto gx = t.grad_buffer(x); !gx.empty()) accumulate(gx, g);
  });
}

Var scale(Var x, double factor) { return affine(x, factor, 0.0); }

Var affine(Var x, double factor, double offset) {
  return unary(
      "affine", x, [factor, offset](double v) { return factor * v + offset; }, [factor](double) { return factor; });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double v) {
        const double y = std::tanh(v);
        return 1.0 - y * y;
      });
}

Var sigmoid(Var x) {
  auto s = [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };
  return unary("sigmoid", x, s, [s](double v) {
    const double y = s(v);
    return y * (1.0 - y);
  });
}

Var relu(Var x) {
  return unary(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; }, [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Var softmax_rows(Var x) {
  require_rank2("softmax_rows", x);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  const Tensor& xv = x.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data().data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += out[i * n + j] = std::exp(row[j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return tape_of(x).record("softmax_rows", std::move(out), {x}, [x, m, n](Tape& t, const Tensor& y, std::span<const double> g) {
    auto gx = t.grad_buffer(x);
    if (gx.empty()) return;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  require_rank2("layer_norm_rows", x);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw DimensionError("layer_norm_rows: gain/bias must be [" + std::to_string(n) + "]");
  }
  const Tensor& xv = x.value();
  std::vector<double> xhat(m * n), inv_std(m);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = gamma.value()[j] * xhat[i * n + j] + beta.value()[j];
    }
  }
  return tape_of(x).record(
      "layer_norm_rows", std::move(out), {x, gamma, beta},
      [x, gamma, beta, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, const Tensor&, std::span<const double> g) {
        if (auto gg = t.grad_buffer(gamma); !gg.empty())
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
        if (auto gb = t.grad_buffer(beta); !gb.empty())
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        auto gx = t.grad_buffer(x);
        if (gx.empty()) return;
        const double dn = static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[i * n + j] * gamma.value()[j];
            sum_d += d;
            sum_dx += d * xhat[i * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[i * n + j] * gamma.value()[j];
            gx[i * n + j] += inv_std[i] / dn * (dn * d - sum_d - xhat[i * n + j] * sum_dx);
          }
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t n = parts[0].shape().size() == 2 ? parts[0].shape()[1] : 0;
  std::size_t rows = 0;
  for (Var p : parts) {
    require_rank2("concat_rows", p);
    if (p.shape()[1] != n) {
      throw DimensionError("concat_rows: " + shape_str(parts[0].shape()) + " and " + shape_str(p.shape()) +
                           " have different column counts");
    }
    rows += p.shape()[0];
  }
  Tensor out({rows, n});
  std::size_t offset = 0;
  for (Var p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
    offset += p.value().size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts[0]).record("concat_rows", std::move(out), parts, [inputs](Tape& t, const Tensor&, std::span<const double> g) {
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t len = p.value().size();
      if (auto gp = t.grad_buffer(p); !gp.empty()) accumulate(gp, g.subspan(off, len));
      off += len;
    }
  });
}

Var concat_rows(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_rows(std::span<const Var>(parts));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const Shape& first = parts[0].shape();
  const std::size_t rows = first.size() == 2 ? first[0] : 1;
  std::size_t cols = 0;
  for (Var p : parts) {
    if (p.shape().size() != first.size() || (first.size() == 2 && p.shape()[0] != rows) || p.shape().size() > 2) {
      throw DimensionError("concat_cols: " + shape_str(first) + " and " + shape_str(p.shape()) + " do not stack");
    }
    cols += p.shape().back();
  }
  Tensor out(first.size() == 2 ? Shape{rows, cols} : Shape{cols});
  std::size_t col0 = 0;
  for (Var p : parts) {
    const std::size_t w = p.shape().back();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * cols + col0 + j] = p.value()[i * w + j];
    col0 += w;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts[0]).record("concat_cols", std::move(out), parts,
                                  [inputs, rows, cols](Tape& t, const Tensor&, std::span<const double> g) {
                                    std::size_t c0 = 0;
                                    for (Var p : inputs) {
                                      const std::size_t w = p.shape().back();
                                      if (auto gp = t.grad_buffer(p); !gp.empty())
                                        for (std::size_t i = 0; i < rows; ++i)
                                          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * cols + c0 + j];
                                      c0 += w;
                                    }
                                  });
}

Var concat_cols(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_cols(std::span<const Var>(parts));
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  require_rank2("slice_rows", x);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (begin + count > m || count == 0) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_str(x.shape()));
  }
  const auto src = x.value().data().subspan(begin * n, count * n);
  Tensor out({count, n}, std::vector<double>(src.begin(), src.end()));
  return tape_of(x).record("slice_rows", std::move(out), {x}, [x, begin, n](Tape& t, const Tensor&, std::span<const double> g) {
    if (auto gx = t.grad_buffer(x); !gx.empty()) accumulate(gx.subspan(begin * n, g.size()), g);
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (s.size() > 2) throw DimensionError("slice_cols: rank-3 input " + shape_str(s));
  const std::size_t rows = s.size() == 2 ? s[0] : 1, n = s.back();
  if (begin + count > n || count == 0) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_str(s));
  }
  Tensor out(s.size() == 2 ? Shape{rows, count} : Shape{count});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.value()[i * n + begin + j];
  return tape_of(x).record("slice_cols", std::move(out), {x},
                           [x, begin, count, rows, n](Tape& t, const Tensor&, std::span<const double> g) {
                             auto gx = t.grad_buffer(x);
                             if (gx.empty()) return;
                             for (std::size_t i = 0; i < rows; ++i)
                               for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += g[i * count + j];
                           });
}

Var reshape(Var x, Shape shape) {
  Tensor out(shape, std::vector<double>(x.value().data().begin(), x.value().data().end()));
  return tape_of(x).record("reshape", std::move(out), {x}, [x](Tape& t, const Tensor&, std::span<const double> g) {
    if (auto gx = t.grad_buffer(x); !gx.empty()) accumulate(gx, g);
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return tape_of(x).record("sum", Tensor({1}, total), {x}, [x](Tape& t, const Tensor&, std::span<const double> g) {
    if (auto gx = t.grad_buffer(x); !gx.empty())
      for (double& v : gx) v += g[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var gather_rows(Var table, std::span<const std::int32_t> ids) {
  require_rank2("gather_rows", table);
  const std::size_t rows = table.shape()[0], d = table.shape()[1];
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw IntegrityError("row id " + std::to_string(ids[i]) + " outside table of " + std::to_string(rows) + " rows");
    }
    const auto src = table.value().data().subspan(static_cast<std::size_t>(ids[i]) * d, d);
    std::copy(src.begin(), src.end(), out.data().begin() + i * d);
  }
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  return tape_of(table).record("gather_rows", std::move(out), {table},
                               [table, d, idx = std::move(idx)](Tape& t, const Tensor&, std::span<const double> g) {
                                 auto gt = t.grad_buffer(table);
                                 if (gt.empty()) return;
                                 for (std::size_t i = 0; i < idx.size(); ++i)
                                   accumulate(gt.subspan(static_cast<std::size_t>(idx[i]) * d, d), g.subspan(i * d, d));
                               });
}

Var unfold_rows(Var x, std::size_t width) {
  require_rank2("unfold_rows", x);
  const std::size_t m = x.shape()[0], d = x.shape()[1];
  if (width == 0 || width > m) {
    throw DimensionError("unfold_rows: window " + std::to_string(width) + " does not fit " + shape_str(x.shape()));
  }
  const std::size_t windows = m - width + 1, wd = width * d;
  Tensor out({windows, wd});
  for (std::size_t w = 0; w < windows; ++w) {
    const auto src = x.value().data().subspan(w * d, wd);
    std::copy(src.begin(), src.end(), out.data().begin() + w * wd);
  }
  return tape_of(x).record("unfold_rows", std::move(out), {x}, [x, windows, d, wd](Tape& t, const Tensor&, std::span<const double> g) {
    auto gx = t.grad_buffer(x);
    if (gx.empty()) return;
    for (std::size_t w = 0; w < windows; ++w) accumulate(gx.subspan(w * d, wd), g.subspan(w * wd, wd));
  });
}

Var max_over_rows(Var x) {
  require_rank2("max_over_rows", x);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<std::size_t> arg(n, 0);
  Tensor out({n});
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 1; i < m; ++i)
      if (x.value()[i * n + j] > x.value()[arg[j] * n + j]) arg[j] = i;
    out[j] = x.value()[arg[j] * n + j];
  }
  return tape_of(x).record("max_over_rows", std::move(out), {x},
                           [x, n, arg = std::move(arg)](Tape& t, const Tensor&, std::span<const double> g) {
                             auto gx = t.grad_buffer(x);
                             if (gx.empty()) return;
                             for (std::size_t j = 0; j < n; ++j) gx[arg[j] * n + j] += g[j];
                           });
}

Var masked_mean_rows(Var x, std::span<const std::uint8_t> mask) {
  require_rank2("masked_mean_rows", x);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (mask.size() != m) {
    throw DimensionError("masked_mean_rows: mask of length " + std::to_string(mask.size()) + " for " +
                         shape_str(x.shape()));
  }
  const auto count = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto v) { return v != 0; }));
  if (count == 0) throw ContractError("masked_mean_rows: mask selects no rows");
  Tensor out({n});
  for (std::size_t i = 0; i < m; ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = 0; j < n; ++j) out[j] += x.value()[i * n + j];
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return tape_of(x).record("masked_mean_rows", std::move(out), {x},
                           [x, m, n, inv, keep = std::move(keep)](Tape& t, const Tensor&, std::span<const double> g) {
                             auto gx = t.grad_buffer(x);
                             if (gx.empty()) return;
                             for (std::size_t i = 0; i < m; ++i) {
                               if (!keep[i]) continue;
                               for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j] * inv;
                             }
                           });
}

Var mask_rows(Var x, std::span<const std::uint8_t> mask) {
  require_rank2("mask_rows", x);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (mask.size() != m) {
    throw DimensionError("mask_rows: mask of length " + std::to_string(mask.size()) + " for " + shape_str(x.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i)
    if (mask[i])
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.value()[i * n + j];
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return tape_of(x).record("mask_rows", std::move(out), {x},
                           [x, m, n, keep = std::move(keep)](Tape& t, const Tensor&, std::span<const double> g) {
                             auto gx = t.grad_buffer(x);
                             if (gx.empty()) return;
                             for (std::size_t i = 0; i < m; ++i)
                               if (keep[i])
                                 for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j];
                           });
}

Var cosine(Var q, Var a, double eps) {
  if (q.value().size() != a.value().size()) {
    throw DimensionError("cosine: operands " + shape_str(q.shape()) + " and " + shape_str(a.shape()) +
                         " differ in dimension");
  }
  const auto qv = q.value().data(), av = a.value().data();
  double dot = 0.0, qq = 0.0, aa = 0.0;
  for (std::size_t i = 0; i < qv.size(); ++i) {
    dot += qv[i] * av[i];
    qq += qv[i] * qv[i];
    aa += av[i] * av[i];
  }
  const double nq = std::sqrt(qq), na = std::sqrt(aa), denom = nq * na + eps;
  const double raw = dot / denom;
  const double clamped = std::clamp(raw, -1.0, 1.0);
  const bool active = raw == clamped;
  return tape_of(q).record(
      "cosine", Tensor({1}, clamped), {q, a}, [q, a, dot, nq, na, denom, active](Tape& t, const Tensor&, std::span<const double> g) {
        if (!active) return;
        const double gs = g[0];
        const auto qv = q.value().data(), av = a.value().data();
        // d/dq [dot / (|q||a| + eps)] = a / D - dot * |a| * q / (|q| D^2)
        if (auto gq = t.grad_buffer(q); !gq.empty()) {
          const double coef = nq > 0 ? dot * na / (nq * denom * denom) : 0.0;
          for (std::size_t i = 0; i < gq.size(); ++i) gq[i] += gs * (av[i] / denom - coef * qv[i]);
        }
        if (auto ga = t.grad_buffer(a); !ga.empty()) {
          const double coef = na > 0 ? dot * nq / (na * denom * denom) : 0.0;
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs * (qv[i] / denom - coef * av[i]);
        }
      });
}

}  // namespace qamatch::op
