#include "comg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace comg {

namespace {

using detail::TensorNode;

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) op_shape_error(op, a.shape(), b.shape());
}

void check_rank2(const char* op, const Tensor& x) {
  if (x.rank() != 2)
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " + shape_str(x.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  Tensor r = make_result(a.shape(), std::move(out), {a, b}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [an, bn, rn] {
      const auto& g = rn->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    };
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  Tensor r = make_result(a.shape(), std::move(out), {a, b}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [an, bn, rn] {
      const auto& g = rn->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  Tensor r = make_result(a.shape(), std::move(out), {a, b}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [an, bn, rn] {
      const auto& g = rn->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->value[i];
      }
    };
  return r;
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.data());
  for (double& v : out) v *= c;
  TensorNode* an = a.node().get();
  Tensor r = make_result(a.shape(), std::move(out), {a}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [an, rn, c] {
      auto& ga = an->ensure_grad();
      for (size_t i = 0; i < rn->grad.size(); ++i) ga[i] += c * rn->grad[i];
    };
  return r;
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) op_shape_error("scale_by", a.shape(), s.shape());
  const double c = s.data()[0];
  std::vector<double> out(a.data());
  for (double& v : out) v *= c;
  TensorNode* an = a.node().get();
  TensorNode* sn = s.node().get();
  Tensor r = make_result(a.shape(), std::move(out), {a, s}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [an, sn, rn] {
      const auto& g = rn->grad;
      const double c = sn->value[0];
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
      }
      if (sn->requires_grad) {
        auto& gs = sn->ensure_grad();
        double acc = 0.0;
        for (size_t i = 0; i < g.size(); ++i) acc += g[i] * an->value[i];
        gs[0] += acc;
      }
    };
  return r;
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data());
  for (double& v : out) v += c;
  TensorNode* an = a.node().get();
  Tensor r = make_result(a.shape(), std::move(out), {a}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [an, rn] {
      auto& ga = an->ensure_grad();
      for (size_t i = 0; i < rn->grad.size(); ++i) ga[i] += rn->grad[i];
    };
  return r;
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  TensorNode* xn = x.node().get();
  Tensor r = make_result(x.shape(), std::move(out), {x}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, rn] {
      auto& gx = xn->ensure_grad();
      for (size_t i = 0; i < rn->grad.size(); ++i)
        if (xn->value[i] > 0.0) gx[i] += rn->grad[i];
    };
  return r;
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel_of(shape) != x.numel()) op_shape_error("reshape", x.shape(), shape);
  TensorNode* xn = x.node().get();
  Tensor r = make_result(shape, x.data(), {x}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, rn] {
      auto& gx = xn->ensure_grad();
      for (size_t i = 0; i < rn->grad.size(); ++i) gx[i] += rn->grad[i];
    };
  return r;
}

Tensor transpose(const Tensor& x) {
  check_rank2("transpose", x);
  const int n = x.dim(0), m = x.dim(1);
  std::vector<double> out(static_cast<size_t>(n) * m);
  const auto& xv = x.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<size_t>(j) * n + i] = xv[static_cast<size_t>(i) * m + j];
  TensorNode* xn = x.node().get();
  Tensor r = make_result({m, n}, std::move(out), {x}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, rn, n, m] {
      auto& gx = xn->ensure_grad();
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i)
          gx[static_cast<size_t>(i) * m + j] += rn->grad[static_cast<size_t>(j) * n + i];
    };
  return r;
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input list");
  check_rank2("concat_rows", xs[0]);
  const int cols = xs[0].dim(1);
  int rows = 0;
  for (const Tensor& t : xs) {
    check_rank2("concat_rows", t);
    if (t.dim(1) != cols) op_shape_error("concat_rows", xs[0].shape(), t.shape());
    rows += t.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(rows) * cols);
  for (const Tensor& t : xs) out.insert(out.end(), t.data().begin(), t.data().end());
  Tensor r = make_result({rows, cols}, std::move(out), xs, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad()) {
    std::vector<TensorNode*> parts;
    for (const Tensor& t : xs) parts.push_back(t.node().get());
    rn->backward_fn = [parts, rn] {
      size_t off = 0;
      for (TensorNode* p : parts) {
        if (p->requires_grad) {
          auto& gp = p->ensure_grad();
          for (size_t i = 0; i < p->value.size(); ++i) gp[i] += rn->grad[off + i];
        }
        off += p->value.size();
      }
    };
  }
  return r;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty input list");
  check_rank2("concat_cols", xs[0]);
  const int rows = xs[0].dim(0);
  int cols = 0;
  for (const Tensor& t : xs) {
    check_rank2("concat_cols", t);
    if (t.dim(0) != rows) op_shape_error("concat_cols", xs[0].shape(), t.shape());
    cols += t.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  int col_off = 0;
  for (const Tensor& t : xs) {
    const int tc = t.dim(1);
    const auto& tv = t.data();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < tc; ++j)
        out[static_cast<size_t>(i) * cols + col_off + j] = tv[static_cast<size_t>(i) * tc + j];
    col_off += tc;
  }
  Tensor r = make_result({rows, cols}, std::move(out), xs, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad()) {
    std::vector<TensorNode*> parts;
    for (const Tensor& t : xs) parts.push_back(t.node().get());
    rn->backward_fn = [parts, rn, rows, cols] {
      int off = 0;
      for (TensorNode* p : parts) {
        const int tc = p->shape[1];
        if (p->requires_grad) {
          auto& gp = p->ensure_grad();
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < tc; ++j)
              gp[static_cast<size_t>(i) * tc + j] += rn->grad[static_cast<size_t>(i) * cols + off + j];
        }
        off += tc;
      }
    };
  }
  return r;
}

Tensor slice_rows(const Tensor& x, int start, int len) {
  check_rank2("slice_rows", x);
  const int n = x.dim(0), m = x.dim(1);
  if (start < 0 || len < 0 || start + len > n)
    throw std::invalid_argument("slice_rows: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of " + shape_str(x.shape()));
  std::vector<double> out(x.data().begin() + static_cast<size_t>(start) * m,
                          x.data().begin() + static_cast<size_t>(start + len) * m);
  TensorNode* xn = x.node().get();
  Tensor r = make_result({len, m}, std::move(out), {x}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, rn, start, m] {
      auto& gx = xn->ensure_grad();
      const size_t off = static_cast<size_t>(start) * m;
      for (size_t i = 0; i < rn->grad.size(); ++i) gx[off + i] += rn->grad[i];
    };
  return r;
}

Tensor slice_cols(const Tensor& x, int start, int len) {
  check_rank2("slice_cols", x);
  const int n = x.dim(0), m = x.dim(1);
  if (start < 0 || len < 0 || start + len > m)
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of " + shape_str(x.shape()));
  std::vector<double> out(static_cast<size_t>(n) * len);
  const auto& xv = x.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j)
      out[static_cast<size_t>(i) * len + j] = xv[static_cast<size_t>(i) * m + start + j];
  TensorNode* xn = x.node().get();
  Tensor r = make_result({n, len}, std::move(out), {x}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, rn, n, m, start, len] {
      auto& gx = xn->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < len; ++j)
          gx[static_cast<size_t>(i) * m + start + j] += rn->grad[static_cast<size_t>(i) * len + j];
    };
  return r;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  TensorNode* xn = x.node().get();
  Tensor r = make_result({1}, {s}, {x}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, rn] {
      auto& gx = xn->ensure_grad();
      const double g = rn->grad[0];
      for (double& v : gx) v += g;
    };
  return r;
}

Tensor mean_pool(const Tensor& x, int axis) {
  check_rank2("mean_pool", x);
  if (axis != 0 && axis != 1) throw std::invalid_argument("mean_pool: axis must be 0 or 1");
  const int n = x.dim(0), m = x.dim(1);
  const auto& xv = x.data();
  std::vector<double> out;
  if (axis == 0) {
    out.assign(static_cast<size_t>(m), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) out[static_cast<size_t>(j)] += xv[static_cast<size_t>(i) * m + j];
    for (double& v : out) v /= n;
  } else {
    out.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < m; ++j) s += xv[static_cast<size_t>(i) * m + j];
      out[static_cast<size_t>(i)] = s / m;
    }
  }
  TensorNode* xn = x.node().get();
  Tensor r = make_result({axis == 0 ? m : n}, std::move(out), {x}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, rn, n, m, axis] {
      auto& gx = xn->ensure_grad();
      if (axis == 0) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) gx[static_cast<size_t>(i) * m + j] += rn->grad[static_cast<size_t>(j)] / n;
      } else {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) gx[static_cast<size_t>(i) * m + j] += rn->grad[static_cast<size_t>(i)] / m;
      }
    };
  return r;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2("matmul", a);
  check_rank2("matmul", b);
  if (a.dim(1) != b.dim(0)) op_shape_error("matmul", a.shape(), b.shape());
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i) {
    double* orow = out.data() + static_cast<size_t>(i) * m;
    const double* arow = av.data() + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double aik = arow[p];
      const double* brow = bv.data() + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  Tensor r = make_result({n, m}, std::move(out), {a, b}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [an, bn, rn, n, k, m] {
      const auto& g = rn->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        // dA = g * B^T
        for (int i = 0; i < n; ++i)
          for (int p = 0; p < k; ++p) {
            double s = 0.0;
            const double* grow = g.data() + static_cast<size_t>(i) * m;
            const double* brow = bn->value.data() + static_cast<size_t>(p) * m;
            for (int j = 0; j < m; ++j) s += grow[j] * brow[j];
            ga[static_cast<size_t>(i) * k + p] += s;
          }
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        // dB = A^T * g
        for (int i = 0; i < n; ++i) {
          const double* arow = an->value.data() + static_cast<size_t>(i) * k;
          const double* grow = rn->grad.data() + static_cast<size_t>(i) * m;
          for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            double* gbrow = gb.data() + static_cast<size_t>(p) * m;
            for (int j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
          }
        }
      }
    };
  return r;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_rank2("linear", x);
  check_rank2("linear", w);
  if (x.dim(1) != w.dim(0)) op_shape_error("linear", x.shape(), w.shape());
  if (b.rank() != 1 || b.dim(0) != w.dim(1)) op_shape_error("linear bias", w.shape(), b.shape());
  const int n = x.dim(0), k = x.dim(1), m = w.dim(1);
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i) {
    double* orow = out.data() + static_cast<size_t>(i) * m;
    const double* xrow = xv.data() + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double xik = xrow[p];
      const double* wrow = wv.data() + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) orow[j] += xik * wrow[j];
    }
    for (int j = 0; j < m; ++j) orow[j] += bv[static_cast<size_t>(j)];
  }
  TensorNode* xn = x.node().get();
  TensorNode* wn = w.node().get();
  TensorNode* bn = b.node().get();
  Tensor r = make_result({n, m}, std::move(out), {x, w, b}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, wn, bn, rn, n, k, m] {
      const auto& g = rn->grad;
      if (xn->requires_grad) {
        auto& gx = xn->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int p = 0; p < k; ++p) {
            double s = 0.0;
            const double* grow = g.data() + static_cast<size_t>(i) * m;
            const double* wrow = wn->value.data() + static_cast<size_t>(p) * m;
            for (int j = 0; j < m; ++j) s += grow[j] * wrow[j];
            gx[static_cast<size_t>(i) * k + p] += s;
          }
      }
      if (wn->requires_grad) {
        auto& gw = wn->ensure_grad();
        for (int i = 0; i < n; ++i) {
          const double* xrow = xn->value.data() + static_cast<size_t>(i) * k;
          const double* grow = g.data() + static_cast<size_t>(i) * m;
          for (int p = 0; p < k; ++p) {
            const double xip = xrow[p];
            double* gwrow = gw.data() + static_cast<size_t>(p) * m;
            for (int j = 0; j < m; ++j) gwrow[j] += xip * grow[j];
          }
        }
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (int i = 0; i < n; ++i) {
          const double* grow = g.data() + static_cast<size_t>(i) * m;
          for (int j = 0; j < m; ++j) gb[static_cast<size_t>(j)] += grow[j];
        }
      }
    };
  return r;
}

Tensor embedding(const std::vector<int>& ids, const Tensor& table) {
  check_rank2("embedding", table);
  const int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::invalid_argument("embedding: id " + std::to_string(id) + " out of table " +
                                  shape_str(table.shape()));
  const int n = static_cast<int>(ids.size());
  std::vector<double> out(static_cast<size_t>(n) * d);
  const auto& tv = table.data();
  for (int i = 0; i < n; ++i)
    std::copy_n(tv.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d, d,
                out.data() + static_cast<size_t>(i) * d);
  TensorNode* tn = table.node().get();
  Tensor r = make_result({n, d}, std::move(out), {table}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad()) {
    std::vector<int> ids_copy = ids;
    rn->backward_fn = [tn, rn, ids_copy, d] {
      auto& gt = tn->ensure_grad();
      for (size_t i = 0; i < ids_copy.size(); ++i) {
        const double* grow = rn->grad.data() + i * static_cast<size_t>(d);
        double* trow = gt.data() + static_cast<size_t>(ids_copy[i]) * d;
        for (int j = 0; j < d; ++j) trow[j] += grow[j];
      }
    };
  }
  return r;
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b, int stride, int padding) {
  if (x.rank() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W], got " + shape_str(x.shape()));
  if (k.rank() != 4) throw std::invalid_argument("conv2d: kernel must be [Cout,Cin,kh,kw], got " + shape_str(k.shape()));
  if (x.dim(0) != k.dim(1)) op_shape_error("conv2d", x.shape(), k.shape());
  if (b.rank() != 1 || b.dim(0) != k.dim(0)) op_shape_error("conv2d bias", k.shape(), b.shape());
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;
  if (oh < 1 || ow < 1) op_shape_error("conv2d output", x.shape(), k.shape());

  const auto& xv = x.data();
  const auto& kv = k.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<size_t>(cout) * oh * ow, 0.0);
  auto xat = [&](int c, int y, int z) { return xv[(static_cast<size_t>(c) * h + y) * w + z]; };
  auto kat = [&](int co, int ci, int y, int z) {
    return kv[((static_cast<size_t>(co) * cin + ci) * kh + y) * kw + z];
  };
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= w) continue;
              s += xat(ci, iy, ix) * kat(co, ci, ky, kx);
            }
          }
        out[(static_cast<size_t>(co) * oh + oy) * ow + ox] = s + bv[static_cast<size_t>(co)];
      }

  TensorNode* xn = x.node().get();
  TensorNode* kn = k.node().get();
  TensorNode* bn = b.node().get();
  Tensor r = make_result({cout, oh, ow}, std::move(out), {x, k, b}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, kn, bn, rn, cin, h, w, cout, kh, kw, oh, ow, stride, padding] {
      const auto& g = rn->grad;
      auto gat = [&](int co, int y, int z) { return g[(static_cast<size_t>(co) * oh + y) * ow + z]; };
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (int co = 0; co < cout; ++co) {
          double s = 0.0;
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) s += gat(co, oy, ox);
          gb[static_cast<size_t>(co)] += s;
        }
      }
      const bool need_x = xn->requires_grad;
      const bool need_k = kn->requires_grad;
      if (!need_x && !need_k) return;
      if (need_x) xn->ensure_grad();
      if (need_k) kn->ensure_grad();
      for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const double go = gat(co, oy, ox);
            if (go == 0.0) continue;
            for (int ci = 0; ci < cin; ++ci)
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ix = ox * stride - padding + kx;
                  if (ix < 0 || ix >= w) continue;
                  const size_t xi = (static_cast<size_t>(ci) * h + iy) * w + ix;
                  const size_t ki = ((static_cast<size_t>(co) * cin + ci) * kh + ky) * kw + kx;
                  if (need_x) xn->grad[xi] += go * kn->value[ki];
                  if (need_k) kn->grad[ki] += go * xn->value[xi];
                }
              }
          }
    };
  return r;
}

Tensor pointwise_mul(const Tensor& x, const Tensor& m) {
  if (x.shape() == m.shape()) return mul(x, m);
  if (x.rank() != 3 || m.rank() != 3 || m.dim(0) != 1 || m.dim(1) != x.dim(1) || m.dim(2) != x.dim(2))
    op_shape_error("pointwise_mul", x.shape(), m.shape());
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const size_t plane = static_cast<size_t>(h) * w;
  std::vector<double> out(x.data());
  const auto& mv = m.data();
  for (int ci = 0; ci < c; ++ci)
    for (size_t i = 0; i < plane; ++i) out[static_cast<size_t>(ci) * plane + i] *= mv[i];
  TensorNode* xn = x.node().get();
  TensorNode* mn = m.node().get();
  Tensor r = make_result(x.shape(), std::move(out), {x, m}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, mn, rn, c, plane] {
      const auto& g = rn->grad;
      if (xn->requires_grad) {
        auto& gx = xn->ensure_grad();
        for (int ci = 0; ci < c; ++ci)
          for (size_t i = 0; i < plane; ++i)
            gx[static_cast<size_t>(ci) * plane + i] += g[static_cast<size_t>(ci) * plane + i] * mn->value[i];
      }
      if (mn->requires_grad) {
        auto& gm = mn->ensure_grad();
        for (int ci = 0; ci < c; ++ci)
          for (size_t i = 0; i < plane; ++i)
            gm[i] += g[static_cast<size_t>(ci) * plane + i] * xn->value[static_cast<size_t>(ci) * plane + i];
      }
    };
  return r;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_rank2("layer_norm", x);
  const int n = x.dim(0), d = x.dim(1);
  if (gamma.rank() != 1 || gamma.dim(0) != d) op_shape_error("layer_norm gamma", x.shape(), gamma.shape());
  if (beta.rank() != 1 || beta.dim(0) != d) op_shape_error("layer_norm beta", x.shape(), beta.shape());
  const auto& xv = x.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  std::vector<double> out(static_cast<size_t>(n) * d);
  std::vector<double> xhat(static_cast<size_t>(n) * d);
  std::vector<double> inv_std(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double* row = xv.data() + static_cast<size_t>(i) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = is;
    for (int j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * is;
      xhat[static_cast<size_t>(i) * d + j] = h;
      out[static_cast<size_t>(i) * d + j] = h * gv[static_cast<size_t>(j)] + bv[static_cast<size_t>(j)];
    }
  }
  TensorNode* xn = x.node().get();
  TensorNode* gn = gamma.node().get();
  TensorNode* btn = beta.node().get();
  Tensor r = make_result({n, d}, std::move(out), {x, gamma, beta}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, gn, btn, rn, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      const auto& g = rn->grad;
      if (gn->requires_grad) {
        auto& gg = gn->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j)
            gg[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * d + j] * xhat[static_cast<size_t>(i) * d + j];
      }
      if (btn->requires_grad) {
        auto& gb = btn->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * d + j];
      }
      if (xn->requires_grad) {
        auto& gx = xn->ensure_grad();
        for (int i = 0; i < n; ++i) {
          const double* grow = g.data() + static_cast<size_t>(i) * d;
          const double* hrow = xhat.data() + static_cast<size_t>(i) * d;
          double sum_gy = 0.0, sum_gyh = 0.0;
          for (int j = 0; j < d; ++j) {
            const double gy = grow[j] * gn->value[static_cast<size_t>(j)];
            sum_gy += gy;
            sum_gyh += gy * hrow[j];
          }
          const double is = inv_std[static_cast<size_t>(i)];
          for (int j = 0; j < d; ++j) {
            const double gy = grow[j] * gn->value[static_cast<size_t>(j)];
            gx[static_cast<size_t>(i) * d + j] += (gy - sum_gy / d - hrow[j] * sum_gyh / d) * is;
          }
        }
      }
    };
  return r;
}

Tensor softmax(const Tensor& x, int axis) {
  check_rank2("softmax", x);
  if (axis != 0 && axis != 1) throw std::invalid_argument("softmax: axis must be 0 or 1");
  Tensor in = axis == 1 ? x : transpose(x);
  const int n = in.dim(0), d = in.dim(1);
  const auto& xv = in.data();
  std::vector<double> out(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    const double* row = xv.data() + static_cast<size_t>(i) * d;
    double mx = row[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < d; ++j) {
      const double e = std::exp(row[j] - mx);
      out[static_cast<size_t>(i) * d + j] = e;
      z += e;
    }
    for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] /= z;
  }
  TensorNode* xn = in.node().get();
  Tensor r = make_result({n, d}, std::move(out), {in}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad())
    rn->backward_fn = [xn, rn, n, d] {
      auto& gx = xn->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double* y = rn->value.data() + static_cast<size_t>(i) * d;
        const double* g = rn->grad.data() + static_cast<size_t>(i) * d;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += g[j] * y[j];
        for (int j = 0; j < d; ++j) gx[static_cast<size_t>(i) * d + j] += y[j] * (g[j] - dot);
      }
    };
  return axis == 1 ? r : transpose(r);
}

namespace {
// stable log-sum-exp of one row
double row_lse(const double* row, int d) {
  double mx = row[0];
  for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
  double z = 0.0;
  for (int j = 0; j < d; ++j) z += std::exp(row[j] - mx);
  return mx + std::log(z);
}
}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_id) {
  check_rank2("cross_entropy", logits);
  const int n = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                                std::to_string(n) + " logit rows");
  const auto& lv = logits.data();
  double total = 0.0;
  int counted = 0;
  for (int i = 0; i < n; ++i) {
    const int t = targets[static_cast<size_t>(i)];
    if (t == ignore_id) continue;
    if (t < 0 || t >= v)
      throw std::invalid_argument("cross_entropy: target " + std::to_string(t) + " out of vocab " +
                                  std::to_string(v));
    const double* row = lv.data() + static_cast<size_t>(i) * v;
    total += row_lse(row, v) - row[t];
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("cross_entropy: no non-ignored targets");
  TensorNode* ln = logits.node().get();
  Tensor r = make_result({1}, {total / counted}, {logits}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad()) {
    std::vector<int> tg = targets;
    rn->backward_fn = [ln, rn, tg, n, v, counted, ignore_id] {
      auto& gl = ln->ensure_grad();
      const double g = rn->grad[0] / counted;
      for (int i = 0; i < n; ++i) {
        const int t = tg[static_cast<size_t>(i)];
        if (t == ignore_id) continue;
        const double* row = ln->value.data() + static_cast<size_t>(i) * v;
        const double lse = row_lse(row, v);
        double* grow = gl.data() + static_cast<size_t>(i) * v;
        for (int j = 0; j < v; ++j) grow[j] += g * std::exp(row[j] - lse);
        grow[t] -= g;
      }
    };
  }
  return r;
}

Tensor sequence_log_prob(const Tensor& logits, const std::vector<int>& targets) {
  check_rank2("sequence_log_prob", logits);
  const int n = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("sequence_log_prob: " + std::to_string(targets.size()) + " targets for " +
                                std::to_string(n) + " logit rows");
  const auto& lv = logits.data();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= v)
      throw std::invalid_argument("sequence_log_prob: target " + std::to_string(t) + " out of vocab " +
                                  std::to_string(v));
    const double* row = lv.data() + static_cast<size_t>(i) * v;
    total += row[t] - row_lse(row, v);
  }
  TensorNode* ln = logits.node().get();
  Tensor r = make_result({1}, {total}, {logits}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad()) {
    std::vector<int> tg = targets;
    rn->backward_fn = [ln, rn, tg, n, v] {
      auto& gl = ln->ensure_grad();
      const double g = rn->grad[0];
      for (int i = 0; i < n; ++i) {
        const double* row = ln->value.data() + static_cast<size_t>(i) * v;
        const double lse = row_lse(row, v);
        double* grow = gl.data() + static_cast<size_t>(i) * v;
        for (int j = 0; j < v; ++j) grow[j] -= g * std::exp(row[j] - lse);
        grow[tg[static_cast<size_t>(i)]] += g;
      }
    };
  }
  return r;
}

Tensor cosine_loss(const Tensor& a, const Tensor& b, double norm_eps) {
  if (a.rank() != 1 || b.rank() != 1 || a.dim(0) != b.dim(0)) op_shape_error("cosine_loss", a.shape(), b.shape());
  const int d = a.dim(0);
  const auto& av = a.data();
  const auto& bv = b.data();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (int i = 0; i < d; ++i) {
    dot += av[static_cast<size_t>(i)] * bv[static_cast<size_t>(i)];
    na2 += av[static_cast<size_t>(i)] * av[static_cast<size_t>(i)];
    nb2 += bv[static_cast<size_t>(i)] * bv[static_cast<size_t>(i)];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const bool degenerate = na < norm_eps || nb < norm_eps;
  double cosv = 0.0;
  bool clamped = false;
  if (!degenerate) {
    cosv = dot / (na * nb);
    if (cosv > 1.0) { cosv = 1.0; clamped = true; }
    if (cosv < -1.0) { cosv = -1.0; clamped = true; }
  }
  const double loss = degenerate ? 1.0 : 1.0 - cosv;
  TensorNode* an = a.node().get();
  TensorNode* bn = b.node().get();
  Tensor r = make_result({1}, {loss}, {a, b}, nullptr);
  TensorNode* rn = r.node().get();
  if (r.requires_grad() && !degenerate && !clamped)
    rn->backward_fn = [an, bn, rn, d, dot, na, nb] {
      const double g = rn->grad[0];
      // d(1-cos)/da = -(b/(na*nb) - a*dot/(na^3*nb))
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (int i = 0; i < d; ++i)
          ga[static_cast<size_t>(i)] -=
              g * (bn->value[static_cast<size_t>(i)] / (na * nb) -
                   an->value[static_cast<size_t>(i)] * dot / (na * na * na * nb));
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (int i = 0; i < d; ++i)
          gb[static_cast<size_t>(i)] -=
              g * (an->value[static_cast<size_t>(i)] / (na * nb) -
                   bn->value[static_cast<size_t>(i)] * dot / (nb * nb * nb * na));
      }
    };
  return r;
}

double sinusoid_position_value(int t, int j, int dim) {
  const int pair = j / 2;
  const double freq = std::pow(10000.0, -2.0 * pair / dim);
  return (j % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
}

Tensor sinusoidal_positions(int n, int dim) {
  std::vector<double> out(static_cast<size_t>(n) * dim);
  for (int t = 0; t < n; ++t)
    for (int j = 0; j < dim; ++j)
      out[static_cast<size_t>(t) * dim + j] = sinusoid_position_value(t, j, dim);
  return Tensor::from({n, dim}, std::move(out));
}

}  // namespace comg
