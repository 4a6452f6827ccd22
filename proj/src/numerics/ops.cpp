#include "daf/numerics/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace daf::num {
namespace {

std::string dims(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
  return a.tape();
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shapes " + dims(a.value()) + " and " + dims(b.value()) +
                         " differ");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  auto& tape = same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions of " + dims(a.value()) + " and " + dims(b.value()) +
                         " disagree");
  }
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return tape.record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g * t.value(ib).transpose());
    t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  auto& tape = same_tape(a, b);
  require_same_shape("add", a, b);
  const int ia = a.id(), ib = b.id();
  return tape.record("add", a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  auto& tape = same_tape(a, b);
  require_same_shape("sub", a, b);
  const int ia = a.id(), ib = b.id();
  return tape.record("sub", a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var hadamard(Var a, Var b) {
  auto& tape = same_tape(a, b);
  require_same_shape("hadamard", a, b);
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return tape.record("hadamard", std::move(out), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double factor) {
  const int ia = a.id();
  return a.tape().record("scale", a.value() * factor, {ia},
                         [ia, factor](Tape& t, const Matrix& g) { t.accumulate(ia, g * factor); });
}

Var add_scalar(Var a, double offset) {
  const int ia = a.id();
  Matrix out = a.value().array() + offset;
  return a.tape().record("add_scalar", std::move(out), {ia},
                         [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var linear(Var weight, Var x, Var bias) {
  auto& tape = same_tape(weight, x);
  same_tape(x, bias);
  if (weight.cols() != x.rows()) {
    throw DimensionError("linear: weight " + dims(weight.value()) + " cannot multiply input " + dims(x.value()));
  }
  if (bias.rows() != weight.rows() || bias.cols() != 1) {
    throw DimensionError("linear: bias " + dims(bias.value()) + " does not match weight " +
                         dims(weight.value()));
  }
  Matrix out(weight.rows(), x.cols());
  out.noalias() = weight.value() * x.value();
  out.colwise() += bias.value().col(0);
  const int iw = weight.id(), ix = x.id(), ib = bias.id();
  return tape.record("linear", std::move(out), {iw, ix, ib}, [iw, ix, ib](Tape& t, const Matrix& g) {
    t.accumulate(iw, g * t.value(ix).transpose());
    t.accumulate(ix, t.value(iw).transpose() * g);
    t.accumulate(ib, g.rowwise().sum());
  });
}

Var relu(Var x) {
  const int ix = x.id();
  Matrix out = x.value().cwiseMax(0.0);
  return x.tape().record("relu", std::move(out), {ix}, [ix](Tape& t, const Matrix& g) {
    t.accumulate(ix, (t.value(ix).array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

static double stable_sigmoid(double v) {
  // Split by sign so exp never overflows.
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

Var sigmoid(Var x) {
  const int ix = x.id();
  Matrix out = x.value().unaryExpr(&stable_sigmoid);
  return x.tape().record("sigmoid", std::move(out), {ix}, [ix](Tape& t, const Matrix& g) {
    const Matrix s = t.value(ix).unaryExpr(&stable_sigmoid);
    t.accumulate(ix, (g.array() * s.array() * (1.0 - s.array())).matrix());
  });
}

Var square(Var x) {
  const int ix = x.id();
  return x.tape().record("square", x.value().array().square().matrix(), {ix},
                         [ix](Tape& t, const Matrix& g) {
                           t.accumulate(ix, (2.0 * g.array() * t.value(ix).array()).matrix());
                         });
}

Var log_clamped(Var x, double lo, double hi) {
  if (!(lo > 0.0) || !(lo < hi)) throw ConfigError("log_clamped: need 0 < lo < hi");
  const int ix = x.id();
  Matrix out = x.value().cwiseMax(lo).cwiseMin(hi).array().log().matrix();
  return x.tape().record("log_clamped", std::move(out), {ix}, [ix, lo, hi](Tape& t, const Matrix& g) {
    const auto& v = t.value(ix).array();
    t.accumulate(ix, ((v >= lo) && (v <= hi)).select(g.array() / v, 0.0).matrix());
  });
}

Var sum(Var x) {
  const int ix = x.id();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape().record("sum", std::move(out), {ix}, [ix](Tape& t, const Matrix& g) {
    const auto& v = t.value(ix);
    t.accumulate(ix, Matrix::Constant(v.rows(), v.cols(), g(0, 0)));
  });
}

Var mean(Var x) {
  if (x.value().size() == 0) throw ContractError("mean of an empty array");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows needs at least one part");
  auto& tape = parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
    ids.push_back(p.id());
  }
  Matrix out(rows, cols);
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return tape.record("concat_rows", std::move(out), ids, [ids](Tape& t, const Matrix& g) {
    Index r = 0;
    for (int id : ids) {
      const Index n = t.value(id).rows();
      t.accumulate(id, g.middleRows(r, n));
      r += n;
    }
  });
}

Var slice_rows(Var x, Index begin, Index count) {
  if (begin < 0 || count <= 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of " + std::to_string(x.rows()) + " rows");
  }
  const int ix = x.id();
  Matrix out = x.value().middleRows(begin, count);
  return x.tape().record("slice_rows", std::move(out), {ix}, [ix, begin, count](Tape& t, const Matrix& g) {
    if (!t.requires_grad(ix)) return;
    t.grad(ix).middleRows(begin, count) += g;
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols needs at least one part");
  auto& tape = parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
    ids.push_back(p.id());
  }
  Matrix out(rows, cols);
  Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return tape.record("concat_cols", std::move(out), ids, [ids](Tape& t, const Matrix& g) {
    Index c = 0;
    for (int id : ids) {
      const Index n = t.value(id).cols();
      t.accumulate(id, g.middleCols(c, n));
      c += n;
    }
  });
}

Var gather_cols(std::span<const Var> sources, std::span<const ColumnRef> refs) {
  if (sources.empty() || refs.empty()) throw ContractError("gather_cols needs sources and columns");
  auto& tape = sources.front().tape();
  const Index rows = sources.front().rows();
  std::vector<int> ids;
  for (const auto& s : sources) {
    same_tape(sources.front(), s);
    if (s.rows() != rows) throw DimensionError("gather_cols: sources have different row counts");
    ids.push_back(s.id());
  }
  std::vector<ColumnRef> map(refs.begin(), refs.end());
  Matrix out(rows, static_cast<Index>(map.size()));
  for (std::size_t j = 0; j < map.size(); ++j) {
    const auto& ref = map[j];
    if (ref.source < 0 || ref.source >= static_cast<int>(sources.size()) || ref.column < 0 ||
        ref.column >= sources[ref.source].cols()) {
      throw DimensionError("gather_cols: column reference out of range");
    }
    out.col(static_cast<Index>(j)) = sources[ref.source].value().col(ref.column);
  }
  return tape.record("gather_cols", std::move(out), ids, [ids, map = std::move(map)](Tape& t, const Matrix& g) {
    for (std::size_t j = 0; j < map.size(); ++j) {
      const int id = ids[map[j].source];
      if (!t.requires_grad(id)) continue;
      t.grad(id).col(map[j].column) += g.col(static_cast<Index>(j));
    }
  });
}

Var conv1d(Var x, Var kernel, Var bias, Index kernel_size, Index segment_length) {
  auto& tape = same_tape(x, kernel);
  same_tape(x, bias);
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("conv1d: kernel size must be odd, got " + std::to_string(kernel_size));
  }
  const Index c_in = x.rows();
  const Index c_out = kernel.rows();
  if (kernel.cols() != c_in * kernel_size) {
    throw DimensionError("conv1d: kernel " + dims(kernel.value()) + " does not match " +
                         std::to_string(c_in) + " input channels with size " + std::to_string(kernel_size));
  }
  if (bias.rows() != c_out || bias.cols() != 1) throw DimensionError("conv1d: bias shape " + dims(bias.value()));
  if (segment_length <= 0 || x.cols() % segment_length != 0) {
    throw DimensionError("conv1d: " + std::to_string(x.cols()) + " columns are not whole segments of " +
                         std::to_string(segment_length));
  }
  const Index pad = (kernel_size - 1) / 2;
  const Index n_cols = x.cols();
  const auto& xv = x.value();

  // im2col: row ci*s + k of column t holds x[ci, t + k - pad] within t's segment.
  auto unfolded = std::make_shared<Matrix>(Matrix::Zero(c_in * kernel_size, n_cols));
  for (Index seg = 0; seg < n_cols; seg += segment_length) {
    for (Index t = 0; t < segment_length; ++t) {
      for (Index k = 0; k < kernel_size; ++k) {
        const Index src = t + k - pad;
        if (src < 0 || src >= segment_length) continue;
        for (Index ci = 0; ci < c_in; ++ci) (*unfolded)(ci * kernel_size + k, seg + t) = xv(ci, seg + src);
      }
    }
  }
  Matrix out(c_out, n_cols);
  out.noalias() = kernel.value() * (*unfolded);
  out.colwise() += bias.value().col(0);

  const int ix = x.id(), ik = kernel.id(), ib = bias.id();
  return tape.record(
      "conv1d", std::move(out), {ix, ik, ib},
      [ix, ik, ib, unfolded, kernel_size, segment_length, pad, c_in](Tape& t, const Matrix& g) {
        t.accumulate(ik, g * unfolded->transpose());
        t.accumulate(ib, g.rowwise().sum());
        if (!t.requires_grad(ix)) return;
        const Matrix d_unfolded = t.value(ik).transpose() * g;
        auto& gx = t.grad(ix);
        for (Index seg = 0; seg < g.cols(); seg += segment_length) {
          for (Index tt = 0; tt < segment_length; ++tt) {
            for (Index k = 0; k < kernel_size; ++k) {
              const Index src = tt + k - pad;
              if (src < 0 || src >= segment_length) continue;
              for (Index ci = 0; ci < c_in; ++ci) gx(ci, seg + src) += d_unfolded(ci * kernel_size + k, seg + tt);
            }
          }
        }
      });
}

Var self_excluding_attention(Var queries, Var keys, Var values, Index segment_length,
                             std::vector<Matrix>* weights) {
  auto& tape = same_tape(queries, keys);
  same_tape(queries, values);
  require_same_shape("self_excluding_attention", queries, keys);
  if (values.cols() != queries.cols()) throw DimensionError("self_excluding_attention: value columns differ");
  if (segment_length < 2) throw ContractError("self_excluding_attention: neighborhood is empty for length < 2");
  if (queries.cols() % segment_length != 0) throw DimensionError("self_excluding_attention: partial segment");

  const Index L = segment_length;
  const Index n_seg = queries.cols() / L;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.rows()));
  const auto& Q = queries.value();
  const auto& K = keys.value();
  const auto& V = values.value();

  auto alphas = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(n_seg));
  Matrix out(values.rows(), queries.cols());
  for (Index s = 0; s < n_seg; ++s) {
    // Row i holds the scores of query i against every key of the segment.
    Matrix A(L, L);
    A.noalias() = Q.middleCols(s * L, L).transpose() * K.middleCols(s * L, L);
    A *= inv_sqrt_d;
    A.diagonal().setConstant(-std::numeric_limits<double>::infinity());
    for (Index i = 0; i < L; ++i) {
      const double m = A.row(i).maxCoeff();
      A.row(i) = (A.row(i).array() - m).exp();
      A.row(i) /= A.row(i).sum();
    }
    out.middleCols(s * L, L).noalias() = V.middleCols(s * L, L) * A.transpose();
    (*alphas)[static_cast<std::size_t>(s)] = std::move(A);
  }
  if (weights != nullptr) *weights = *alphas;

  const int iq = queries.id(), ik = keys.id(), iv = values.id();
  return tape.record(
      "self_excluding_attention", std::move(out), {iq, ik, iv},
      [iq, ik, iv, alphas, L, inv_sqrt_d](Tape& t, const Matrix& g) {
        const auto& Qv = t.value(iq);
        const auto& Kv = t.value(ik);
        const auto& Vv = t.value(iv);
        for (std::size_t s = 0; s < alphas->size(); ++s) {
          const Index c0 = static_cast<Index>(s) * L;
          const Matrix& A = (*alphas)[s];
          const auto G = g.middleCols(c0, L);
          if (t.requires_grad(iv)) t.grad(iv).middleCols(c0, L).noalias() += G * A;
          if (!t.requires_grad(iq) && !t.requires_grad(ik)) continue;
          Matrix dA(L, L);
          dA.noalias() = G.transpose() * Vv.middleCols(c0, L);
          // Softmax backward row by row; the masked diagonal has A == 0 so it drops out.
          const Vector row_dot = A.cwiseProduct(dA).rowwise().sum();
          Matrix dS = A.cwiseProduct(dA.colwise() - row_dot);
          dS *= inv_sqrt_d;
          if (t.requires_grad(iq)) t.grad(iq).middleCols(c0, L).noalias() += Kv.middleCols(c0, L) * dS.transpose();
          if (t.requires_grad(ik)) t.grad(ik).middleCols(c0, L).noalias() += Qv.middleCols(c0, L) * dS;
        }
      });
}

Var segment_attention(Var query, Var keys, Var values, Index n, Matrix* weights) {
  auto& tape = same_tape(query, keys);
  same_tape(query, values);
  if (n < 1) throw ContractError("segment_attention: empty neighborhood");
  const Index B = query.cols();
  if (keys.rows() != query.rows() || keys.cols() != B * n || values.cols() != B * n) {
    throw DimensionError("segment_attention: query " + dims(query.value()) + ", keys " + dims(keys.value()) +
                         ", values " + dims(values.value()) + " with n=" + std::to_string(n));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(query.rows()));
  const auto& q = query.value();
  const auto& K = keys.value();
  const auto& V = values.value();

  auto alpha = std::make_shared<Matrix>(n, B);
  Matrix out(values.rows(), B);
  for (Index b = 0; b < B; ++b) {
    Vector scores = K.middleCols(b * n, n).transpose() * q.col(b);
    alpha->col(b) = softmax(scores * inv_sqrt_d);
    out.col(b).noalias() = V.middleCols(b * n, n) * alpha->col(b);
  }
  if (weights != nullptr) *weights = *alpha;

  const int iq = query.id(), ik = keys.id(), iv = values.id();
  return tape.record("segment_attention", std::move(out), {iq, ik, iv},
                     [iq, ik, iv, alpha, n, inv_sqrt_d](Tape& t, const Matrix& g) {
                       const auto& qv = t.value(iq);
                       const auto& Kv = t.value(ik);
                       const auto& Vv = t.value(iv);
                       for (Index b = 0; b < g.cols(); ++b) {
                         const auto a = alpha->col(b);
                         if (t.requires_grad(iv)) t.grad(iv).middleCols(b * n, n).noalias() += g.col(b) * a.transpose();
                         const Vector da = Vv.middleCols(b * n, n).transpose() * g.col(b);
                         const Vector ds = a.cwiseProduct((da.array() - a.dot(da)).matrix()) * inv_sqrt_d;
                         if (t.requires_grad(iq)) t.grad(iq).col(b).noalias() += Kv.middleCols(b * n, n) * ds;
                         if (t.requires_grad(ik)) t.grad(ik).middleCols(b * n, n).noalias() += qv.col(b) * ds.transpose();
                       }
                     });
}

namespace {

struct ColumnSource {
  std::vector<int> ids;
  std::vector<ColumnRef> refs;
};

ColumnSource check_columns(const char* what, std::span<const Var> sources, std::span<const ColumnRef> refs,
                           Index rows, Index count) {
  if (static_cast<Index>(refs.size()) != count) throw DimensionError(std::string(what) + ": wrong number of columns");
  ColumnSource out;
  for (const auto& s : sources) {
    if (s.rows() != rows) throw DimensionError(std::string(what) + ": sources have different row counts");
    out.ids.push_back(s.id());
  }
  for (const auto& r : refs) {
    if (r.source < 0 || r.source >= static_cast<int>(sources.size()) || r.column < 0 ||
        r.column >= sources[r.source].cols()) {
      throw DimensionError(std::string(what) + ": column reference out of range");
    }
  }
  out.refs.assign(refs.begin(), refs.end());
  return out;
}

}  // namespace

Var gather_attention(Var query, std::span<const Var> key_sources, std::span<const ColumnRef> key_refs,
                     std::span<const Var> value_sources, std::span<const ColumnRef> value_refs, Index n,
                     Matrix* weights) {
  if (n < 1) throw ContractError("gather_attention: empty neighborhood");
  if (key_sources.empty() || value_sources.empty()) throw ContractError("gather_attention: no sources");
  auto& tape = query.tape();
  const Index B = query.cols();
  const Index h = value_sources.front().rows();
  auto keys = check_columns("gather_attention keys", key_sources, key_refs, query.rows(), B * n);
  auto vals = check_columns("gather_attention values", value_sources, value_refs, h, B * n);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(query.rows()));
  const auto& q = query.value();

  auto alpha = std::make_shared<Matrix>(n, B);
  Matrix out = Matrix::Zero(h, B);
  Vector scores(n);
  for (Index b = 0; b < B; ++b) {
    for (Index j = 0; j < n; ++j) {
      const auto& r = keys.refs[static_cast<std::size_t>(b * n + j)];
      scores(j) = key_sources[r.source].value().col(r.column).dot(q.col(b)) * inv_sqrt_d;
    }
    alpha->col(b) = softmax(scores);
    for (Index j = 0; j < n; ++j) {
      const auto& r = vals.refs[static_cast<std::size_t>(b * n + j)];
      out.col(b) += (*alpha)(j, b) * value_sources[r.source].value().col(r.column);
    }
  }
  if (weights != nullptr) *weights = *alpha;

  std::vector<int> parents{query.id()};
  parents.insert(parents.end(), keys.ids.begin(), keys.ids.end());
  parents.insert(parents.end(), vals.ids.begin(), vals.ids.end());
  const int iq = query.id();
  return tape.record(
      "gather_attention", std::move(out), std::move(parents),
      [iq, keys = std::move(keys), vals = std::move(vals), alpha, n, inv_sqrt_d](Tape& t, const Matrix& g) {
        const auto& qv = t.value(iq);
        const Index B = g.cols();
        Vector da(n);
        for (Index b = 0; b < B; ++b) {
          const auto a = alpha->col(b);
          for (Index j = 0; j < n; ++j) {
            const auto& r = vals.refs[static_cast<std::size_t>(b * n + j)];
            const int id = vals.ids[static_cast<std::size_t>(r.source)];
            da(j) = t.value(id).col(r.column).dot(g.col(b));
            if (t.requires_grad(id)) t.grad(id).col(r.column) += a(j) * g.col(b);
          }
          const Vector ds = a.cwiseProduct((da.array() - a.dot(da)).matrix()) * inv_sqrt_d;
          const bool need_q = t.requires_grad(iq);
          for (Index j = 0; j < n; ++j) {
            const auto& r = keys.refs[static_cast<std::size_t>(b * n + j)];
            const int id = keys.ids[static_cast<std::size_t>(r.source)];
            if (need_q) t.grad(iq).col(b) += ds(j) * t.value(id).col(r.column);
            if (t.requires_grad(id)) t.grad(id).col(r.column) += ds(j) * qv.col(b);
          }
        }
      });
}

Var mlp_forward(Var x, std::span<const AffineLayer> layers) {
  if (layers.empty()) throw ConfigError("mlp_forward: at least one layer is required");
  Index width = x.rows();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.cols() != width) {
      throw ConfigError("mlp_forward: layer " + std::to_string(i) + " expects " +
                        std::to_string(layers[i].weight.cols()) + " inputs but receives " + std::to_string(width));
    }
    width = layers[i].weight.rows();
  }
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = linear(layers[i].weight, h, layers[i].bias);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

Vector softmax(const Eigen::Ref<const Vector>& scores) {
  if (scores.size() == 0) throw ContractError("softmax of an empty score vector");
  Vector w = (scores.array() - scores.maxCoeff()).exp();
  return w / w.sum();
}

}  // namespace daf::num
