#include "lframes/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lframes::nn {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::push(Matrix value, std::vector<int> parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (int p : parents) node.needs_grad = node.needs_grad || nodes_[p].needs_grad;
  if (node.needs_grad) {
    node.parents = std::move(parents);
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, {}, nullptr);
  nodes_[v.id()].param = &p;
  nodes_[v.id()].needs_grad = true;
  return v;
}

Var Tape::input(Matrix value) {
  Var v = push(std::move(value), {}, nullptr);
  nodes_[v.id()].needs_grad = true;
  return v;
}

Matrix& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  if (!nodes_[id].needs_grad) return;
  grad_buffer(id) += g;
}

const Matrix& Tape::grad(Var v) const {
  static const Matrix empty;
  const Node& n = nodes_[v.id()];
  return n.grad_ready ? n.grad : empty;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: variable from another tape");
  const Node& l = nodes_[loss.id()];
  if (l.value.rows() != 1 || l.value.cols() != 1)
    throw std::invalid_argument("backward: loss must be a 1 x 1 scalar");
  for (auto& n : nodes_) n.grad_ready = false;
  if (!l.needs_grad) return;
  grad_buffer(loss.id()).setOnes();
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.grad_ready) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) n.param->grad += n.grad;
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty Var");
  return *a.tape();
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return tape_of(a).push(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate(ib, t.grad_of(self));
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return tape_of(a).push(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate_expr(ib, -t.grad_of(self));
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  return tape_of(a).push(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate_expr(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate_expr(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return tape_of(a).push(std::move(out), {ia, ir}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate(ia, g);
    t.accumulate_expr(ir, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("mul_row: shape mismatch");
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value();
  out.array().rowwise() *= row.value().row(0).array();
  return tape_of(a).push(std::move(out), {ia, ir}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.needs_grad(ia)) {
      Matrix ga = g;
      ga.array().rowwise() *= t.value(ir).row(0).array();
      t.accumulate(ia, ga);
    }
    t.accumulate_expr(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
  });
}

Var mul_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("mul_col: shape mismatch");
  const int ia = a.id(), ic = col.id();
  Matrix out = a.value();
  out.array().colwise() *= col.value().col(0).array();
  return tape_of(a).push(std::move(out), {ia, ic}, [ia, ic](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.needs_grad(ia)) {
      Matrix ga = g;
      ga.array().colwise() *= t.value(ic).col(0).array();
      t.accumulate(ia, ga);
    }
    t.accumulate_expr(ic, g.cwiseProduct(t.value(ia)).rowwise().sum());
  });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return tape_of(a).push(a.value() * s, {ia},
                         [ia, s](Tape& t, int self) { t.accumulate_expr(ia, t.grad_of(self) * s); });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id();
  return tape_of(a).push((a.value().array() + s).matrix(), {ia},
                         [ia](Tape& t, int self) { t.accumulate(ia, t.grad_of(self)); });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return tape_of(a).push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_buffer(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.grad_buffer(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var silu(Var a) {
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    Matrix d = x.unaryExpr([](double v) {
      const double s = 1.0 / (1.0 + std::exp(-v));
      return s * (1.0 + v * (1.0 - s));
    });
    t.accumulate_expr(ia, t.grad_of(self).cwiseProduct(d));
  });
}

Var exp(Var a) {
  const int ia = a.id();
  Matrix out = a.value().array().exp().matrix();
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, int self) {
    t.accumulate_expr(ia, t.grad_of(self).cwiseProduct(t.value(self)));
  });
}

Var sqrt(Var a) {
  const int ia = a.id();
  Matrix out = a.value().array().sqrt().matrix();
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    Matrix d = y.unaryExpr([](double v) { return v > 0 ? 0.5 / v : 0.0; });
    t.accumulate_expr(ia, t.grad_of(self).cwiseProduct(d));
  });
}

Var reciprocal(Var a) {
  const int ia = a.id();
  Matrix out = a.value().cwiseInverse();
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.accumulate_expr(ia, -t.grad_of(self).cwiseProduct(y.cwiseProduct(y)));
  });
}

Var abs(Var a) {
  const int ia = a.id();
  Matrix out = a.value().cwiseAbs();
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, int self) {
    Matrix s = t.value(ia).unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
    t.accumulate_expr(ia, t.grad_of(self).cwiseProduct(s));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index n = parts.front().rows();
  Eigen::Index width = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw std::invalid_argument("concat_cols: row count mismatch");
    width += p.cols();
  }
  Matrix out(n, width);
  std::vector<int> ids;
  std::vector<Eigen::Index> starts;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    ids.push_back(p.id());
    starts.push_back(c);
    c += p.cols();
  }
  std::vector<int> parents = ids;
  return tape_of(parts.front())
      .push(std::move(out), std::move(parents), [ids, starts](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.needs_grad(ids[k])) continue;
          const auto w = t.value(ids[k]).cols();
          t.grad_buffer(ids[k]) += g.middleCols(starts[k], w);
        }
      });
}

Var slice_cols(Var a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  const int ia = a.id();
  Matrix out = a.value().middleCols(start, count);
  return tape_of(a).push(std::move(out), {ia}, [ia, start, count](Tape& t, int self) {
    t.grad_buffer(ia).middleCols(start, count) += t.grad_of(self);
  });
}

Var gather_rows(Var a, const std::vector<int>& rows) {
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= x.rows()) throw std::invalid_argument("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
  }
  return tape_of(a).push(std::move(out), {ia}, [ia, rows](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows.size(); ++r) ga.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
  });
}

namespace {

void check_offsets(const Var& a, const std::vector<int>& offsets, const char* op) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != a.rows())
    throw std::invalid_argument(std::string(op) + ": offsets do not cover the input rows");
}

}  // namespace

Var segment_sum(Var a, const std::vector<int>& offsets) {
  check_offsets(a, offsets, "segment_sum");
  const int ia = a.id();
  const auto segs = static_cast<Eigen::Index>(offsets.size() - 1);
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(segs, x.cols());
  for (Eigen::Index s = 0; s < segs; ++s)
    for (int e = offsets[s]; e < offsets[s + 1]; ++e) out.row(s) += x.row(e);
  return tape_of(a).push(std::move(out), {ia}, [ia, offsets](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
      for (int e = offsets[s]; e < offsets[s + 1]; ++e) ga.row(e) += g.row(static_cast<Eigen::Index>(s));
  });
}

Var segment_mean(Var a, const std::vector<int>& offsets) {
  check_offsets(a, offsets, "segment_mean");
  const int ia = a.id();
  const auto segs = static_cast<Eigen::Index>(offsets.size() - 1);
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(segs, x.cols());
  for (Eigen::Index s = 0; s < segs; ++s) {
    const int cnt = offsets[s + 1] - offsets[s];
    for (int e = offsets[s]; e < offsets[s + 1]; ++e) out.row(s) += x.row(e);
    if (cnt > 0) out.row(s) /= cnt;
  }
  return tape_of(a).push(std::move(out), {ia}, [ia, offsets](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const int cnt = offsets[s + 1] - offsets[s];
      for (int e = offsets[s]; e < offsets[s + 1]; ++e)
        ga.row(e) += g.row(static_cast<Eigen::Index>(s)) / cnt;
    }
  });
}

Var segment_max(Var a, const std::vector<int>& offsets) {
  check_offsets(a, offsets, "segment_max");
  const int ia = a.id();
  const auto segs = static_cast<Eigen::Index>(offsets.size() - 1);
  const Matrix& x = a.value();
  const Eigen::Index c = x.cols();
  Matrix out = Matrix::Zero(segs, c);
  std::vector<int> arg(static_cast<std::size_t>(segs * c), -1);
  for (Eigen::Index s = 0; s < segs; ++s) {
    if (offsets[s] == offsets[s + 1]) continue;
    for (Eigen::Index k = 0; k < c; ++k) {
      int best = offsets[s];
      double bv = x(best, k);
      for (int e = offsets[s] + 1; e < offsets[s + 1]; ++e)
        if (x(e, k) > bv) {
          bv = x(e, k);
          best = e;
        }
      out(s, k) = bv;
      arg[static_cast<std::size_t>(s * c + k)] = best;
    }
  }
  return tape_of(a).push(std::move(out), {ia}, [ia, arg, c](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      if (arg[i] < 0) continue;
      const auto s = static_cast<Eigen::Index>(i) / c;
      const auto k = static_cast<Eigen::Index>(i) % c;
      ga(arg[i], k) += g(s, k);
    }
  });
}

Var sum(Var a) {
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, int self) {
    t.grad_buffer(ia).array() += t.grad_of(self)(0, 0);
  });
}

Var mean(Var a) {
  const int ia = a.id();
  const auto n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return tape_of(a).push(std::move(out), {ia}, [ia, n](Tape& t, int self) {
    t.grad_buffer(ia).array() += t.grad_of(self)(0, 0) / n;
  });
}

Var row_sum(Var a) {
  const int ia = a.id();
  Matrix out = a.value().rowwise().sum();
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, int self) {
    Matrix& ga = t.grad_buffer(ia);
    ga.colwise() += t.grad_of(self).col(0);
  });
}

Var row_dot(Var a, Var b) { return row_sum(mul(a, b)); }

Var row_norm(Var a) {
  const int ia = a.id();
  Matrix out = a.value().rowwise().norm();
  return tape_of(a).push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& y = t.value(self);
    const Matrix& x = t.value(ia);
    Matrix& ga = t.grad_buffer(ia);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      if (y(r, 0) > 0) ga.row(r) += (g(r, 0) / y(r, 0)) * x.row(r);
  });
}

Var cross_rows(Var a, Var b) {
  if (a.cols() != 3 || b.cols() != 3 || a.rows() != b.rows())
    throw std::invalid_argument("cross_rows: need matching N x 3 inputs");
  const int ia = a.id(), ib = b.id();
  auto cross = [](const Matrix& u, const Matrix& v) {
    Matrix c(u.rows(), 3);
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      c(r, 0) = u(r, 1) * v(r, 2) - u(r, 2) * v(r, 1);
      c(r, 1) = u(r, 2) * v(r, 0) - u(r, 0) * v(r, 2);
      c(r, 2) = u(r, 0) * v(r, 1) - u(r, 1) * v(r, 0);
    }
    return c;
  };
  return tape_of(a).push(cross(a.value(), b.value()), {ia, ib}, [ia, ib, cross](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    // d/da <g, a x b> = b x g ; d/db = g x a
    if (t.needs_grad(ia)) t.accumulate(ia, cross(t.value(ib), g));
    if (t.needs_grad(ib)) t.accumulate(ib, cross(g, t.value(ia)));
  });
}

Var replace_rows(Var a, const std::vector<char>& mask, const Matrix& replacement) {
  if (static_cast<Eigen::Index>(mask.size()) != a.rows() || replacement.rows() != a.rows() ||
      replacement.cols() != a.cols())
    throw std::invalid_argument("replace_rows: shape mismatch");
  const int ia = a.id();
  Matrix out = a.value();
  for (std::size_t r = 0; r < mask.size(); ++r)
    if (mask[r]) out.row(static_cast<Eigen::Index>(r)) = replacement.row(static_cast<Eigen::Index>(r));
  return tape_of(a).push(std::move(out), {ia}, [ia, mask](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < mask.size(); ++r)
      if (!mask[r]) ga.row(static_cast<Eigen::Index>(r)) += g.row(static_cast<Eigen::Index>(r));
  });
}

Var apply_rep(const RepSpec& spec, Var frames, Var x, bool transpose) {
  const int d = spec.dim();
  if (frames.cols() != d * d) throw std::invalid_argument("apply_rep: frame rows must hold d*d entries");
  if (x.cols() != spec.width())
    throw std::invalid_argument("apply_rep: feature width " + std::to_string(x.cols()) +
                                " does not match representation width " + std::to_string(spec.width()));
  if (frames.rows() != x.rows()) throw std::invalid_argument("apply_rep: row count mismatch");
  const int iframes = frames.id(), ix = x.id();
  const Matrix& fr = frames.value();
  const Matrix& xv = x.value();
  const auto w = static_cast<std::size_t>(spec.width());
  const auto dd = static_cast<std::size_t>(d * d);
  Matrix out(xv.rows(), xv.cols());
  std::vector<double> scratch(kernels::scratch_size(spec));
  std::vector<double> m(dd);
  auto load = [d](const Matrix& src, Eigen::Index n, bool tr, std::vector<double>& dst) {
    for (int p = 0; p < d; ++p)
      for (int q = 0; q < d; ++q) dst[p * d + q] = tr ? src(n, q * d + p) : src(n, p * d + q);
  };
  for (Eigen::Index n = 0; n < xv.rows(); ++n) {
    load(fr, n, transpose, m);
    const double det = kernels::det_small(m.data(), d) < 0 ? -1.0 : 1.0;
    kernels::apply_rep_row(spec, m.data(), det, {xv.row(n).data(), w}, {out.row(n).data(), w}, scratch);
  }
  return tape_of(x).push(
      std::move(out), {iframes, ix}, [spec, iframes, ix, transpose, d, w, dd, load](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        const Matrix& fr = t.value(iframes);
        const Matrix& xv = t.value(ix);
        std::vector<double> scratch(kernels::scratch_size(spec));
        std::vector<double> m(dd), mt(dd), gm(dd);
        const bool gx = t.needs_grad(ix), gf = t.needs_grad(iframes);
        for (Eigen::Index n = 0; n < xv.rows(); ++n) {
          load(fr, n, transpose, m);
          const double det = kernels::det_small(m.data(), d) < 0 ? -1.0 : 1.0;
          if (gx) {
            for (int p = 0; p < d; ++p)
              for (int q = 0; q < d; ++q) mt[p * d + q] = m[q * d + p];
            Matrix& buf = t.grad_buffer(ix);
            std::vector<double> tmp(w);
            kernels::apply_rep_row(spec, mt.data(), det, {g.row(n).data(), w}, tmp, scratch);
            for (std::size_t k = 0; k < w; ++k) buf(n, static_cast<Eigen::Index>(k)) += tmp[k];
          }
          if (gf) {
            std::fill(gm.begin(), gm.end(), 0.0);
            kernels::apply_rep_row_grad_matrix(spec, m.data(), det, {xv.row(n).data(), w},
                                               {g.row(n).data(), w}, gm.data(), scratch);
            Matrix& buf = t.grad_buffer(iframes);
            for (int p = 0; p < d; ++p)
              for (int q = 0; q < d; ++q)
                buf(n, transpose ? q * d + p : p * d + q) += gm[p * d + q];
          }
        }
      });
}

Var compose_frames(Var a, Var b, bool transpose_b, int dim) {
  const int d = dim;
  if (a.cols() != d * d || b.cols() != d * d || a.rows() != b.rows())
    throw std::invalid_argument("compose_frames: shape mismatch");
  const int ia = a.id(), ib = b.id();
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  using MapM = Eigen::Map<Mat>;
  Matrix out(a.rows(), d * d);
  for (Eigen::Index n = 0; n < a.rows(); ++n) {
    CMap am(a.value().row(n).data(), d, d), bm(b.value().row(n).data(), d, d);
    MapM om(out.row(n).data(), d, d);
    if (transpose_b)
      om.noalias() = am * bm.transpose();
    else
      om.noalias() = am * bm;
  }
  return tape_of(a).push(std::move(out), {ia, ib}, [ia, ib, transpose_b, d](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& av = t.value(ia);
    const Matrix& bv = t.value(ib);
    const bool ga = t.needs_grad(ia), gb = t.needs_grad(ib);
    for (Eigen::Index n = 0; n < g.rows(); ++n) {
      CMap gm(g.row(n).data(), d, d), am(av.row(n).data(), d, d), bm(bv.row(n).data(), d, d);
      if (ga) {
        MapM dst(t.grad_buffer(ia).row(n).data(), d, d);
        if (transpose_b)
          dst.noalias() += gm * bm;
        else
          dst.noalias() += gm * bm.transpose();
      }
      if (gb) {
        MapM dst(t.grad_buffer(ib).row(n).data(), d, d);
        if (transpose_b)
          dst.noalias() += gm.transpose() * am;
        else
          dst.noalias() += am.transpose() * gm;
      }
    }
  });
}

Var batch_standardize(Var x, double eps) {
  const int ix = x.id();
  const Matrix& v = x.value();
  const double n = static_cast<double>(v.rows());
  Eigen::RowVectorXd mu = v.colwise().mean();
  Matrix centered = v.rowwise() - mu;
  Eigen::RowVectorXd var = centered.array().square().colwise().sum() / n;
  Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
  Matrix out = centered.array().rowwise() * inv_std.array();
  return tape_of(x).push(std::move(out), {ix}, [ix, inv_std, n](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& y = t.value(self);
    Eigen::RowVectorXd gmean = g.colwise().sum() / n;
    Eigen::RowVectorXd gymean = g.cwiseProduct(y).colwise().sum() / n;
    Matrix dx = g.rowwise() - gmean;
    dx -= (y.array().rowwise() * gymean.array()).matrix();
    dx.array().rowwise() *= inv_std.array();
    t.accumulate(ix, dx);
  });
}

Var log_softmax_rows(Var x) {
  const int ix = x.id();
  const Matrix& v = x.value();
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    const double lse = m + std::log((v.row(r).array() - m).exp().sum());
    out.row(r) = v.row(r).array() - lse;
  }
  return tape_of(x).push(std::move(out), {ix}, [ix](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& y = t.value(self);
    Matrix dx = g;
    for (Eigen::Index r = 0; r < g.rows(); ++r) dx.row(r) -= y.row(r).array().exp().matrix() * g.row(r).sum();
    t.accumulate(ix, dx);
  });
}

}  // namespace lframes::nn
