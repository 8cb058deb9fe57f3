#include "lframes/reps.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

namespace lframes {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng split_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(splitmix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 1)));
}

int tensor_width(int dim, int order) {
  int w = 1;
  for (int i = 0; i < order; ++i) w *= dim;
  return w;
}

RepSpec::RepSpec(std::vector<RepTerm> terms, int dim) : terms_(std::move(terms)), dim_(dim) {
  if (dim < 1) throw std::invalid_argument("RepSpec: dimension must be positive");
  for (const auto& t : terms_) {
    if (t.multiplicity <= 0) throw std::invalid_argument("RepSpec: multiplicity must be positive");
    if (t.order < 0) throw std::invalid_argument("RepSpec: order must be non-negative");
    width_ += t.multiplicity * tensor_width(dim_, t.order);
  }
}

namespace {

std::size_t read_digits(std::string_view text, std::size_t pos) {
  while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
  return pos;
}

}  // namespace

RepSpec RepSpec::parse(std::string_view text, int dim) {
  if (text.empty()) throw RepParseError("empty representation string", 0, 0);
  std::vector<RepTerm> terms;
  std::size_t pos = 0;
  while (true) {
    const std::size_t start = pos;
    std::size_t end = text.find('+', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view token = text.substr(start, end - start);
    auto fail = [&](const std::string& why) -> RepParseError {
      std::ostringstream os;
      os << "malformed representation term '" << token << "' at offset " << start << ": " << why;
      return RepParseError(os.str(), start, token.size());
    };
    if (token.empty()) throw fail("empty term");
    if (token[0] == '-') throw fail("negative multiplicity");
    std::size_t p = read_digits(token, 0);
    if (p == 0) throw fail("expected multiplicity");
    if (p >= token.size() || token[p] != 'x') throw fail("expected 'x' after multiplicity");
    const long mult = std::stol(std::string(token.substr(0, p)));
    const std::size_t ostart = p + 1;
    if (ostart < token.size() && token[ostart] == '-') throw fail("negative order");
    const std::size_t oend = read_digits(token, ostart);
    if (oend == ostart) throw fail("expected order");
    const long order = std::stol(std::string(token.substr(ostart, oend - ostart)));
    if (oend + 1 != token.size()) throw fail("expected single parity letter 'n' or 'p'");
    const char par = token[oend];
    if (par != 'n' && par != 'p') throw fail("parity must be 'n' or 'p'");
    if (mult == 0) throw fail("zero multiplicity");
    if (order > 8) throw fail("order too large");
    terms.push_back({static_cast<int>(mult), static_cast<int>(order),
                     par == 'n' ? Parity::tensor : Parity::pseudotensor});
    if (end == text.size()) break;
    pos = end + 1;
    if (pos == text.size()) throw RepParseError("trailing '+' in representation string", end, 1);
  }
  return RepSpec(std::move(terms), dim);
}

std::string RepSpec::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (i) os << '+';
    const auto& t = terms_[i];
    os << t.multiplicity << 'x' << t.order << (t.parity == Parity::tensor ? 'n' : 'p');
  }
  return os.str();
}

std::vector<int> RepSpec::even_scalar_channels() const {
  std::vector<int> out;
  int col = 0;
  for (const auto& t : terms_) {
    const int w = t.multiplicity * tensor_width(dim_, t.order);
    if (t.order == 0 && t.parity == Parity::tensor)
      for (int c = 0; c < w; ++c) out.push_back(col + c);
    col += w;
  }
  return out;
}

bool RepSpec::is_invariant() const {
  return std::all_of(terms_.begin(), terms_.end(),
                     [](const RepTerm& t) { return t.order == 0 && t.parity == Parity::tensor; });
}

RepSpec parse_rep_spec(std::string_view text, int dim) { return RepSpec::parse(text, dim); }

int rep_width(const RepSpec& spec) { return spec.width(); }

// ---------------------------------------------------------------------------

Orthogonal::Orthogonal(Eigen::MatrixXd entries) : m_(std::move(entries)) {
  if (m_.rows() != m_.cols()) throw std::invalid_argument("Orthogonal: matrix must be square");
  det_ = m_.rows() == 0 ? 1.0 : (m_.determinant() < 0 ? -1.0 : 1.0);
}

Orthogonal Orthogonal::identity(int dim) { return Orthogonal(Eigen::MatrixXd::Identity(dim, dim)); }

Orthogonal Orthogonal::checked(Eigen::MatrixXd entries, double tol) {
  Orthogonal r(std::move(entries));
  if (r.orthogonality_error() > tol)
    throw std::invalid_argument("Orthogonal: matrix is not orthogonal within tolerance");
  return r;
}

Orthogonal Orthogonal::transpose() const { return Orthogonal(m_.transpose()); }

Orthogonal Orthogonal::operator*(const Orthogonal& other) const {
  if (dim() != other.dim()) throw std::invalid_argument("Orthogonal: dimension mismatch");
  return Orthogonal(m_ * other.m_);
}

double Orthogonal::orthogonality_error() const {
  const auto n = m_.rows();
  return (m_ * m_.transpose() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
}

Orthogonal random_orthogonal(Rng& rng, Group group, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  if (q.determinant() < 0) q.col(0) *= -1.0;
  if (group == Group::O) {
    std::bernoulli_distribution flip(0.5);
    if (flip(rng)) q.row(0) *= -1.0;
  }
  return Orthogonal(std::move(q));
}

// ---------------------------------------------------------------------------

FeatureBlock::FeatureBlock(Matrix v, RepSpec s) : values(std::move(v)), spec(std::move(s)) {
  if (values.cols() != spec.width())
    throw std::invalid_argument("FeatureBlock: column count " + std::to_string(values.cols()) +
                                " does not match representation width " +
                                std::to_string(spec.width()));
}

FeatureBlock apply_rep(const RepSpec& spec, const Orthogonal& rotation, const FeatureBlock& f) {
  if (!(f.spec == spec)) throw std::invalid_argument("apply_rep: feature block has a different spec");
  if (rotation.dim() != spec.dim()) throw std::invalid_argument("apply_rep: dimension mismatch");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m = rotation.matrix();
  Matrix out(f.values.rows(), f.values.cols());
  std::vector<double> scratch(kernels::scratch_size(spec));
  const auto w = static_cast<std::size_t>(spec.width());
  for (Eigen::Index n = 0; n < f.values.rows(); ++n) {
    kernels::apply_rep_row(spec, m.data(), rotation.det(), {f.values.row(n).data(), w},
                           {out.row(n).data(), w}, scratch);
  }
  return FeatureBlock(std::move(out), spec);
}

FeatureBlock change_of_basis(const RepSpec& spec, const Orthogonal& to, const Orthogonal& from,
                             const FeatureBlock& f) {
  return apply_rep(spec, to * from.transpose(), f);
}

// ---------------------------------------------------------------------------

namespace kernels {

namespace {

// out = M applied on index `mode` of an order-n tensor.
void contract_mode(const double* m, int d, int order, int mode, const double* in, double* out) {
  const int inner = tensor_width(d, order - 1 - mode);
  const int outer = tensor_width(d, mode);
  for (int a = 0; a < outer; ++a) {
    for (int p = 0; p < d; ++p) {
      double* dst = out + (a * d + p) * inner;
      for (int b = 0; b < inner; ++b) dst[b] = 0.0;
      for (int q = 0; q < d; ++q) {
        const double mpq = m[p * d + q];
        if (mpq == 0.0) continue;
        const double* src = in + (a * d + q) * inner;
        for (int b = 0; b < inner; ++b) dst[b] += mpq * src[b];
      }
    }
  }
}

// Contracts every mode except `skip` (pass -1 for all). Result ends in `out`.
void contract_all(const double* m, int d, int order, int skip, const double* in, double* out,
                  double* tmp) {
  const int w = tensor_width(d, order);
  const double* src = in;
  int applied = 0;
  const int total = order - (skip >= 0 ? 1 : 0);
  if (total == 0) {
    std::copy(in, in + w, out);
    return;
  }
  // Ping-pong so the final contraction lands in `out`.
  double* bufs[2] = {(total % 2 == 1) ? out : tmp, (total % 2 == 1) ? tmp : out};
  for (int k = 0; k < order; ++k) {
    if (k == skip) continue;
    double* dst = bufs[applied % 2];
    contract_mode(m, d, order, k, src, dst);
    src = dst;
    ++applied;
  }
}

}  // namespace

std::size_t scratch_size(const RepSpec& spec) {
  int max_w = 1;
  for (const auto& t : spec.terms()) max_w = std::max(max_w, tensor_width(spec.dim(), t.order));
  return static_cast<std::size_t>(3 * max_w);
}

double det_small(const double* m, int d) {
  switch (d) {
    case 1: return m[0];
    case 2: return m[0] * m[3] - m[1] * m[2];
    case 3:
      return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
             m[2] * (m[3] * m[7] - m[4] * m[6]);
    default: {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> map(
          m, d, d);
      return map.determinant();
    }
  }
}

void apply_rep_row(const RepSpec& spec, const double* matrix, double det,
                   std::span<const double> in, std::span<double> out, std::span<double> scratch) {
  const int d = spec.dim();
  std::size_t col = 0;
  for (const auto& t : spec.terms()) {
    const int w = tensor_width(d, t.order);
    const double factor = t.parity == Parity::pseudotensor ? det : 1.0;
    for (int c = 0; c < t.multiplicity; ++c, col += static_cast<std::size_t>(w)) {
      const double* src = in.data() + col;
      double* dst = out.data() + col;
      if (t.order == 0) {
        dst[0] = factor * src[0];
        continue;
      }
      contract_all(matrix, d, t.order, -1, src, dst, scratch.data());
      if (factor != 1.0)
        for (int k = 0; k < w; ++k) dst[k] *= factor;
    }
  }
}

void apply_rep_row_grad_matrix(const RepSpec& spec, const double* matrix, double det,
                               std::span<const double> x, std::span<const double> g,
                               double* grad_matrix, std::span<double> scratch) {
  const int d = spec.dim();
  std::size_t col = 0;
  for (const auto& t : spec.terms()) {
    const int w = tensor_width(d, t.order);
    const double factor = t.parity == Parity::pseudotensor ? det : 1.0;
    for (int c = 0; c < t.multiplicity; ++c, col += static_cast<std::size_t>(w)) {
      if (t.order == 0) continue;
      const double* xs = x.data() + col;
      const double* gs = g.data() + col;
      double* z = scratch.data();
      double* tmp = scratch.data() + w;
      for (int mode = 0; mode < t.order; ++mode) {
        contract_all(matrix, d, t.order, mode, xs, z, tmp);
        const int inner = tensor_width(d, t.order - 1 - mode);
        const int outer = tensor_width(d, mode);
        for (int a = 0; a < outer; ++a)
          for (int p = 0; p < d; ++p)
            for (int q = 0; q < d; ++q) {
              const double* gp = gs + (a * d + p) * inner;
              const double* zq = z + (a * d + q) * inner;
              double s = 0.0;
              for (int b = 0; b < inner; ++b) s += gp[b] * zq[b];
              grad_matrix[p * d + q] += factor * s;
            }
      }
    }
  }
}

}  // namespace kernels

}  // namespace lframes
