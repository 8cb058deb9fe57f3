// Representation algebra for O(d): direct sums of tensor and pseudotensor
// representations acting on per-node feature blocks.
//
// Tensor index flattening is row-major over (i_1, ..., i_n): the component
// T_{i_1 ... i_n} of an order-n segment lives at offset
// ((i_1 * d + i_2) * d + ...) * d + i_n inside that segment.
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace lframes {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream), e.g. one stream per node, so
/// results do not depend on evaluation order.
Rng split_rng(std::uint64_t seed, std::uint64_t stream);

/// Dense row-major matrix used for node-by-channel data throughout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Parity { tensor, pseudotensor };

struct RepTerm {
  int multiplicity = 1;
  int order = 0;
  Parity parity = Parity::tensor;

  bool operator==(const RepTerm&) const = default;
};

/// Thrown by RepSpec::parse; `offset`/`length` locate the offending span.
class RepParseError : public std::invalid_argument {
 public:
  RepParseError(const std::string& what, std::size_t offset, std::size_t length)
      : std::invalid_argument(what), offset_(offset), length_(length) {}
  std::size_t offset() const noexcept { return offset_; }
  std::size_t length() const noexcept { return length_; }

 private:
  std::size_t offset_;
  std::size_t length_;
};

/// Ordered direct sum of (multiplicity, order, parity) terms in dimension d.
/// Terms are never sorted or merged.
class RepSpec {
 public:
  RepSpec() = default;
  RepSpec(std::vector<RepTerm> terms, int dim = 3);

  /// Grammar: term ('+' term)*, term = <mult>x<order><n|p>, e.g. "8x0p+4x1n".
  static RepSpec parse(std::string_view text, int dim = 3);

  const std::vector<RepTerm>& terms() const noexcept { return terms_; }
  int dim() const noexcept { return dim_; }
  int width() const noexcept { return width_; }
  bool empty() const noexcept { return terms_.empty(); }

  /// Canonical form; multiplicity is always printed ("1x1n").
  std::string to_string() const;

  /// Column indices of order-0 tensor (parity-even) channels.
  std::vector<int> even_scalar_channels() const;
  /// True when every term is an order-0 tensor.
  bool is_invariant() const;

  bool operator==(const RepSpec&) const = default;

 private:
  std::vector<RepTerm> terms_;
  int dim_ = 3;
  int width_ = 0;
};

RepSpec parse_rep_spec(std::string_view text, int dim = 3);
int rep_width(const RepSpec& spec);

/// d^order; the width of a single tensor of that order.
int tensor_width(int dim, int order);

/// d x d matrix with R R^T = I. Construction through `checked` validates.
class Orthogonal {
 public:
  Orthogonal() = default;
  explicit Orthogonal(Eigen::MatrixXd entries);

  static Orthogonal identity(int dim);
  /// Throws std::invalid_argument when the matrix is not orthogonal within tol.
  static Orthogonal checked(Eigen::MatrixXd entries, double tol = 1e-10);

  const Eigen::MatrixXd& matrix() const noexcept { return m_; }
  int dim() const noexcept { return static_cast<int>(m_.rows()); }
  double det() const noexcept { return det_; }
  Orthogonal transpose() const;
  Orthogonal operator*(const Orthogonal& other) const;

  /// max |R R^T - I|
  double orthogonality_error() const;

 private:
  Eigen::MatrixXd m_;
  double det_ = 1.0;
};

enum class Group { SO, O };

/// Haar sample by QR of a Gaussian matrix with sign-fixed diagonal. For
/// Group::O a reflection is applied with probability 1/2.
Orthogonal random_orthogonal(Rng& rng, Group group, int dim = 3);

/// N x W feature values tagged with the representation they transform under.
struct FeatureBlock {
  Matrix values;
  RepSpec spec;

  FeatureBlock() = default;
  FeatureBlock(Matrix v, RepSpec s);
  Eigen::Index rows() const { return values.rows(); }
};

/// rho(R) f for every row of f.
FeatureBlock apply_rep(const RepSpec& spec, const Orthogonal& rotation, const FeatureBlock& f);
/// rho(R_to R_from^T) f.
FeatureBlock change_of_basis(const RepSpec& spec, const Orthogonal& to, const Orthogonal& from,
                             const FeatureBlock& f);

namespace kernels {

/// Applies rho(M) to one feature row. `matrix` is d x d row-major, `det` is
/// the pseudotensor factor. `in` and `out` must not alias. `scratch` needs
/// 2 * max tensor width doubles.
void apply_rep_row(const RepSpec& spec, const double* matrix, double det,
                   std::span<const double> in, std::span<double> out,
                   std::span<double> scratch);

/// Accumulates d(<g, rho(M) x>)/dM into `grad_matrix` (d x d row-major),
/// holding the pseudotensor factor fixed.
void apply_rep_row_grad_matrix(const RepSpec& spec, const double* matrix, double det,
                               std::span<const double> x, std::span<const double> g,
                               double* grad_matrix, std::span<double> scratch);

/// Doubles of scratch required by the kernels for this spec.
std::size_t scratch_size(const RepSpec& spec);

double det_small(const double* matrix, int dim);

}  // namespace kernels

}  // namespace lframes
