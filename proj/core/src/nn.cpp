#include "lframes/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lframes::nn {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

Matrix glorot_uniform(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return w;
}

FeatureNorm::FeatureNorm(std::string name, int width)
    : scale_(name + ".scale", Matrix::Ones(1, width)),
      shift_(name + ".shift", Matrix::Zero(1, width)),
      running_mean_(Matrix::Zero(1, width)),
      running_var_(Matrix::Ones(1, width)) {}

Var FeatureNorm::forward(Tape& tape, Var x, bool training) {
  if (x.cols() != width()) throw std::invalid_argument("FeatureNorm: width mismatch");
  Var standardized;
  if (training && x.rows() >= 2) {
    const Matrix& v = x.value();
    const Eigen::RowVectorXd mu = v.colwise().mean();
    const Eigen::RowVectorXd var = (v.rowwise() - mu).array().square().colwise().mean();
    running_mean_ = (1 - kMomentum) * running_mean_ + kMomentum * Matrix(mu);
    running_var_ = (1 - kMomentum) * running_var_ + kMomentum * Matrix(var);
    standardized = batch_standardize(x, kEps);
  } else {
    Matrix inv = (running_var_.array() + kEps).rsqrt().matrix();
    Matrix shift = -running_mean_.cwiseProduct(inv);
    standardized = add_row(mul_row(x, tape.constant(std::move(inv))), tape.constant(std::move(shift)));
  }
  return add_row(mul_row(standardized, tape.param(scale_)), tape.param(shift_));
}

Mlp::Mlp(std::string name, std::vector<int> widths, Rng& rng, bool norm) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output width");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int fi = widths_[l], fo = widths_[l + 1];
    if (fi < 0 || fo <= 0) throw std::invalid_argument("Mlp: widths must be positive");
    weights_.emplace_back(name + ".w" + std::to_string(l), glorot_uniform(fi, fo, rng));
    biases_.emplace_back(name + ".b" + std::to_string(l), Matrix::Zero(1, fo));
    if (norm && l + 2 < widths_.size()) norms_.emplace_back(name + ".norm" + std::to_string(l), fo);
  }
}

Var Mlp::forward(Tape& tape, Var x, bool training) {
  if (x.cols() != in_width())
    throw std::invalid_argument("Mlp: input width " + std::to_string(x.cols()) + " != " +
                                std::to_string(in_width()));
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = add_row(matmul(h, tape.param(weights_[l])), tape.param(biases_[l]));
    if (l + 1 < weights_.size()) {
      if (!norms_.empty()) h = norms_[l].forward(tape, h, training);
      h = nn::silu(h);
    }
  }
  return h;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l)
    n += static_cast<std::size_t>(widths_[l] + 1) * static_cast<std::size_t>(widths_[l + 1]);
  return n;
}

std::size_t Mlp::total_parameter_count() const {
  std::size_t n = parameter_count();
  for (const auto& nm : norms_) n += 2 * static_cast<std::size_t>(nm.width());
  return n;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  for (auto& nm : norms_)
    for (auto* p : nm.parameters()) out.push_back(p);
  return out;
}

std::vector<Matrix*> Mlp::buffers() {
  std::vector<Matrix*> out;
  for (auto& nm : norms_)
    for (auto* b : nm.buffers()) out.push_back(b);
  return out;
}

Var l1_loss(Var pred, Var target) { return mean(abs(sub(pred, target))); }

Var cosine_similarity(Var pred, Var target) {
  Var dots = row_dot(pred, target);
  Var norms = mul(row_norm(pred), row_norm(target));
  return mean(mul(dots, reciprocal(add_scalar(norms, 1e-12))));
}

Var cross_entropy(Var logits, const std::vector<int>& labels, double smoothing) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    throw std::invalid_argument("cross_entropy: label count mismatch");
  const auto classes = logits.cols();
  Matrix q = Matrix::Constant(logits.rows(), classes, smoothing / static_cast<double>(classes));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || labels[r] >= classes) throw std::invalid_argument("cross_entropy: bad label");
    q(static_cast<Eigen::Index>(r), labels[r]) += 1.0 - smoothing;
  }
  Var logp = log_softmax_rows(logits);
  Var weighted = mul(logp, logits.tape()->constant(std::move(q)));
  return scale(sum(weighted), -1.0 / static_cast<double>(labels.size()));
}

void adamw_step(const std::vector<Parameter*>& params, AdamWState& state, double lr,
                const AdamWConfig& cfg) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adamw_step: state shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Matrix& m = state.m[k];
    Matrix& v = state.v[k];
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
      throw std::invalid_argument("adamw_step: state shape mismatch for " + p.name);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * p.grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * p.grad.cwiseProduct(p.grad);
    if (cfg.weight_decay != 0.0) p.value *= (1.0 - lr * cfg.weight_decay);
    p.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

void AdamW::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double cosine_lr_schedule(long step, long total, long warmup, double base_lr) {
  if (step < 0 || step > total) throw std::invalid_argument("cosine_lr_schedule: step out of range");
  if (warmup > 0 && step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const long span = total - warmup;
  if (span <= 0) return step >= total ? 0.0 : base_lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(span);
  const double pi = std::acos(-1.0);
  double lr = 0.5 * base_lr * (1.0 + std::cos(pi * progress));
  if (step == total) lr = 0.0;
  return lr;
}

double grad_norm(const std::vector<Parameter*>& params) {
  double s = 0.0;
  for (auto* p : params) s += p->grad.squaredNorm();
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  const double n = grad_norm(params);
  if (n > max_norm && n > 0) {
    const double f = max_norm / n;
    for (auto* p : params) p->grad *= f;
  }
  return n;
}

GradCheckResult check_gradients(const std::function<Var(Tape&)>& loss_fn,
                                const std::vector<Parameter*>& params, double h, double floor,
                                int max_entries_per_param) {
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  std::vector<Matrix> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  auto eval = [&]() {
    Tape tape;
    return loss_fn(tape).scalar();
  };
  GradCheckResult res;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const Eigen::Index n = p.value.size();
    Eigen::Index stride = 1;
    if (max_entries_per_param > 0 && n > max_entries_per_param) stride = n / max_entries_per_param;
    for (Eigen::Index i = 0; i < n; i += stride) {
      const double orig = p.value.data()[i];
      p.value.data()[i] = orig + h;
      const double up = eval();
      p.value.data()[i] = orig - h;
      const double down = eval();
      p.value.data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k].data()[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        std::ostringstream os;
        os << p.name << "[" << i << "] analytic=" << a << " numeric=" << numeric;
        res.worst = os.str();
      }
      ++res.checked;
    }
  }
  for (auto* p : params) p->zero_grad();
  return res;
}

}  // namespace lframes::nn
