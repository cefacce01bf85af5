// SPDX-License-Identifier: Apache-2.0
#include "covcast/nn.hpp"

#include "covcast/error.hpp"

#include <algorithm>
#include <cmath>

namespace covcast {

Matrix dense_forward(const Matrix &input, const Matrix &weights, std::span<const double> bias) {
  if (input.cols() != weights.rows() || bias.size() != weights.cols())
    throw Error(ErrorCode::ShapeMismatch,
                "dense: input " + std::to_string(input.rows()) + "x" +
                    std::to_string(input.cols()) + ", weights " +
                    std::to_string(weights.rows()) + "x" + std::to_string(weights.cols()) +
                    ", bias " + std::to_string(bias.size()));
  Matrix out(input.rows(), weights.cols());
  for (std::size_t i = 0; i < input.rows(); ++i) {
    auto o = out.row(i);
    std::copy(bias.begin(), bias.end(), o.begin());
    for (std::size_t p = 0; p < input.cols(); ++p) {
      const double a = input(i, p);
      auto w = weights.row(p);
      for (std::size_t j = 0; j < o.size(); ++j)
        o[j] += a * w[j];
    }
  }
  return out;
}

Activation parse_activation(std::string_view name) {
  if (name == "relu")
    return Activation::Relu;
  if (name == "tanh")
    return Activation::Tanh;
  if (name == "sigmoid")
    return Activation::Sigmoid;
  throw Error(ErrorCode::InvalidValue, "unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) noexcept {
  switch (a) {
  case Activation::Relu:
    return "relu";
  case Activation::Sigmoid:
    return "sigmoid";
  case Activation::Tanh:
    return "tanh";
  }
  return "?";
}

MseResult mse_loss(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size())
    throw Error(ErrorCode::LengthMismatch, "mse: " + std::to_string(pred.size()) +
                                               " predictions vs " +
                                               std::to_string(actual.size()) + " targets");
  if (pred.empty())
    throw Error(ErrorCode::EmptyInput, "mse of no samples");
  const double n = static_cast<double>(pred.size());
  MseResult r;
  r.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - actual[i];
    r.loss += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.loss /= n;
  return r;
}

// ---------------------------------------------------------------------------

namespace {
std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
} // namespace

XorShift64Star::XorShift64Star(std::uint64_t seed) noexcept : state_(splitmix64(seed)) {
  if (state_ == 0)
    state_ = 0x9E3779B97F4A7C15ull;
}

std::uint64_t XorShift64Star::next() noexcept {
  state_ ^= state_ >> 12;
  state_ ^= state_ << 25;
  state_ ^= state_ >> 27;
  return state_ * 0x2545F4914F6CDD1Dull;
}

std::uint64_t XorShift64Star::below(std::uint64_t bound) noexcept {
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = bound ? (~std::uint64_t{0} - (~std::uint64_t{0} % bound)) : 0;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % bound;
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return seed ^ h;
}

void shuffle_indices(std::span<std::size_t> idx, XorShift64Star &rng) noexcept {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

Matrix init_params(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                   std::uint64_t seed, std::string_view name) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  XorShift64Star rng(stream_seed(seed, name));
  Matrix m(rows, cols);
  for (auto &x : m.values())
    x = bound * (2.0 * rng.uniform() - 1.0);
  return m;
}

// ---------------------------------------------------------------------------

void adam_step(Parameter &param, AdamState &state, const AdamConfig &cfg) {
  if (!param.grad.same_shape(param.value) || !state.m.same_shape(param.value) ||
      !state.v.same_shape(param.value))
    throw Error(ErrorCode::ShapeMismatch, "adam: state or gradient shape differs for '" +
                                              param.name + "'");
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  double *w = param.value.data();
  const double *g = param.grad.data();
  double *m = state.m.data();
  double *v = state.v.data();
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    w[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

double clip_global_norm(std::span<Parameter *const> params, double max_norm) {
  double sq = 0.0;
  for (const auto *p : params)
    for (double g : p->grad.values())
      sq += g * g;
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm))
    return 1.0;
  const double s = max_norm / norm;
  for (auto *p : params)
    for (double &g : p->grad.values())
      g *= s;
  return s;
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<double()> &loss,
                           std::span<Parameter *const> params, const GradCheckOptions &opts) {
  const double base = loss();
  const double again = loss();
  if (base != again && !(std::isnan(base) && std::isnan(again)))
    throw Error(ErrorCode::NonDeterministicForward,
                "two identical forward passes disagree (" + std::to_string(base) + " vs " +
                    std::to_string(again) + ")");

  GradCheckReport report;
  for (auto *p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      double &w = p->value[i];
      const double saved = w;
      w = saved + opts.delta;
      const double up = loss();
      w = saved - opts.delta;
      const double down = loss();
      w = saved;

      GradCheckEntry e;
      e.name = p->name;
      e.index = i;
      e.analytic = p->grad[i];
      e.numeric = (up - down) / (2.0 * opts.delta);
      const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-8});
      e.rel_error = std::abs(e.analytic - e.numeric) / denom;
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      if (!(e.rel_error < opts.tolerance))
        ++report.failures;
      report.entries.push_back(std::move(e));
    }
  }
  return report;
}

} // namespace covcast
