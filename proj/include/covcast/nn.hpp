// SPDX-License-Identifier: Apache-2.0
/**
 * @file   nn.hpp
 * @brief  Dense layer, activations, MSE loss, seeded initialisation, Adam and
 *         a central-difference gradient checker.
 */
#pragma once

#include "covcast/matrix.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace covcast {

// ---------------------------------------------------------------------------
// Dense layer

/// out = input * weights + bias (bias broadcast over rows).
Matrix dense_forward(const Matrix &input, const Matrix &weights, std::span<const double> bias);

// ---------------------------------------------------------------------------
// Activations

enum class Activation { Relu, Sigmoid, Tanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a) noexcept;

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

inline double activate(Activation kind, double x) noexcept {
  switch (kind) {
  case Activation::Relu:
    return x > 0.0 ? x : 0.0;
  case Activation::Sigmoid:
    return sigmoid(x);
  case Activation::Tanh:
    return std::tanh(x);
  }
  return x;
}

/// d/dx activate(kind, x). relu'(0) is 0.
inline double derivative(Activation kind, double x) noexcept {
  switch (kind) {
  case Activation::Relu:
    return x > 0.0 ? 1.0 : 0.0;
  case Activation::Sigmoid: {
    const double s = sigmoid(x);
    return s * (1.0 - s);
  }
  case Activation::Tanh: {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  }
  }
  return 1.0;
}

/// Same derivative expressed through y = activate(kind, x).
inline double derivative_from_output(Activation kind, double y) noexcept {
  switch (kind) {
  case Activation::Relu:
    return y > 0.0 ? 1.0 : 0.0;
  case Activation::Sigmoid:
    return y * (1.0 - y);
  case Activation::Tanh:
    return 1.0 - y * y;
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// Loss

struct MseResult {
  double loss = 0.0;
  std::vector<double> grad; // d loss / d pred
};

MseResult mse_loss(std::span<const double> pred, std::span<const double> actual);

// ---------------------------------------------------------------------------
// Random numbers

/**
 * xorshift64* (Vigna 2014): state ^= state >> 12; state ^= state << 25;
 * state ^= state >> 27; output = state * 0x2545F4914F6CDD1D. Seeds are
 * scrambled through one splitmix64 round so that 0 is a valid seed.
 */
class XorShift64Star {
public:
  explicit XorShift64Star(std::uint64_t seed) noexcept;

  std::uint64_t next() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// Uniform integer on [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;

private:
  std::uint64_t state_;
};

/// Seed of the independent stream for (seed, name): seed ^ FNV-1a-64(name).
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) noexcept;

/// Fisher-Yates with the fixed generator, identical on every platform.
void shuffle_indices(std::span<std::size_t> idx, XorShift64Star &rng) noexcept;

/// Glorot-uniform matrix drawn from the (seed, name) stream.
Matrix init_params(std::size_t rows, std::size_t cols, std::size_t fan_in,
                   std::size_t fan_out, std::uint64_t seed, std::string_view name);

// ---------------------------------------------------------------------------
// Parameters and optimisation

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() noexcept { grad.fill(0.0); }
};

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Matrix m;
  Matrix v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(const Matrix &like) : m(like.rows(), like.cols()), v(like.rows(), like.cols()) {}
};

/// One bias-corrected Adam update; epsilon is added to sqrt(v_hat).
void adam_step(Parameter &param, AdamState &state, const AdamConfig &cfg = {});

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the applied factor s, 0 < s <= 1.
double clip_global_norm(std::span<Parameter *const> params, double max_norm);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckOptions {
  double delta = 1e-5;
  double tolerance = 1e-4;
};

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::size_t failures = 0;
  bool passed() const noexcept { return failures == 0; }
};

/**
 * Compares each param's grad against central differences of @p loss.
 * The analytic gradient must already be stored in Parameter::grad. Values
 * are perturbed in place and restored. Throws NonDeterministicForward if two
 * unperturbed evaluations differ.
 */
GradCheckReport grad_check(const std::function<double()> &loss,
                           std::span<Parameter *const> params,
                           const GradCheckOptions &opts = {});

} // namespace covcast
