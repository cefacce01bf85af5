// SPDX-License-Identifier: Apache-2.0
#include "covcast/model.hpp"

#include "covcast/error.hpp"
#include "covcast/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace covcast {

// ---------------------------------------------------------------------------
// Config

Variant parse_variant(std::string_view name) {
  if (name == "lstm")
    return Variant::Lstm;
  if (name == "gru")
    return Variant::Gru;
  if (name == "conv_lstm")
    return Variant::ConvLstm;
  throw Error(ErrorCode::InvalidValue, "unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(Variant v) noexcept {
  switch (v) {
  case Variant::Lstm:
    return "lstm";
  case Variant::Gru:
    return "gru";
  case Variant::ConvLstm:
    return "conv_lstm";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (num_layers == 0)
    throw Error(ErrorCode::InvalidConfig, "num_layers must be at least 1");
  if (window_len == 0 || horizon == 0)
    throw Error(ErrorCode::InvalidConfig, "window length and horizon must be positive");
  if (is_conv()) {
    if (conv_filters == 0 || kernel_width == 0 || n_seq == 0)
      throw Error(ErrorCode::InvalidConfig, "conv_lstm needs filters, kernel width and n_seq");
    if (window_len % n_seq != 0)
      throw Error(ErrorCode::IndivisibleWindow, "window length " + std::to_string(window_len) +
                                                    " is not divisible into " +
                                                    std::to_string(n_seq) + " sub-steps");
  } else if (hidden_units == 0) {
    throw Error(ErrorCode::InvalidConfig, "hidden_units must be positive");
  }
}

std::string ModelConfig::model_id() const {
  std::string base;
  switch (variant) {
  case Variant::Lstm:
    base = "LSTM";
    break;
  case Variant::Gru:
    base = "GRU";
    break;
  case Variant::ConvLstm:
    base = "Conv-LSTM";
    break;
  }
  return bidirectional ? "Bi-" + base : base;
}

// ---------------------------------------------------------------------------
// Elementwise helpers

namespace {

constexpr std::size_t F_ = 0, I_ = 1, O_ = 2, G_ = 3; // LSTM gate slots
constexpr std::size_t Z_ = 0, R_ = 1, H_ = 2;         // GRU gate slots

void resize_zero(Matrix &m, std::size_t rows, std::size_t cols) {
  if (m.rows() != rows || m.cols() != cols)
    m = Matrix(rows, cols);
  else
    m.fill(0.0);
}

// out is R x (taps*C); row (b, p) holds x rows (b, p - pad + t) for each tap t.
void im2col(const Matrix &x, std::size_t positions, std::size_t taps, Matrix &out) {
  const std::size_t rows = x.rows(), ch = x.cols();
  if (taps == 1) {
    out = x;
    return;
  }
  resize_zero(out, rows, taps * ch);
  const auto pad = static_cast<long>((taps - 1) / 2);
  const auto P = static_cast<long>(positions);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto p = static_cast<long>(r % positions);
    const std::size_t base = r - static_cast<std::size_t>(p);
    for (std::size_t t = 0; t < taps; ++t) {
      const long q = p - pad + static_cast<long>(t);
      if (q < 0 || q >= P)
        continue;
      const double *src = x.data() + (base + static_cast<std::size_t>(q)) * ch;
      std::copy(src, src + ch, out.data() + r * taps * ch + t * ch);
    }
  }
}

// Adjoint of im2col: scatters R x (taps*C) back onto R x C.
void col2im(const Matrix &col, std::size_t positions, std::size_t taps, std::size_t ch,
            Matrix &out) {
  const std::size_t rows = col.rows();
  if (taps == 1) {
    out = col;
    return;
  }
  resize_zero(out, rows, ch);
  const auto pad = static_cast<long>((taps - 1) / 2);
  const auto P = static_cast<long>(positions);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto p = static_cast<long>(r % positions);
    const std::size_t base = r - static_cast<std::size_t>(p);
    for (std::size_t t = 0; t < taps; ++t) {
      const long q = p - pad + static_cast<long>(t);
      if (q < 0 || q >= P)
        continue;
      const double *src = col.data() + r * taps * ch + t * ch;
      double *dst = out.data() + (base + static_cast<std::size_t>(q)) * ch;
      for (std::size_t c = 0; c < ch; ++c)
        dst[c] += src[c];
    }
  }
}

void add_bias(Matrix &a, const Matrix &bias) {
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double *row = a.data() + r * n;
    for (std::size_t j = 0; j < n; ++j)
      row[j] += bias[j];
  }
}

void add_column_sums(const Matrix &a, Matrix &out) {
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double *row = a.data() + r * n;
    for (std::size_t j = 0; j < n; ++j)
      out[j] += row[j];
  }
}

void apply_activation(Matrix &m, Activation act) {
  for (double &x : m.values())
    x = activate(act, x);
}

// pre = x * W + h * U + b, then activation.
void gate_forward(const Matrix &x, const Matrix &h, const Parameter &W, const Parameter &U,
                  const Parameter &b, Activation act, Matrix &out) {
  kernels::gemm(x, W.value, out);
  kernels::gemm(h, U.value, out, true);
  add_bias(out, b.value);
  apply_activation(out, act);
}

void check_lstm_shapes(const LstmLayer &layer, const Matrix &x, const CellState &prev) {
  const std::size_t rows = x.rows();
  if (x.cols() != layer.in_channels || rows % layer.positions != 0 ||
      prev.h.rows() != rows || prev.h.cols() != layer.units || !prev.c.same_shape(prev.h))
    throw Error(ErrorCode::ShapeMismatch,
                "lstm step: input " + std::to_string(x.rows()) + "x" +
                    std::to_string(x.cols()) + " with state " + std::to_string(prev.h.rows()) +
                    "x" + std::to_string(prev.h.cols()));
}

// Fills gates, c, actc and h from x and the previous state.
void lstm_forward_step(const LstmLayer &L, const Matrix &x, const Matrix &h_prev,
                       const Matrix &c_prev, Activation act, Matrix &xcol, Matrix &hcol,
                       std::array<Matrix *, 4> gates, Matrix &c, Matrix &actc, Matrix &h) {
  im2col(x, L.positions, L.taps, xcol);
  im2col(h_prev, L.positions, L.taps, hcol);
  for (std::size_t g = 0; g < 4; ++g)
    gate_forward(xcol, hcol, L.W[g], L.U[g], L.b[g], g == G_ ? act : Activation::Sigmoid,
                 *gates[g]);
  const std::size_t n = h_prev.size();
  resize_zero(c, h_prev.rows(), h_prev.cols());
  resize_zero(actc, h_prev.rows(), h_prev.cols());
  resize_zero(h, h_prev.rows(), h_prev.cols());
  const double *f = gates[F_]->data(), *i = gates[I_]->data(), *o = gates[O_]->data(),
               *g = gates[G_]->data(), *cp = c_prev.data();
  for (std::size_t k = 0; k < n; ++k) {
    c[k] = f[k] * cp[k] + i[k] * g[k];
    actc[k] = activate(act, c[k]);
    h[k] = o[k] * actc[k];
  }
}

void gru_forward_step(const GruLayer &L, const Matrix &x, const Matrix &h_prev, Activation act,
                      Matrix &z, Matrix &r, Matrix &hh, Matrix &rh, Matrix &h) {
  gate_forward(x, h_prev, L.W[Z_], L.U[Z_], L.b[Z_], Activation::Sigmoid, z);
  gate_forward(x, h_prev, L.W[R_], L.U[R_], L.b[R_], Activation::Sigmoid, r);
  resize_zero(rh, h_prev.rows(), h_prev.cols());
  for (std::size_t k = 0; k < rh.size(); ++k)
    rh[k] = r[k] * h_prev[k];
  gate_forward(x, rh, L.W[H_], L.U[H_], L.b[H_], act, hh);
  resize_zero(h, h_prev.rows(), h_prev.cols());
  for (std::size_t k = 0; k < h.size(); ++k)
    h[k] = (1.0 - z[k]) * h_prev[k] + z[k] * hh[k];
}

void lstm_backward(LstmLayer &L, const std::vector<Matrix> &xcol,
                   const std::vector<Matrix> &hcol, const std::array<std::vector<Matrix>, 4> &gate,
                   const std::vector<Matrix> &c, const std::vector<Matrix> &actc,
                   const std::vector<Matrix> &dH, Activation act, std::vector<Matrix> *dX) {
  const std::size_t T = dH.size();
  const std::size_t rows = dH.front().rows(), F = L.units;
  Matrix dh(rows, F), dc(rows, F), dh_next(rows, F), dc_next(rows, F);
  std::array<Matrix, 4> da;
  for (auto &m : da)
    m = Matrix(rows, F);
  Matrix dcol;
  const Matrix zero(rows, F);
  if (dX)
    dX->resize(T);

  for (std::size_t s = T; s-- > 0;) {
    const Matrix &c_prev = s > 0 ? c[s - 1] : zero;
    const double *f = gate[F_][s].data(), *i = gate[I_][s].data(), *o = gate[O_][s].data(),
                 *g = gate[G_][s].data(), *ac = actc[s].data(), *cp = c_prev.data(),
                 *dh_in = dH[s].data();
    for (std::size_t k = 0; k < rows * F; ++k) {
      const double dhk = dh_in[k] + dh_next[k];
      const double dck = dc_next[k] + dhk * o[k] * derivative_from_output(act, ac[k]);
      da[O_][k] = dhk * ac[k] * o[k] * (1.0 - o[k]);
      da[I_][k] = dck * g[k] * i[k] * (1.0 - i[k]);
      da[G_][k] = dck * i[k] * derivative_from_output(act, g[k]);
      da[F_][k] = dck * cp[k] * f[k] * (1.0 - f[k]);
      dc_next[k] = dck * f[k];
    }
    for (std::size_t q = 0; q < 4; ++q) {
      kernels::gemm_tn(xcol[s], da[q], L.W[q].grad, true);
      kernels::gemm_tn(hcol[s], da[q], L.U[q].grad, true);
      add_column_sums(da[q], L.b[q].grad);
    }
    for (std::size_t q = 0; q < 4; ++q)
      kernels::gemm_nt(da[q], L.U[q].value, dcol, q > 0);
    col2im(dcol, L.positions, L.taps, F, dh_next);
    if (dX) {
      for (std::size_t q = 0; q < 4; ++q)
        kernels::gemm_nt(da[q], L.W[q].value, dcol, q > 0);
      col2im(dcol, L.positions, L.taps, L.in_channels, (*dX)[s]);
    }
  }
}

void gru_backward(GruLayer &L, const std::vector<Matrix> &input,
                  const std::vector<Matrix> &h_prev, const std::array<std::vector<Matrix>, 4> &gate,
                  const std::vector<Matrix> &rh, const std::vector<Matrix> &dH, Activation act,
                  std::vector<Matrix> *dX) {
  const std::size_t T = dH.size();
  const std::size_t rows = dH.front().rows(), F = L.units;
  Matrix dh_next(rows, F), drh, da_z(rows, F), da_r(rows, F), da_h(rows, F), dtmp;
  if (dX)
    dX->resize(T);

  for (std::size_t s = T; s-- > 0;) {
    const double *z = gate[Z_][s].data(), *r = gate[R_][s].data(), *hh = gate[H_][s].data(),
                 *hp = h_prev[s].data(), *dh_in = dH[s].data();
    Matrix dh_prev(rows, F);
    for (std::size_t k = 0; k < rows * F; ++k) {
      const double dhk = dh_in[k] + dh_next[k];
      da_z[k] = dhk * (hh[k] - hp[k]) * z[k] * (1.0 - z[k]);
      da_h[k] = dhk * z[k] * derivative_from_output(act, hh[k]);
      dh_prev[k] = dhk * (1.0 - z[k]);
    }
    kernels::gemm_tn(input[s], da_h, L.W[H_].grad, true);
    kernels::gemm_tn(rh[s], da_h, L.U[H_].grad, true);
    add_column_sums(da_h, L.b[H_].grad);
    kernels::gemm_nt(da_h, L.U[H_].value, drh);
    for (std::size_t k = 0; k < rows * F; ++k) {
      da_r[k] = drh[k] * hp[k] * r[k] * (1.0 - r[k]);
      dh_prev[k] += drh[k] * r[k];
    }
    kernels::gemm_tn(input[s], da_z, L.W[Z_].grad, true);
    kernels::gemm_tn(h_prev[s], da_z, L.U[Z_].grad, true);
    add_column_sums(da_z, L.b[Z_].grad);
    kernels::gemm_tn(input[s], da_r, L.W[R_].grad, true);
    kernels::gemm_tn(h_prev[s], da_r, L.U[R_].grad, true);
    add_column_sums(da_r, L.b[R_].grad);
    kernels::gemm_nt(da_z, L.U[Z_].value, dh_prev, true);
    kernels::gemm_nt(da_r, L.U[R_].value, dh_prev, true);
    dh_next = std::move(dh_prev);
    if (dX) {
      kernels::gemm_nt(da_z, L.W[Z_].value, dtmp);
      kernels::gemm_nt(da_r, L.W[R_].value, dtmp, true);
      kernels::gemm_nt(da_h, L.W[H_].value, dtmp, true);
      (*dX)[s] = dtmp;
    }
  }
}

std::string param_prefix(std::size_t direction, std::size_t layer) {
  return std::string(direction == 0 ? "fwd" : "bwd") + ".l" + std::to_string(layer) + ".";
}

Parameter glorot(const std::string &name, std::size_t rows, std::size_t cols,
                 std::uint64_t seed) {
  return Parameter(name, init_params(rows, cols, rows, cols, seed, name));
}

} // namespace

// ---------------------------------------------------------------------------
// Public single-step API

Matrix conv_same(const Matrix &x, std::size_t positions, std::size_t taps, const Matrix &kernel) {
  if (positions == 0 || x.rows() % positions != 0 || kernel.rows() != taps * x.cols())
    throw Error(ErrorCode::ShapeMismatch, "conv_same: kernel rows must equal taps * channels");
  Matrix col, out;
  im2col(x, positions, taps, col);
  kernels::gemm(col, kernel, out);
  return out;
}

CellState lstm_step(const LstmLayer &layer, const Matrix &x, const CellState &prev,
                    Activation act) {
  check_lstm_shapes(layer, x, prev);
  Matrix xcol, hcol, f, i, o, g, actc;
  CellState next;
  lstm_forward_step(layer, x, prev.h, prev.c, act, xcol, hcol, {&f, &i, &o, &g}, next.c, actc,
                    next.h);
  return next;
}

CellState convlstm_step(const LstmLayer &layer, const Matrix &x, const CellState &prev,
                        Activation act) {
  return lstm_step(layer, x, prev, act);
}

Matrix gru_step(const GruLayer &layer, const Matrix &x, const Matrix &h_prev, Activation act) {
  if (x.cols() != layer.in_channels || h_prev.cols() != layer.units || h_prev.rows() != x.rows())
    throw Error(ErrorCode::ShapeMismatch, "gru step: input/state shapes do not conform");
  Matrix z, r, hh, rh, h;
  gru_forward_step(layer, x, h_prev, act, z, r, hh, rh, h);
  return h;
}

// ---------------------------------------------------------------------------
// Model

RecurrentModel::RecurrentModel(const ModelConfig &config) : config_(config) {
  config_.validate();
  const std::size_t dirs = config_.directions();
  const std::size_t F = config_.state_width();
  const std::size_t taps = config_.taps();
  static constexpr std::array<const char *, 4> lstm_names{"f", "i", "o", "g"};
  static constexpr std::array<const char *, 3> gru_names{"z", "r", "h"};

  if (config_.variant == Variant::Gru)
    gru_.resize(dirs);
  else
    lstm_.resize(dirs);

  for (std::size_t d = 0; d < dirs; ++d) {
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
      const std::size_t in = l == 0 ? 1 : F;
      const std::string pre = param_prefix(d, l);
      if (config_.variant == Variant::Gru) {
        GruLayer layer;
        layer.in_channels = in;
        layer.units = F;
        for (std::size_t g = 0; g < 3; ++g) {
          layer.W[g] = glorot(pre + "W_" + gru_names[g], in, F, config_.seed);
          layer.U[g] = glorot(pre + "U_" + gru_names[g], F, F, config_.seed);
          layer.b[g] = Parameter(pre + "b_" + gru_names[g], Matrix(1, F));
        }
        gru_[d].push_back(std::move(layer));
      } else {
        LstmLayer layer;
        layer.in_channels = in;
        layer.units = F;
        layer.taps = taps;
        layer.positions = config_.positions();
        for (std::size_t g = 0; g < 4; ++g) {
          layer.W[g] = glorot(pre + "W_" + lstm_names[g], taps * in, F, config_.seed);
          layer.U[g] = glorot(pre + "U_" + lstm_names[g], taps * F, F, config_.seed);
          layer.b[g] = Parameter(pre + "b_" + lstm_names[g], Matrix(1, F));
        }
        lstm_[d].push_back(std::move(layer));
      }
    }
  }
  head_w_ = glorot("head.W", config_.head_inputs(), 1, config_.seed);
  head_b_ = Parameter("head.b", Matrix(1, 1));
}

std::vector<Parameter *> RecurrentModel::parameters() {
  std::vector<Parameter *> out;
  for (auto &dir : lstm_)
    for (auto &l : dir) {
      for (auto &p : l.W)
        out.push_back(&p);
      for (auto &p : l.U)
        out.push_back(&p);
      for (auto &p : l.b)
        out.push_back(&p);
    }
  for (auto &dir : gru_)
    for (auto &l : dir) {
      for (auto &p : l.W)
        out.push_back(&p);
      for (auto &p : l.U)
        out.push_back(&p);
      for (auto &p : l.b)
        out.push_back(&p);
    }
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<const Parameter *> RecurrentModel::parameters() const {
  auto mut = const_cast<RecurrentModel *>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Parameter *RecurrentModel::find(std::string_view name) {
  for (auto *p : parameters())
    if (p->name == name)
      return p;
  return nullptr;
}

std::size_t RecurrentModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto *p : parameters())
    n += p->value.size();
  return n;
}

void RecurrentModel::zero_grad() {
  for (auto *p : parameters())
    p->zero_grad();
}

void RecurrentModel::build_inputs(std::span<const double> windows, std::size_t batch,
                                  bool reversed, std::vector<Matrix> &steps) const {
  const std::size_t W = config_.window_len, T = config_.steps(), P = config_.positions();
  steps.resize(T);
  for (std::size_t s = 0; s < T; ++s) {
    resize_zero(steps[s], batch * P, 1);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t j = s * P + p;
        steps[s][b * P + p] = windows[b * W + (reversed ? W - 1 - j : j)];
      }
  }
}

std::vector<double> RecurrentModel::forward(std::span<const double> windows,
                                            ForwardCache &cache) const {
  const std::size_t W = config_.window_len;
  if (windows.empty() || windows.size() % W != 0)
    throw Error(ErrorCode::ShapeMismatch, "forward: " + std::to_string(windows.size()) +
                                              " values do not form windows of length " +
                                              std::to_string(W));
  const std::size_t B = windows.size() / W;
  const std::size_t dirs = config_.directions(), L = config_.num_layers, T = config_.steps();
  const std::size_t P = config_.positions(), F = config_.state_width();
  const std::size_t rows = B * P;
  const Activation act = config_.cell_activation;

  cache.batch_ = 0;
  cache.layers_.resize(dirs);
  resize_zero(cache.features_, B, config_.head_inputs());
  const Matrix zero(rows, F);

  for (std::size_t d = 0; d < dirs; ++d) {
    auto &layers = cache.layers_[d];
    layers.resize(L);
    build_inputs(windows, B, d == 1, layers[0].in);
    for (std::size_t l = 0; l < L; ++l) {
      auto &lc = layers[l];
      const std::vector<Matrix> &input = l == 0 ? layers[0].in : layers[l - 1].h;
      lc.h.resize(T);
      lc.hcol.resize(T);
      for (auto &g : lc.gate)
        g.resize(T);
      if (config_.variant == Variant::Gru) {
        lc.rh.resize(T);
        const GruLayer &layer = gru_[d][l];
        for (std::size_t s = 0; s < T; ++s) {
          lc.hcol[s] = s > 0 ? lc.h[s - 1] : zero;
          gru_forward_step(layer, input[s], lc.hcol[s], act, lc.gate[Z_][s], lc.gate[R_][s],
                           lc.gate[H_][s], lc.rh[s], lc.h[s]);
        }
      } else {
        lc.xcol.resize(T);
        lc.c.resize(T);
        lc.actc.resize(T);
        const LstmLayer &layer = lstm_[d][l];
        for (std::size_t s = 0; s < T; ++s) {
          const Matrix &hp = s > 0 ? lc.h[s - 1] : zero;
          const Matrix &cp = s > 0 ? lc.c[s - 1] : zero;
          lstm_forward_step(layer, input[s], hp, cp, act, lc.xcol[s], lc.hcol[s],
                            {&lc.gate[F_][s], &lc.gate[I_][s], &lc.gate[O_][s], &lc.gate[G_][s]},
                            lc.c[s], lc.actc[s], lc.h[s]);
        }
      }
    }
    // Rows (b, p) of the final state are contiguous per sample.
    const Matrix &final_h = layers[L - 1].h[T - 1];
    const std::size_t width = P * F;
    for (std::size_t b = 0; b < B; ++b)
      std::copy(final_h.data() + b * width, final_h.data() + (b + 1) * width,
                cache.features_.data() + b * cache.features_.cols() + d * width);
  }

  Matrix out;
  kernels::gemm(cache.features_, head_w_.value, out);
  cache.predictions_.resize(B);
  for (std::size_t b = 0; b < B; ++b)
    cache.predictions_[b] = out[b] + head_b_.value[0];
  cache.batch_ = B;
  return cache.predictions_;
}

void RecurrentModel::backward(const ForwardCache &cache, std::span<const double> dpred) {
  if (cache.empty() || cache.layers_.size() != config_.directions() ||
      cache.features_.cols() != config_.head_inputs())
    throw Error(ErrorCode::MissingForwardCache, "backward called without a matching forward pass");
  const std::size_t B = cache.batch_;
  if (dpred.size() != B)
    throw Error(ErrorCode::LengthMismatch, "backward: " + std::to_string(dpred.size()) +
                                               " output gradients for a batch of " +
                                               std::to_string(B));
  const std::size_t dirs = config_.directions(), L = config_.num_layers, T = config_.steps();
  const std::size_t P = config_.positions(), F = config_.state_width();
  const std::size_t rows = B * P, width = P * F;
  const Activation act = config_.cell_activation;

  Matrix dout(B, 1, std::vector<double>(dpred.begin(), dpred.end()));
  kernels::gemm_tn(cache.features_, dout, head_w_.grad, true);
  for (double g : dpred)
    head_b_.grad[0] += g;
  Matrix dfeat;
  kernels::gemm_nt(dout, head_w_.value, dfeat);

  for (std::size_t d = 0; d < dirs; ++d) {
    const auto &layers = cache.layers_[d];
    std::vector<Matrix> dH(T, Matrix(rows, F));
    for (std::size_t b = 0; b < B; ++b)
      std::copy(dfeat.data() + b * dfeat.cols() + d * width,
                dfeat.data() + b * dfeat.cols() + (d + 1) * width,
                dH[T - 1].data() + b * width);
    std::vector<Matrix> dX;
    for (std::size_t l = L; l-- > 0;) {
      const auto &lc = layers[l];
      std::vector<Matrix> *dX_ptr = l > 0 ? &dX : nullptr;
      if (config_.variant == Variant::Gru) {
        const std::vector<Matrix> &input = l == 0 ? layers[0].in : layers[l - 1].h;
        gru_backward(gru_[d][l], input, lc.hcol, lc.gate, lc.rh, dH, act, dX_ptr);
      } else {
        lstm_backward(lstm_[d][l], lc.xcol, lc.hcol, lc.gate, lc.c, lc.actc, dH, act,
                      dX_ptr);
      }
      if (l > 0)
        dH.swap(dX);
    }
  }
}

double RecurrentModel::loss_and_gradients(std::span<const double> windows,
                                          std::span<const double> targets, ForwardCache &cache) {
  auto pred = forward(windows, cache);
  auto mse = mse_loss(pred, targets);
  backward(cache, mse.grad);
  return mse.loss;
}

double RecurrentModel::loss(std::span<const double> windows,
                            std::span<const double> targets) const {
  ForwardCache cache;
  return mse_loss(forward(windows, cache), targets).loss;
}

double RecurrentModel::predict(std::span<const double> window) const {
  if (window.size() != config_.window_len)
    throw Error(ErrorCode::ShapeMismatch, "predict: window of length " +
                                              std::to_string(window.size()) + ", expected " +
                                              std::to_string(config_.window_len));
  ForwardCache cache;
  return forward(window, cache).front();
}

std::vector<double> RecurrentModel::predict_batch(std::span<const double> windows) const {
  ForwardCache cache;
  return forward(windows, cache);
}

TrainedModel build_model(const ModelConfig &config) {
  return TrainedModel{RecurrentModel(config), MinMaxScaler(0.0, 1.0)};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'H', 'Z', 'B', '1'};

void put_u32(std::ostream &out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i)
    b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_f64(std::ostream &out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint32_t get_u32(std::istream &in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char *>(b), 4))
    throw Error(ErrorCode::BadModelFile, "truncated model file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream &in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char *>(b), 8))
    throw Error(ErrorCode::BadModelFile, "truncated model file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

std::string hex_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", d);
  return buf;
}

} // namespace

void save_model(std::ostream &out, const TrainedModel &model) {
  const ModelConfig &c = model.config();
  out.write(kMagic, 4);
  std::ostringstream h;
  const auto params = model.network.parameters();
  h << "variant=" << to_string(c.variant) << '\n'
    << "bidirectional=" << (c.bidirectional ? 1 : 0) << '\n'
    << "num_layers=" << c.num_layers << '\n'
    << "hidden_units=" << c.hidden_units << '\n'
    << "conv_filters=" << c.conv_filters << '\n'
    << "kernel_width=" << c.kernel_width << '\n'
    << "n_seq=" << c.n_seq << '\n'
    << "cell_activation=" << to_string(c.cell_activation) << '\n'
    << "window_len=" << c.window_len << '\n'
    << "horizon=" << c.horizon << '\n'
    << "seed=" << c.seed << '\n'
    << "scaler_min=" << hex_double(model.scaler.min()) << '\n'
    << "scaler_max=" << hex_double(model.scaler.max()) << '\n'
    << "parameters=" << params.size() << "\n\n";
  out << h.str();
  for (const auto *p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (double v : p->value.values())
      put_f64(out, v);
  }
  if (!out)
    throw Error(ErrorCode::IoError, "failed to write model");
}

TrainedModel load_model(std::istream &in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw Error(ErrorCode::BadModelFile, "missing HZB1 magic");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line) && !line.empty()) {
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::BadModelFile, "malformed header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string &k) -> const std::string & {
    auto it = kv.find(k);
    if (it == kv.end())
      throw Error(ErrorCode::BadModelFile, "header lacks '" + k + "'");
    return it->second;
  };
  auto get_size = [&](const std::string &k) {
    try {
      return static_cast<std::size_t>(std::stoull(get(k)));
    } catch (const std::logic_error &) {
      throw Error(ErrorCode::BadModelFile, "bad value for '" + k + "'");
    }
  };
  ModelConfig c;
  c.variant = parse_variant(get("variant"));
  c.bidirectional = get("bidirectional") == "1";
  c.num_layers = get_size("num_layers");
  c.hidden_units = get_size("hidden_units");
  c.conv_filters = get_size("conv_filters");
  c.kernel_width = get_size("kernel_width");
  c.n_seq = get_size("n_seq");
  c.cell_activation = parse_activation(get("cell_activation"));
  c.window_len = get_size("window_len");
  c.horizon = get_size("horizon");
  c.seed = std::stoull(get("seed"));
  const double smin = std::strtod(get("scaler_min").c_str(), nullptr);
  const double smax = std::strtod(get("scaler_max").c_str(), nullptr);
  const std::size_t count = get_size("parameters");

  TrainedModel model{RecurrentModel(c), MinMaxScaler(smin, smax)};
  if (count != model.network.parameters().size())
    throw Error(ErrorCode::BadModelFile, "parameter count does not match the config");
  for (std::size_t n = 0; n < count; ++n) {
    const std::uint32_t len = get_u32(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len))
      throw Error(ErrorCode::BadModelFile, "truncated parameter name");
    Parameter *p = model.network.find(name);
    if (!p)
      throw Error(ErrorCode::BadModelFile, "unexpected parameter '" + name + "'");
    const std::uint32_t r = get_u32(in), cols = get_u32(in);
    if (r != p->value.rows() || cols != p->value.cols())
      throw Error(ErrorCode::BadModelFile, "shape mismatch for '" + name + "'");
    for (double &v : p->value.values())
      v = get_f64(in);
  }
  return model;
}

void save_model_file(const std::string &path, const TrainedModel &model) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  save_model(out, model);
}

TrainedModel load_model_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  return load_model(in);
}

} // namespace covcast
