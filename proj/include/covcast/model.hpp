// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  LSTM, GRU and Conv-LSTM stacks with explicit backpropagation
 *         through time, optional bidirectional pairing and a scalar head.
 *
 * All cells operate on "row-expanded" batches: a state is an R x F matrix
 * where R = batch * positions. LSTM and GRU have one position per sample.
 * Conv-LSTM splits a window of W values into n_seq sub-steps of P = W/n_seq
 * positions and replaces every affine map with a width-k convolution along
 * the position axis ("same" padding, extra zero on the right for even k).
 * A convolution is an im2col gather followed by a matrix product, which lets
 * LSTM reuse the Conv-LSTM code as the k = 1, P = 1 case.
 *
 * Gate order is f, i, o, g for LSTM cells and z, r, h for GRU cells.
 */
#pragma once

#include "covcast/matrix.hpp"
#include "covcast/nn.hpp"
#include "covcast/series_io.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace covcast {

enum class Variant { Lstm, Gru, ConvLstm };

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v) noexcept;

struct ModelConfig {
  Variant variant = Variant::Lstm;
  bool bidirectional = false;
  std::size_t num_layers = 3;
  std::size_t hidden_units = 50;
  std::size_t conv_filters = 64;
  std::size_t kernel_width = 2;
  std::size_t n_seq = 2;
  Activation cell_activation = Activation::Relu;
  std::size_t window_len = 4;
  std::size_t horizon = 1;
  std::uint64_t seed = 42;

  /// Throws InvalidConfig or IndivisibleWindow.
  void validate() const;

  bool is_conv() const noexcept { return variant == Variant::ConvLstm; }
  std::size_t directions() const noexcept { return bidirectional ? 2 : 1; }
  /// Recurrent steps per window.
  std::size_t steps() const noexcept { return is_conv() ? n_seq : window_len; }
  /// Spatial positions per step.
  std::size_t positions() const noexcept { return is_conv() ? window_len / n_seq : 1; }
  std::size_t taps() const noexcept { return is_conv() ? kernel_width : 1; }
  std::size_t state_width() const noexcept { return is_conv() ? conv_filters : hidden_units; }
  /// Width of the output head input (final states of all directions, flattened).
  std::size_t head_inputs() const noexcept {
    return directions() * positions() * state_width();
  }
  /// Display name, e.g. "Bi-Conv-LSTM".
  std::string model_id() const;
};

struct CellState {
  Matrix h;
  Matrix c; // LSTM / Conv-LSTM only
};

/// Parameters of one LSTM or Conv-LSTM layer. W[g] is (taps*in) x F,
/// U[g] is (taps*F) x F, b[g] is 1 x F.
struct LstmLayer {
  std::size_t in_channels = 0;
  std::size_t units = 0;
  std::size_t taps = 1;
  std::size_t positions = 1;
  std::array<Parameter, 4> W, U, b;
};

/// Parameters of one GRU layer. W[g] is in x F, U[g] is F x F, b[g] is 1 x F.
struct GruLayer {
  std::size_t in_channels = 0;
  std::size_t units = 0;
  std::array<Parameter, 3> W, U, b;
};

/// Width-`taps` "same" convolution over the position axis of an R x C
/// row-expanded map (R = batch * positions) with an (taps*C) x F kernel.
Matrix conv_same(const Matrix &x, std::size_t positions, std::size_t taps, const Matrix &kernel);

/// One cell update for a batch. x is R x in_channels, states are R x F.
CellState lstm_step(const LstmLayer &layer, const Matrix &x, const CellState &prev,
                    Activation act);
CellState convlstm_step(const LstmLayer &layer, const Matrix &x, const CellState &prev,
                        Activation act);
Matrix gru_step(const GruLayer &layer, const Matrix &x, const Matrix &h_prev, Activation act);

/// Intermediate values of one forward pass, consumed by backward().
class ForwardCache {
public:
  bool empty() const noexcept { return batch_ == 0; }
  std::size_t batch() const noexcept { return batch_; }
  /// Hidden sequence (one R x F matrix per step) of a layer.
  const std::vector<Matrix> &hidden_sequence(std::size_t direction, std::size_t layer) const {
    return layers_.at(direction).at(layer).h;
  }
  /// batch x head_inputs matrix fed to the output head.
  const Matrix &head_input() const noexcept { return features_; }
  const std::vector<double> &predictions() const noexcept { return predictions_; }

private:
  friend class RecurrentModel;

  struct Layer {
    std::vector<Matrix> in;    // layer input per step (R x in)
    std::vector<Matrix> xcol;  // im2col(input), LSTM only
    std::vector<Matrix> hcol;  // im2col(previous h) for LSTM, previous h for GRU
    std::array<std::vector<Matrix>, 4> gate;
    std::vector<Matrix> c, actc; // LSTM
    std::vector<Matrix> rh;      // GRU: r * h_prev
    std::vector<Matrix> h;
  };

  std::size_t batch_ = 0;
  std::vector<std::vector<Layer>> layers_; // [direction][layer]
  Matrix features_;
  std::vector<double> predictions_;
};

class RecurrentModel {
public:
  RecurrentModel() = default;
  /// Allocates and initialises every parameter from (config.seed, name).
  explicit RecurrentModel(const ModelConfig &config);

  const ModelConfig &config() const noexcept { return config_; }

  std::vector<Parameter *> parameters();
  std::vector<const Parameter *> parameters() const;
  Parameter *find(std::string_view name);
  std::size_t parameter_count() const;
  void zero_grad();

  /// Predictions for `count` windows stored row-major in `windows`.
  std::vector<double> forward(std::span<const double> windows, ForwardCache &cache) const;
  /// Adds d(loss)/d(param) to every Parameter::grad given d(loss)/d(prediction).
  void backward(const ForwardCache &cache, std::span<const double> dpred);

  /// Batch-mean MSE of the forward pass; gradients are accumulated.
  double loss_and_gradients(std::span<const double> windows, std::span<const double> targets,
                            ForwardCache &cache);
  double loss(std::span<const double> windows, std::span<const double> targets) const;

  double predict(std::span<const double> window) const;
  std::vector<double> predict_batch(std::span<const double> windows) const;

  /// Access for tests that reach into a specific layer.
  std::vector<LstmLayer> &lstm_layers(std::size_t direction) { return lstm_.at(direction); }
  std::vector<GruLayer> &gru_layers(std::size_t direction) { return gru_.at(direction); }
  Parameter &head_weights() noexcept { return head_w_; }
  Parameter &head_bias() noexcept { return head_b_; }

private:
  void build_inputs(std::span<const double> windows, std::size_t batch, bool reversed,
                    std::vector<Matrix> &steps) const;

  ModelConfig config_;
  std::vector<std::vector<LstmLayer>> lstm_; // [direction][layer]
  std::vector<std::vector<GruLayer>> gru_;
  Parameter head_w_;
  Parameter head_b_;
};

/// A network together with the scaler that maps raw counts to its inputs.
struct TrainedModel {
  RecurrentModel network;
  MinMaxScaler scaler;

  const ModelConfig &config() const noexcept { return network.config(); }
};

/// Validates the config and returns an untrained model with an identity scaler.
TrainedModel build_model(const ModelConfig &config);

/// "HZB1" container: key=value header (config and scaler), blank line, then
/// per parameter: u32 name length, name bytes, u32 rows, u32 cols, rows*cols
/// little-endian IEEE-754 doubles.
void save_model(std::ostream &out, const TrainedModel &model);
TrainedModel load_model(std::istream &in);
void save_model_file(const std::string &path, const TrainedModel &model);
TrainedModel load_model_file(const std::string &path);

} // namespace covcast
