// SPDX-License-Identifier: Apache-2.0
/**
 * @file   forecast.hpp
 * @brief  Mini-batch training and rolling-origin, teacher-forced evaluation of
 *         one model per forecast horizon.
 */
#pragma once

#include "covcast/model.hpp"
#include "covcast/series_io.hpp"
#include "covcast/stats.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace covcast {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  AdamConfig adam;
  bool shuffle_each_epoch = true;
  double clip_norm = 1.0; // global gradient norm; <= 0 disables clipping

  void validate() const;
};

struct EpochLoss {
  std::size_t epoch = 0; // 1-based
  double train_mse = 0.0; // sample-weighted mean of the epoch's mini-batch losses
  double val_mse = 0.0;   // full validation pass after the epoch; NaN without data
};

/**
 * Runs exactly cfg.epochs passes of shuffled mini-batch Adam over @p train.
 * The shuffle stream is derived from the model seed. The final-epoch
 * parameters are kept. Throws DivergedLoss on a non-finite training loss.
 */
std::vector<EpochLoss> train(TrainedModel &model, const WindowedDataset &train,
                             const WindowedDataset *validation, const TrainConfig &cfg);

/// CSV with columns epoch,train_mse,val_mse.
void write_loss_history(std::ostream &out, std::span<const EpochLoss> history);

struct ForecastPoint {
  std::size_t index = 0; // position in the full series
  Date date{};
  double predicted = 0.0;
  double actual = 0.0;
};

struct ForecastRun {
  std::string model_id;
  std::string country_code;
  Column column = Column::CumulativeCases;
  std::size_t horizon = 1;
  std::size_t eval_days = 100;
  std::vector<ForecastPoint> points;

  std::vector<double> actual() const;
  std::vector<double> predicted() const;
};

/// First series index of the evaluation window (the last eval_days values).
std::size_t evaluation_start(std::size_t series_len, std::size_t eval_days);

/**
 * Forecasts the last @p eval_days values of the series at stride h. Target
 * days are start, start + h, ...; each forecast reads the W observed values
 * ending h days before its target, so ceil(eval_days / h) evaluations are
 * made. Outputs are inverse-scaled to original units.
 */
ForecastRun rolling_forecast(const TrainedModel &model, const TimeSeries &series,
                             std::size_t horizon, std::size_t eval_days = 100);

/// "New Cases 1-day AU" style label. Cumulative columns carry the published
/// names ("New Cases", "New Deaths"); daily columns are "Daily Cases" etc.
std::string dataset_id(Column column, std::size_t horizon, std::string_view country_code);

struct ExperimentSpec {
  std::string country_code;
  Column column = Column::CumulativeCases;
  std::optional<DateRange> range;
  ModelConfig model; // seed and horizon are overwritten per run
  std::size_t horizon = 1;
  double train_frac = 0.70;
  double val_frac = 0.20;
  TrainConfig train;
  std::size_t eval_days = 100;
  ScoreMode score_mode = ScoreMode::Published;
  std::vector<std::uint64_t> seeds{42};
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  ForecastRun run;
  std::vector<EpochLoss> history;
  MetricReport report;
  TrainedModel model;
};

struct ExperimentResult {
  std::string dataset_id;
  std::string model_id;
  std::vector<SeedOutcome> outcomes;
  MetricReport mean; // seed-averaged row
  Warnings warnings;
};

/// extract -> split -> scale -> window -> build -> train -> forecast -> metrics
/// for a single seed. Errors are rethrown with the experiment named.
SeedOutcome run_seed(const TimeSeries &series, const ExperimentSpec &spec, std::uint64_t seed,
                     Warnings *warnings = nullptr);

ExperimentResult run_experiment(std::span<const SeriesRecord> records, const ExperimentSpec &spec);

} // namespace covcast
