// SPDX-License-Identifier: Apache-2.0
/**
 * @file   bench.hpp
 * @brief  Benchmark configuration, grid orchestration and report output.
 */
#pragma once

#include "covcast/forecast.hpp"
#include "covcast/model.hpp"
#include "covcast/series_io.hpp"
#include "covcast/stats.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace covcast {

struct ModelKind {
  Variant variant = Variant::Lstm;
  bool bidirectional = false;

  friend bool operator==(const ModelKind &, const ModelKind &) = default;
};

/// lstm, gru, conv_lstm, bi_lstm, bi_gru, bi_conv_lstm
ModelKind parse_model_kind(std::string_view name);
std::string model_kind_name(const ModelKind &kind);

struct BenchConfig {
  std::string data_path;
  std::vector<std::string> countries{"AU", "IR"};
  std::vector<Column> targets{Column::CumulativeCases, Column::CumulativeDeaths};
  std::vector<std::size_t> horizons{1, 3, 7};
  std::vector<ModelKind> variants{{Variant::Lstm, false},     {Variant::Gru, false},
                                  {Variant::ConvLstm, false}, {Variant::Lstm, true},
                                  {Variant::Gru, true},       {Variant::ConvLstm, true}};
  std::size_t window_len = 4;
  std::vector<std::uint64_t> seeds{42};
  double train_frac = 0.70;
  double val_frac = 0.20;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::size_t eval_days = 100;
  double alpha = 0.05;
  std::string output_dir = "covcast_out";
  std::size_t jobs = 0; // 0 = one per available execution unit

  std::size_t num_layers = 3;
  std::size_t hidden_units = 50;
  std::size_t conv_filters = 64;
  Activation activation = Activation::Relu;
  ScoreMode score_mode = ScoreMode::Published;
  std::size_t histogram_bins = 10;

  /// Throws InvalidValue / MissingDataPath.
  void validate() const;
};

/// Sets one key from its text value. Throws UnknownKey / InvalidValue.
void apply_setting(BenchConfig &cfg, std::string_view key, std::string_view value);

/// Reads "key = value" lines ('#' comments, comma-separated lists) on top of cfg.
void apply_config_text(BenchConfig &cfg, std::istream &in);
void apply_config_file(BenchConfig &cfg, const std::string &path);

/// Effective configuration as "key = value" lines, readable by apply_config_text.
std::string describe(const BenchConfig &cfg);

struct BenchJob {
  std::string country;
  Column target = Column::CumulativeCases;
  std::size_t horizon = 1;
  ModelKind kind;
  std::uint64_t seed = 0;

  std::string dataset() const { return dataset_id(target, horizon, country); }
  std::string model() const;
};

/// Grid in output order: countries x targets x horizons x variants x seeds.
std::vector<BenchJob> job_grid(const BenchConfig &cfg);

/// "New Cases 1-day AU" + "Bi-GRU" + seed -> "new_cases_1-day_AU__bi-gru__s42"
std::string file_stem(std::string_view dataset, std::string_view model, std::uint64_t seed);

// Report CSV: dataset_id,model_id,seed,msle,mape,rmsle,ev,aggregate_score
void write_report_csv(std::ostream &out, std::span<const MetricReport> rows);
/// Empty metric fields are read as NaN. Throws SchemaMismatch.
std::vector<MetricReport> read_report_csv(std::istream &in);

void write_prediction_data(std::ostream &out, const ForecastRun &run, std::string_view dataset,
                           std::uint64_t seed);
void write_histogram_data(std::ostream &out, const Histogram &hist, std::string_view dataset,
                          std::string_view model, std::uint64_t seed);

/// Scores table (datasets x models) built from report rows. Seed-mean rows
/// are used when present, otherwise per-seed rows are averaged. The aggregate
/// is recomputed from the four metrics when they are all present.
struct ScoreTable {
  std::vector<std::string> datasets;
  std::vector<std::string> models;
  Matrix scores;
};
ScoreTable score_table(std::span<const MetricReport> rows, ScoreMode mode);

/// Rank fixture CSV: "dataset,<model>,..." then one row of ranks per dataset.
/// An optional row labelled "Average Rank" supplies published average ranks.
struct RankFixture {
  RankTable table;
  std::optional<std::vector<double>> published_average;
};
RankFixture read_rank_fixture(std::istream &in);

std::string format_score_table(const ScoreTable &t);
std::string format_rank_table(const RankTable &t);
std::string format_friedman(const FriedmanResult &r, std::span<const std::string> models,
                            std::span<const double> average_ranks);

struct RunOptions {
  bool dry_run = false;
};

/// Runs the whole grid and writes every output file. Returns the process exit
/// status (0 iff every job succeeded). Progress goes to @p log.
int cmd_run(const BenchConfig &cfg, const RunOptions &opts, std::ostream &log);

struct StatsOptions {
  std::string report_path;
  std::string rank_fixture_path;
  double alpha = 0.05;
  ScoreMode score_mode = ScoreMode::Published;
};

int cmd_stats(const StatsOptions &opts, std::ostream &out, std::ostream &err);

} // namespace covcast
