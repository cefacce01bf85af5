// SPDX-License-Identifier: Apache-2.0
/**
 * @file   stats.hpp
 * @brief  Forecast error metrics, absolute-error histograms, score ranking and
 *         the Friedman / Iman-Davenport comparison of several models over
 *         several datasets.
 */
#pragma once

#include "covcast/matrix.hpp"
#include "covcast/series_io.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace covcast {

// ---------------------------------------------------------------------------
// Metrics. Logarithms are log(1 + x) so zero counts are legal.

/// mean (log1p(y) - log1p(y_hat))^2. Throws NegativeValue / LengthMismatch.
double msle(std::span<const double> actual, std::span<const double> predicted);

struct MapeResult {
  double value = 0.0; // percent
  std::size_t skipped = 0; // terms with actual == 0
};

/// 100 * mean |y - y_hat| / |y| over the terms with y != 0.
MapeResult mape(std::span<const double> actual, std::span<const double> predicted);

double rmsle(std::span<const double> actual, std::span<const double> predicted);

/// 1 - Var(y_hat - y) / Var(y), population variances.
double explained_variance(std::span<const double> actual, std::span<const double> predicted);

struct Histogram {
  std::vector<double> edges; // num_bins + 1, equal width over [0, max error]
  std::vector<std::size_t> counts;
};

/// Bins are right-closed (lo, hi]; the first bin also holds zero.
Histogram abs_error_histogram(std::span<const double> actual, std::span<const double> predicted,
                              std::size_t num_bins);

// ---------------------------------------------------------------------------
// Reports and scores

enum class ScoreMode {
  Published, // mean of (MSLE, MAPE, RMSLE, EV) as used for the published ranking
  Corrected  // mean of (MSLE, MAPE, RMSLE, 1 - EV); all terms lower-is-better
};

struct MetricReport {
  std::string dataset_id;
  std::string model_id;
  std::string seed; // decimal seed, or "mean" for a seed-averaged row
  double msle = 0.0;
  double mape = 0.0;
  double rmsle = 0.0;
  double ev = 0.0;
  double aggregate_score = 0.0;
};

/// Throws MissingMetric when any of the four metrics is NaN.
double aggregate_score(const MetricReport &r, ScoreMode mode = ScoreMode::Published);

/// Fills all four metrics and the aggregate score. Skipped MAPE terms are
/// recorded in @p warnings.
MetricReport evaluate_forecast(std::span<const double> actual, std::span<const double> predicted,
                               std::string dataset_id, std::string model_id, std::string seed,
                               ScoreMode mode = ScoreMode::Published,
                               Warnings *warnings = nullptr);

/// Element-wise mean of several reports (same dataset/model), seed = "mean".
MetricReport mean_report(std::span<const MetricReport> reports,
                         ScoreMode mode = ScoreMode::Published);

// ---------------------------------------------------------------------------
// Ranking and the Friedman test

struct RankTable {
  std::vector<std::string> datasets;
  std::vector<std::string> models;
  Matrix ranks; // datasets x models
  std::vector<double> average_ranks;

  std::size_t num_datasets() const noexcept { return datasets.size(); }
  std::size_t num_models() const noexcept { return models.size(); }
};

/// Ranks each row of an N x k score matrix (lower score = rank 1). Ties share
/// the average of the tied positions.
RankTable rank_models(const Matrix &scores, std::vector<std::string> datasets,
                      std::vector<std::string> models);

/// Average ranks of the columns of a rank matrix.
std::vector<double> average_ranks(const Matrix &ranks);

/// chi2_F = 12N / (k(k+1)) * (sum R_j^2 - k(k+1)^2 / 4). Throws DegenerateTable.
double friedman_statistic(std::span<const double> average_ranks, std::size_t num_datasets);
double friedman_statistic(const RankTable &table);

/// F_F = (N-1) chi2_F / (N(k-1) - chi2_F). Throws DegenerateDenominator.
double iman_davenport(double chi2_f, std::size_t num_datasets, std::size_t num_models);

/// CDF of the F(d1, d2) distribution.
double f_cdf(double x, double d1, double d2);

/// (1 - alpha) quantile of F(d1, d2) by bisection on f_cdf.
double f_critical(double alpha, double d1, double d2);

struct FriedmanResult {
  std::size_t num_datasets = 0;
  std::size_t num_models = 0;
  double chi2_f = 0.0;
  double f_f = 0.0;
  std::size_t df1 = 0;
  std::size_t df2 = 0;
  double alpha = 0.05;
  double critical_value = 0.0;
  bool reject_null = false;
};

FriedmanResult friedman_test(std::span<const double> average_ranks, std::size_t num_datasets,
                             double alpha);
FriedmanResult friedman_test(const RankTable &table, double alpha);

/// Index of the model with the lowest average rank (first one on ties).
std::size_t best_model(std::span<const double> average_ranks);

} // namespace covcast
