// SPDX-License-Identifier: Apache-2.0
#include "covcast/stats.hpp"

#include "covcast/error.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace covcast {

namespace {

void check_pair(std::span<const double> actual, std::span<const double> predicted,
                const char *what) {
  if (actual.size() != predicted.size())
    throw Error(ErrorCode::LengthMismatch, std::string(what) + ": " +
                                               std::to_string(actual.size()) + " actuals vs " +
                                               std::to_string(predicted.size()) + " predictions");
  if (actual.empty())
    throw Error(ErrorCode::EmptyInput, std::string(what) + " of no samples");
}

double population_variance(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs)
    ss += (x - mean) * (x - mean);
  return ss / n;
}

} // namespace

double msle(std::span<const double> actual, std::span<const double> predicted) {
  check_pair(actual, predicted, "msle");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] < 0.0 || predicted[i] < 0.0)
      throw Error(ErrorCode::NegativeValue, "msle needs non-negative values, sample " +
                                                std::to_string(i) + " has " +
                                                std::to_string(std::min(actual[i], predicted[i])));
    const double d = std::log1p(actual[i]) - std::log1p(predicted[i]);
    s += d * d;
  }
  return s / static_cast<double>(actual.size());
}

MapeResult mape(std::span<const double> actual, std::span<const double> predicted) {
  check_pair(actual, predicted, "mape");
  MapeResult r;
  double s = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] == 0.0) {
      ++r.skipped;
      continue;
    }
    s += std::abs(actual[i] - predicted[i]) / std::abs(actual[i]);
    ++used;
  }
  if (used == 0)
    throw Error(ErrorCode::AllActualsZero, "mape undefined: every actual value is zero");
  r.value = 100.0 * s / static_cast<double>(used);
  return r;
}

double rmsle(std::span<const double> actual, std::span<const double> predicted) {
  return std::sqrt(msle(actual, predicted));
}

double explained_variance(std::span<const double> actual, std::span<const double> predicted) {
  check_pair(actual, predicted, "explained variance");
  if (actual.size() < 2)
    throw Error(ErrorCode::ConstantActuals, "explained variance needs at least two samples");
  const double var_y = population_variance(actual);
  if (!(var_y > 0.0))
    throw Error(ErrorCode::ConstantActuals, "actual values have zero variance");
  std::vector<double> resid(actual.size());
  for (std::size_t i = 0; i < actual.size(); ++i)
    resid[i] = predicted[i] - actual[i];
  return 1.0 - population_variance(resid) / var_y;
}

Histogram abs_error_histogram(std::span<const double> actual, std::span<const double> predicted,
                              std::size_t num_bins) {
  check_pair(actual, predicted, "histogram");
  if (num_bins == 0)
    throw Error(ErrorCode::InvalidValue, "histogram needs at least one bin");
  std::vector<double> err(actual.size());
  for (std::size_t i = 0; i < err.size(); ++i)
    err[i] = std::abs(actual[i] - predicted[i]);
  const double max_err = *std::max_element(err.begin(), err.end());
  const double hi = max_err > 0.0 ? max_err : 1.0;
  const double width = hi / static_cast<double>(num_bins);

  Histogram h;
  h.edges.resize(num_bins + 1);
  for (std::size_t b = 0; b <= num_bins; ++b)
    h.edges[b] = b == num_bins ? hi : width * static_cast<double>(b);
  h.counts.assign(num_bins, 0);
  for (double e : err) {
    auto b = static_cast<long>(std::ceil(e / width)) - 1;
    b = std::clamp(b, 0L, static_cast<long>(num_bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

// ---------------------------------------------------------------------------

double aggregate_score(const MetricReport &r, ScoreMode mode) {
  if (std::isnan(r.msle) || std::isnan(r.mape) || std::isnan(r.rmsle) || std::isnan(r.ev))
    throw Error(ErrorCode::MissingMetric,
                "report " + r.dataset_id + " / " + r.model_id + " lacks a metric value");
  const double ev_term = mode == ScoreMode::Published ? r.ev : 1.0 - r.ev;
  return (r.msle + r.mape + r.rmsle + ev_term) / 4.0;
}

MetricReport evaluate_forecast(std::span<const double> actual, std::span<const double> predicted,
                               std::string dataset_id, std::string model_id, std::string seed,
                               ScoreMode mode, Warnings *warnings) {
  MetricReport r;
  r.dataset_id = std::move(dataset_id);
  r.model_id = std::move(model_id);
  r.seed = std::move(seed);
  // Negative network outputs are legal forecasts but have no log; clamp them
  // at zero for the log metrics only.
  std::vector<double> clamped(predicted.begin(), predicted.end());
  std::size_t negatives = 0;
  for (double &x : clamped)
    if (x < 0.0) {
      x = 0.0;
      ++negatives;
    }
  if (negatives && warnings)
    warnings->push_back(r.dataset_id + " / " + r.model_id + " seed " + r.seed + ": " +
                        std::to_string(negatives) +
                        " negative predictions clamped to 0 for MSLE/RMSLE");
  r.msle = msle(actual, clamped);
  r.rmsle = std::sqrt(r.msle);
  const auto m = mape(actual, predicted);
  r.mape = m.value;
  if (m.skipped && warnings)
    warnings->push_back(r.dataset_id + " / " + r.model_id + " seed " + r.seed + ": MAPE skipped " +
                        std::to_string(m.skipped) + " zero actual values");
  r.ev = explained_variance(actual, predicted);
  r.aggregate_score = aggregate_score(r, mode);
  return r;
}

MetricReport mean_report(std::span<const MetricReport> reports, ScoreMode mode) {
  if (reports.empty())
    throw Error(ErrorCode::EmptyInput, "mean of no reports");
  MetricReport m;
  m.dataset_id = reports.front().dataset_id;
  m.model_id = reports.front().model_id;
  m.seed = "mean";
  for (const auto &r : reports) {
    m.msle += r.msle;
    m.mape += r.mape;
    m.rmsle += r.rmsle;
    m.ev += r.ev;
  }
  const double n = static_cast<double>(reports.size());
  m.msle /= n;
  m.mape /= n;
  m.rmsle /= n;
  m.ev /= n;
  m.aggregate_score = aggregate_score(m, mode);
  return m;
}

// ---------------------------------------------------------------------------

RankTable rank_models(const Matrix &scores, std::vector<std::string> datasets,
                      std::vector<std::string> models) {
  if (datasets.size() != scores.rows() || models.size() != scores.cols())
    throw Error(ErrorCode::ShapeMismatch, "rank table labels do not match the score matrix");
  const std::size_t k = scores.cols();
  RankTable t;
  t.datasets = std::move(datasets);
  t.models = std::move(models);
  t.ranks = Matrix(scores.rows(), k);
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores(i, a) < scores(i, b); });
    for (std::size_t pos = 0; pos < k;) {
      std::size_t end = pos + 1;
      while (end < k && scores(i, order[end]) == scores(i, order[pos]))
        ++end;
      // Positions pos..end-1 (0-based) share rank mean(pos+1 .. end).
      const double shared = static_cast<double>(pos + 1 + end) / 2.0;
      for (std::size_t q = pos; q < end; ++q)
        t.ranks(i, order[q]) = shared;
      pos = end;
    }
  }
  t.average_ranks = average_ranks(t.ranks);
  return t;
}

std::vector<double> average_ranks(const Matrix &ranks) {
  std::vector<double> avg(ranks.cols(), 0.0);
  for (std::size_t i = 0; i < ranks.rows(); ++i)
    for (std::size_t j = 0; j < ranks.cols(); ++j)
      avg[j] += ranks(i, j);
  for (double &a : avg)
    a /= static_cast<double>(ranks.rows());
  return avg;
}

double friedman_statistic(std::span<const double> avg, std::size_t num_datasets) {
  const std::size_t k = avg.size();
  if (num_datasets < 2 || k < 2)
    throw Error(ErrorCode::DegenerateTable, "Friedman test needs at least 2 datasets and 2 "
                                            "models, got N=" +
                                                std::to_string(num_datasets) +
                                                ", k=" + std::to_string(k));
  const double N = static_cast<double>(num_datasets), kk = static_cast<double>(k);
  double sum_sq = 0.0;
  for (double r : avg)
    sum_sq += r * r;
  return 12.0 * N / (kk * (kk + 1.0)) * (sum_sq - kk * (kk + 1.0) * (kk + 1.0) / 4.0);
}

double friedman_statistic(const RankTable &table) {
  return friedman_statistic(table.average_ranks, table.num_datasets());
}

double iman_davenport(double chi2_f, std::size_t num_datasets, std::size_t num_models) {
  const double N = static_cast<double>(num_datasets), k = static_cast<double>(num_models);
  const double denom = N * (k - 1.0) - chi2_f;
  if (!(denom > 0.0))
    throw Error(ErrorCode::DegenerateDenominator,
                "N(k-1) - chi2_F = " + std::to_string(denom) + " is not positive");
  return (N - 1.0) * chi2_f / denom;
}

double f_cdf(double x, double d1, double d2) {
  if (x <= 0.0)
    return 0.0;
  if (std::isinf(x))
    return 1.0;
  return boost::math::ibeta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2));
}

double f_critical(double alpha, double d1, double d2) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(ErrorCode::InvalidValue, "alpha must lie in (0, 1)");
  if (!(d1 > 0.0 && d2 > 0.0))
    throw Error(ErrorCode::InvalidValue, "degrees of freedom must be positive");
  const double target = 1.0 - alpha;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; f_cdf(hi, d1, d2) < target; ++i) {
    if (i > 200)
      throw Error(ErrorCode::ConvergenceFailure, "no upper bracket for the F quantile");
    lo = hi;
    hi *= 2.0;
  }
  if (f_cdf(hi, d1, d2) == target)
    return hi;
  for (int i = 0; hi - lo > 1e-8 * std::max(1.0, lo); ++i) {
    if (i > 400)
      throw Error(ErrorCode::ConvergenceFailure, "F quantile bisection did not converge");
    const double mid = 0.5 * (lo + hi);
    const double c = f_cdf(mid, d1, d2);
    if (c == target)
      return mid;
    (c < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

FriedmanResult friedman_test(std::span<const double> avg, std::size_t num_datasets,
                             double alpha) {
  FriedmanResult r;
  r.num_datasets = num_datasets;
  r.num_models = avg.size();
  r.chi2_f = friedman_statistic(avg, num_datasets);
  r.f_f = iman_davenport(r.chi2_f, num_datasets, avg.size());
  r.df1 = avg.size() - 1;
  r.df2 = (avg.size() - 1) * (num_datasets - 1);
  r.alpha = alpha;
  r.critical_value =
      f_critical(alpha, static_cast<double>(r.df1), static_cast<double>(r.df2));
  r.reject_null = r.f_f > r.critical_value;
  return r;
}

FriedmanResult friedman_test(const RankTable &table, double alpha) {
  return friedman_test(table.average_ranks, table.num_datasets(), alpha);
}

std::size_t best_model(std::span<const double> avg) {
  return static_cast<std::size_t>(std::min_element(avg.begin(), avg.end()) - avg.begin());
}

} // namespace covcast
