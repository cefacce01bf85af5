// SPDX-License-Identifier: Apache-2.0
/**
 * @file   series_io.hpp
 * @brief  WHO-format CSV ingestion, per-country series extraction, chronological
 *         splitting, min-max scaling and sliding-window dataset construction.
 */
#pragma once

#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace covcast {

using Date = std::chrono::sys_days;

/// Accepts ISO "YYYY-MM-DD" and "M/D/YYYY". Throws BadDate.
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Non-fatal diagnostics collected during ingestion and experiments.
using Warnings = std::vector<std::string>;

enum class Column { NewCases, CumulativeCases, NewDeaths, CumulativeDeaths };

/// Accepts the snake_case names (new_cases, cumulative_deaths, ...).
Column parse_column(std::string_view name);
std::string_view to_string(Column c) noexcept;
bool is_cumulative(Column c) noexcept;

struct SeriesRecord {
  Date date_reported{};
  std::string country_code;
  std::string country;
  std::string who_region;
  long long new_cases = 0;
  long long cumulative_cases = 0;
  long long new_deaths = 0;
  long long cumulative_deaths = 0;

  long long value(Column c) const noexcept;
};

/**
 * Parses a WHO daily export. Header names are matched case-insensitively and
 * in any order; extra columns are ignored. Rows come back sorted by
 * (country_code, date). Decreasing cumulative counts are reported through
 * @p warnings, duplicate (country, date) pairs are rejected.
 */
std::vector<SeriesRecord> parse_who_csv(std::istream &in,
                                        Warnings *warnings = nullptr);
std::vector<SeriesRecord> parse_who_csv_file(const std::string &path,
                                             Warnings *warnings = nullptr);

/// Writes records in WHO column order with ISO dates.
void write_who_csv(std::ostream &out, std::span<const SeriesRecord> records);

struct DateRange {
  Date first;
  Date last; // inclusive
};

struct TimeSeries {
  std::string country_code;
  Column column = Column::CumulativeCases;
  Date start_date{};
  std::vector<double> values; // values[i] belongs to start_date + i days

  std::size_t size() const noexcept { return values.size(); }
  Date end_date() const noexcept {
    return start_date + std::chrono::days{static_cast<long>(values.size()) - 1};
  }
  Date date_at(std::size_t i) const noexcept {
    return start_date + std::chrono::days{static_cast<long>(i)};
  }
};

/**
 * Gap-free daily series for one country and column. Missing interior dates
 * are forward-filled and reported through @p warnings. Without a range the
 * country's full span is used.
 */
TimeSeries extract_series(std::span<const SeriesRecord> records,
                          std::string_view country_code, Column column,
                          std::optional<DateRange> range = std::nullopt,
                          Warnings *warnings = nullptr);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// test = ceil((1 - train_frac) * len), validation = floor(val_frac * train block).
SplitSizes split_sizes(std::size_t len, double train_frac, double val_frac_of_train);

struct SeriesSplit {
  SplitSizes sizes;
  std::vector<double> train;
  std::vector<double> validation;
  std::vector<double> test;
};

SeriesSplit split_series(std::span<const double> values, double train_frac,
                         double val_frac_of_train);

class MinMaxScaler {
public:
  MinMaxScaler() = default;
  MinMaxScaler(double min, double max);

  /// Throws ConstantSeries when the values span no range.
  static MinMaxScaler fit(std::span<const double> values);

  double min() const noexcept { return min_; }
  double max() const noexcept { return max_; }

  double apply(double x) const noexcept { return (x - min_) / (max_ - min_); }
  double invert(double y) const noexcept { return y * (max_ - min_) + min_; }
  std::vector<double> apply(std::span<const double> xs) const;
  std::vector<double> invert(std::span<const double> ys) const;

private:
  double min_ = 0.0;
  double max_ = 1.0;
};

/// Supervised pairs: inputs row i is values[i .. i+W-1], target is values[i+W-1+h].
struct WindowedDataset {
  std::size_t window_len = 0;
  std::size_t horizon = 0;
  std::vector<double> inputs; // row-major, size() x window_len
  std::vector<double> targets;
  std::vector<std::size_t> origins; // index of the last window element

  std::size_t size() const noexcept { return targets.size(); }
  std::span<const double> window(std::size_t i) const noexcept {
    return {inputs.data() + i * window_len, window_len};
  }
};

WindowedDataset build_windows(std::span<const double> values, std::size_t window_len,
                              std::size_t horizon, std::size_t index_offset = 0);

} // namespace covcast
