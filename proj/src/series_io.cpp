// SPDX-License-Identifier: Apache-2.0
#include "covcast/series_io.hpp"

#include "covcast/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace covcast {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto &c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<int> to_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    return std::nullopt;
  return v;
}

// Splits one CSV line, honouring double-quoted fields (WHO country names
// such as "Bonaire, Sint Eustatius and Saba" contain commas).
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

constexpr std::array<std::string_view, 8> kWhoColumns = {
    "date_reported", "country_code", "country",    "who_region",
    "new_cases",     "cumulative_cases", "new_deaths", "cumulative_deaths"};

long long parse_count(std::string_view field, std::size_t row, std::string_view column) {
  auto s = trim(field);
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size())
    throw Error(ErrorCode::BadCount, "row " + std::to_string(row) + ", column " +
                                         std::string(column) + ": '" +
                                         std::string(s) + "' is not an integer");
  return v;
}

std::string csv_quote(const std::string &s) {
  if (s.find_first_of(",\"") == std::string::npos)
    return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"')
      out += "\"\"";
    else
      out.push_back(c);
  }
  out += '"';
  return out;
}

} // namespace

Date parse_date(std::string_view text) {
  using namespace std::chrono;
  auto s = trim(text);
  std::optional<int> y, m, d;
  if (auto dash = s.find('-'); dash != std::string_view::npos) {
    auto dash2 = s.find('-', dash + 1);
    if (dash2 != std::string_view::npos) {
      y = to_int(s.substr(0, dash));
      m = to_int(s.substr(dash + 1, dash2 - dash - 1));
      d = to_int(s.substr(dash2 + 1));
    }
  } else if (auto slash = s.find('/'); slash != std::string_view::npos) {
    auto slash2 = s.find('/', slash + 1);
    if (slash2 != std::string_view::npos) {
      m = to_int(s.substr(0, slash));
      d = to_int(s.substr(slash + 1, slash2 - slash - 1));
      y = to_int(s.substr(slash2 + 1));
    }
  }
  if (!y || !m || !d || *m < 1 || *m > 12 || *d < 1 || *d > 31)
    throw Error(ErrorCode::BadDate, "cannot parse date '" + std::string(s) + "'");
  year_month_day ymd{year{*y}, month{static_cast<unsigned>(*m)},
                     day{static_cast<unsigned>(*d)}};
  if (!ymd.ok())
    throw Error(ErrorCode::BadDate, "invalid calendar date '" + std::string(s) + "'");
  return sys_days{ymd};
}

std::string format_date(Date d) {
  using namespace std::chrono;
  year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

Column parse_column(std::string_view name) {
  auto n = lower(trim(name));
  if (n == "new_cases")
    return Column::NewCases;
  if (n == "cumulative_cases")
    return Column::CumulativeCases;
  if (n == "new_deaths")
    return Column::NewDeaths;
  if (n == "cumulative_deaths")
    return Column::CumulativeDeaths;
  throw Error(ErrorCode::InvalidValue, "unknown series column '" + std::string(name) + "'");
}

std::string_view to_string(Column c) noexcept {
  switch (c) {
  case Column::NewCases:
    return "new_cases";
  case Column::CumulativeCases:
    return "cumulative_cases";
  case Column::NewDeaths:
    return "new_deaths";
  case Column::CumulativeDeaths:
    return "cumulative_deaths";
  }
  return "?";
}

bool is_cumulative(Column c) noexcept {
  return c == Column::CumulativeCases || c == Column::CumulativeDeaths;
}

long long SeriesRecord::value(Column c) const noexcept {
  switch (c) {
  case Column::NewCases:
    return new_cases;
  case Column::CumulativeCases:
    return cumulative_cases;
  case Column::NewDeaths:
    return new_deaths;
  case Column::CumulativeDeaths:
    return cumulative_deaths;
  }
  return 0;
}

std::vector<SeriesRecord> parse_who_csv(std::istream &in, Warnings *warnings) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::MissingColumn, "empty input, no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);
  if (!line.empty() && line.back() == '\r')
    line.pop_back();

  auto header = split_csv_line(line);
  std::array<std::size_t, kWhoColumns.size()> index{};
  for (std::size_t c = 0; c < kWhoColumns.size(); ++c) {
    auto it = std::find_if(header.begin(), header.end(), [&](const std::string &h) {
      return lower(trim(h)) == kWhoColumns[c];
    });
    if (it == header.end())
      throw Error(ErrorCode::MissingColumn,
                  "header lacks required column '" + std::string(kWhoColumns[c]) + "'");
    index[c] = static_cast<std::size_t>(it - header.begin());
  }
  const std::size_t needed = *std::max_element(index.begin(), index.end()) + 1;

  std::vector<SeriesRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (trim(line).empty())
      continue;
    auto f = split_csv_line(line);
    if (f.size() < needed)
      throw Error(ErrorCode::BadCount, "row " + std::to_string(row) + " has " +
                                           std::to_string(f.size()) + " fields, expected " +
                                           std::to_string(needed));
    SeriesRecord r;
    try {
      r.date_reported = parse_date(f[index[0]]);
    } catch (const Error &e) {
      throw Error(ErrorCode::BadDate, "row " + std::to_string(row) + ": " + e.what());
    }
    r.country_code = std::string(trim(f[index[1]]));
    r.country = std::string(trim(f[index[2]]));
    r.who_region = std::string(trim(f[index[3]]));
    r.new_cases = parse_count(f[index[4]], row, kWhoColumns[4]);
    r.cumulative_cases = parse_count(f[index[5]], row, kWhoColumns[5]);
    r.new_deaths = parse_count(f[index[6]], row, kWhoColumns[6]);
    r.cumulative_deaths = parse_count(f[index[7]], row, kWhoColumns[7]);
    records.push_back(std::move(r));
  }

  std::stable_sort(records.begin(), records.end(), [](const auto &a, const auto &b) {
    if (a.country_code != b.country_code)
      return a.country_code < b.country_code;
    return a.date_reported < b.date_reported;
  });

  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto &prev = records[i - 1];
    const auto &cur = records[i];
    if (prev.country_code != cur.country_code)
      continue;
    if (prev.date_reported == cur.date_reported)
      throw Error(ErrorCode::BadDate, "duplicate record for " + cur.country_code + " on " +
                                          format_date(cur.date_reported));
    if (warnings && (cur.cumulative_cases < prev.cumulative_cases ||
                     cur.cumulative_deaths < prev.cumulative_deaths))
      warnings->push_back("cumulative count decreases for " + cur.country_code + " on " +
                          format_date(cur.date_reported));
  }
  return records;
}

std::vector<SeriesRecord> parse_who_csv_file(const std::string &path, Warnings *warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  return parse_who_csv(in, warnings);
}

void write_who_csv(std::ostream &out, std::span<const SeriesRecord> records) {
  out << "Date_reported,Country_code,Country,WHO_region,New_cases,Cumulative_cases,"
         "New_deaths,Cumulative_deaths\n";
  for (const auto &r : records) {
    out << format_date(r.date_reported) << ',' << csv_quote(r.country_code) << ','
        << csv_quote(r.country) << ',' << csv_quote(r.who_region) << ',' << r.new_cases
        << ',' << r.cumulative_cases << ',' << r.new_deaths << ',' << r.cumulative_deaths
        << '\n';
  }
}

TimeSeries extract_series(std::span<const SeriesRecord> records, std::string_view country_code,
                          Column column, std::optional<DateRange> range, Warnings *warnings) {
  auto first = std::find_if(records.begin(), records.end(),
                            [&](const auto &r) { return r.country_code == country_code; });
  if (first == records.end())
    throw Error(ErrorCode::UnknownCountry,
                "no records for country '" + std::string(country_code) + "'");
  auto last = std::find_if(first, records.end(),
                           [&](const auto &r) { return r.country_code != country_code; });

  std::vector<const SeriesRecord *> rows;
  for (auto it = first; it != last; ++it) {
    if (range && (it->date_reported < range->first || it->date_reported > range->last))
      continue;
    rows.push_back(&*it);
  }
  if (rows.empty())
    throw Error(ErrorCode::EmptyRange, "no " + std::string(country_code) +
                                           " records inside the requested date range");

  TimeSeries ts;
  ts.country_code = std::string(country_code);
  ts.column = column;
  ts.start_date = rows.front()->date_reported;
  ts.values.push_back(static_cast<double>(rows.front()->value(column)));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    Date expected = ts.start_date + std::chrono::days{static_cast<long>(ts.values.size())};
    while (expected < rows[i]->date_reported) {
      if (warnings)
        warnings->push_back("missing date " + format_date(expected) + " for " +
                            ts.country_code + ", forward-filled");
      ts.values.push_back(ts.values.back());
      expected += std::chrono::days{1};
    }
    ts.values.push_back(static_cast<double>(rows[i]->value(column)));
  }
  return ts;
}

SplitSizes split_sizes(std::size_t len, double train_frac, double val_frac_of_train) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw Error(ErrorCode::InvalidFraction,
                "train fraction must lie in (0, 1), got " + std::to_string(train_frac));
  if (!(val_frac_of_train >= 0.0 && val_frac_of_train < 1.0))
    throw Error(ErrorCode::InvalidFraction, "validation fraction must lie in [0, 1), got " +
                                                std::to_string(val_frac_of_train));
  // The slack absorbs representation error, e.g. (1 - 0.7) * 300 = 90.00000000000001.
  constexpr double slack = 1e-9;
  const double n = static_cast<double>(len);
  SplitSizes s;
  s.test = static_cast<std::size_t>(std::ceil((1.0 - train_frac) * n - slack));
  s.test = std::min(s.test, len);
  const std::size_t block = len - s.test;
  s.validation = static_cast<std::size_t>(
      std::floor(val_frac_of_train * static_cast<double>(block) + slack));
  s.train = block - s.validation;
  if (s.test == 0 || s.train == 0 || (val_frac_of_train > 0.0 && s.validation == 0))
    throw Error(ErrorCode::TooShort, "series of length " + std::to_string(len) +
                                         " leaves an empty split");
  return s;
}

SeriesSplit split_series(std::span<const double> values, double train_frac,
                         double val_frac_of_train) {
  SeriesSplit out;
  out.sizes = split_sizes(values.size(), train_frac, val_frac_of_train);
  auto it = values.begin();
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(out.sizes.train));
  it += static_cast<std::ptrdiff_t>(out.sizes.train);
  out.validation.assign(it, it + static_cast<std::ptrdiff_t>(out.sizes.validation));
  it += static_cast<std::ptrdiff_t>(out.sizes.validation);
  out.test.assign(it, values.end());
  return out;
}

MinMaxScaler::MinMaxScaler(double min, double max) : min_(min), max_(max) {
  if (!(max > min))
    throw Error(ErrorCode::ConstantSeries, "scaler range is empty");
}

MinMaxScaler MinMaxScaler::fit(std::span<const double> values) {
  if (values.empty())
    throw Error(ErrorCode::EmptyInput, "cannot fit a scaler on no values");
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo))
    throw Error(ErrorCode::ConstantSeries, "training values are constant (" +
                                               std::to_string(*lo) + ")");
  return MinMaxScaler(*lo, *hi);
}

std::vector<double> MinMaxScaler::apply(std::span<const double> xs) const {
  std::vector<double> out(xs.size());
  std::transform(xs.begin(), xs.end(), out.begin(), [this](double x) { return apply(x); });
  return out;
}

std::vector<double> MinMaxScaler::invert(std::span<const double> ys) const {
  std::vector<double> out(ys.size());
  std::transform(ys.begin(), ys.end(), out.begin(), [this](double y) { return invert(y); });
  return out;
}

WindowedDataset build_windows(std::span<const double> values, std::size_t window_len,
                              std::size_t horizon, std::size_t index_offset) {
  if (window_len == 0 || horizon == 0)
    throw Error(ErrorCode::InvalidValue, "window length and horizon must be positive");
  if (values.size() < window_len + horizon)
    throw Error(ErrorCode::TooShort, "series of length " + std::to_string(values.size()) +
                                         " is shorter than W + h = " +
                                         std::to_string(window_len + horizon));
  WindowedDataset ds;
  ds.window_len = window_len;
  ds.horizon = horizon;
  const std::size_t n = values.size() - window_len - horizon + 1;
  ds.inputs.reserve(n * window_len);
  ds.targets.reserve(n);
  ds.origins.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.inputs.insert(ds.inputs.end(), values.begin() + static_cast<std::ptrdiff_t>(i),
                     values.begin() + static_cast<std::ptrdiff_t>(i + window_len));
    ds.targets.push_back(values[i + window_len - 1 + horizon]);
    ds.origins.push_back(index_offset + i + window_len - 1);
  }
  return ds;
}

} // namespace covcast
