// SPDX-License-Identifier: Apache-2.0
#include "covcast/bench.hpp"

#include "covcast/error.hpp"

#include <omp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace covcast {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? next : next - pos)));
    if (next == std::string_view::npos)
      break;
    pos = next + 1;
  }
  return out;
}

[[noreturn]] void invalid(std::string_view key, std::string_view value, std::string_view why) {
  throw Error(ErrorCode::InvalidValue, std::string(key) + " = '" + std::string(value) + "': " +
                                           std::string(why));
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  auto v = trim(value);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || p != v.data() + v.size())
    invalid(key, value, "expected a non-negative integer");
  return out;
}

std::size_t parse_positive(std::string_view key, std::string_view value) {
  const auto v = parse_u64(key, value);
  if (v == 0)
    invalid(key, value, "must be positive");
  return static_cast<std::size_t>(v);
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string v(trim(value));
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception &) {
    invalid(key, value, "expected a number");
  }
  if (used != v.size() || !std::isfinite(out))
    invalid(key, value, "expected a number");
  return out;
}

template <class T, class F>
std::vector<T> parse_list(std::string_view key, std::string_view value, F &&item) {
  std::vector<T> out;
  for (auto part : split(value, ',')) {
    if (part.empty())
      invalid(key, value, "empty list element");
    out.push_back(item(part));
  }
  return out;
}

std::string fmt(const char *spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string join(const std::vector<std::string> &xs, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i)
      out += sep;
    out += xs[i];
  }
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto &c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void write_file(const fs::path &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << content))
    throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
}

} // namespace

// ---------------------------------------------------------------------------
// Configuration

ModelKind parse_model_kind(std::string_view name) {
  auto n = lower(trim(name));
  ModelKind k;
  if (n.rfind("bi_", 0) == 0) {
    k.bidirectional = true;
    n = n.substr(3);
  }
  k.variant = parse_variant(n);
  return k;
}

std::string model_kind_name(const ModelKind &kind) {
  return (kind.bidirectional ? "bi_" : "") + std::string(to_string(kind.variant));
}

void apply_setting(BenchConfig &cfg, std::string_view raw_key, std::string_view value) {
  const std::string key = lower(trim(raw_key));
  value = trim(value);
  auto wrap = [&](auto &&fn) {
    try {
      fn();
    } catch (const Error &e) {
      if (e.code() == ErrorCode::InvalidValue)
        throw;
      invalid(key, value, e.what());
    }
  };
  if (key == "data_path" || key == "data") {
    cfg.data_path = std::string(value);
  } else if (key == "countries") {
    cfg.countries = parse_list<std::string>(key, value, [](auto s) { return std::string(s); });
  } else if (key == "targets") {
    wrap([&] { cfg.targets = parse_list<Column>(key, value, parse_column); });
  } else if (key == "horizons") {
    cfg.horizons = parse_list<std::size_t>(key, value, [&](auto s) { return parse_positive(key, s); });
  } else if (key == "variants") {
    wrap([&] { cfg.variants = parse_list<ModelKind>(key, value, parse_model_kind); });
  } else if (key == "window_len" || key == "window") {
    cfg.window_len = parse_positive(key, value);
  } else if (key == "seeds") {
    cfg.seeds = parse_list<std::uint64_t>(key, value, [&](auto s) { return parse_u64(key, s); });
  } else if (key == "train_frac") {
    cfg.train_frac = parse_double(key, value);
  } else if (key == "val_frac") {
    cfg.val_frac = parse_double(key, value);
  } else if (key == "epochs") {
    cfg.epochs = parse_positive(key, value);
  } else if (key == "batch_size" || key == "batch") {
    cfg.batch_size = parse_positive(key, value);
  } else if (key == "eval_days") {
    cfg.eval_days = parse_positive(key, value);
  } else if (key == "alpha") {
    cfg.alpha = parse_double(key, value);
  } else if (key == "output_dir" || key == "out") {
    cfg.output_dir = std::string(value);
  } else if (key == "jobs") {
    cfg.jobs = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "num_layers") {
    cfg.num_layers = parse_positive(key, value);
  } else if (key == "hidden_units") {
    cfg.hidden_units = parse_positive(key, value);
  } else if (key == "conv_filters") {
    cfg.conv_filters = parse_positive(key, value);
  } else if (key == "activation") {
    wrap([&] {
      cfg.activation = parse_activation(lower(value));
      if (cfg.activation == Activation::Sigmoid)
        invalid(key, value, "cell activation must be relu or tanh");
    });
  } else if (key == "score") {
    if (value == "published")
      cfg.score_mode = ScoreMode::Published;
    else if (value == "corrected")
      cfg.score_mode = ScoreMode::Corrected;
    else
      invalid(key, value, "expected 'published' or 'corrected'");
  } else if (key == "histogram_bins") {
    cfg.histogram_bins = parse_positive(key, value);
  } else {
    throw Error(ErrorCode::UnknownKey, "unknown configuration key '" + std::string(raw_key) + "'");
  }
}

void apply_config_text(BenchConfig &cfg, std::istream &in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos)
      view = view.substr(0, hash);
    view = trim(view);
    if (view.empty())
      continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::InvalidValue,
                  "config line " + std::to_string(lineno) + " is not 'key = value'");
    apply_setting(cfg, view.substr(0, eq), view.substr(eq + 1));
  }
}

void apply_config_file(BenchConfig &cfg, const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
  apply_config_text(cfg, in);
}

void BenchConfig::validate() const {
  auto bad = [](std::string_view key, std::string why) {
    throw Error(ErrorCode::InvalidValue, std::string(key) + ": " + why);
  };
  if (data_path.empty())
    throw Error(ErrorCode::MissingDataPath, "no data file given (data_path / --data)");
  if (countries.empty())
    bad("countries", "list is empty");
  if (targets.empty())
    bad("targets", "list is empty");
  if (horizons.empty())
    bad("horizons", "list is empty");
  if (variants.empty())
    bad("variants", "list is empty");
  if (seeds.empty())
    bad("seeds", "list is empty");
  if (!(train_frac > 0.0 && train_frac < 1.0))
    bad("train_frac", "must lie in (0, 1)");
  if (!(val_frac >= 0.0 && val_frac < 1.0))
    bad("val_frac", "must lie in [0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0))
    bad("alpha", "must lie in (0, 1)");
  if (window_len == 0 || epochs == 0 || batch_size == 0 || eval_days == 0 || num_layers == 0 ||
      hidden_units == 0 || conv_filters == 0 || histogram_bins == 0)
    bad("config", "sizes and counts must be positive");
  for (const auto &k : variants) {
    ModelConfig mc;
    mc.variant = k.variant;
    mc.window_len = window_len;
    try {
      mc.validate();
    } catch (const Error &e) {
      bad("window_len", e.what());
    }
  }
}

std::string describe(const BenchConfig &cfg) {
  auto list = [](const auto &xs, auto &&f) {
    std::vector<std::string> parts;
    for (const auto &x : xs)
      parts.push_back(f(x));
    return join(parts, ",");
  };
  auto num = [](auto v) { return std::to_string(v); };
  std::ostringstream o;
  o << "data_path = " << cfg.data_path << '\n'
    << "countries = " << join(cfg.countries, ",") << '\n'
    << "targets = " << list(cfg.targets, [](Column c) { return std::string(to_string(c)); }) << '\n'
    << "horizons = " << list(cfg.horizons, num) << '\n'
    << "variants = " << list(cfg.variants, model_kind_name) << '\n'
    << "window_len = " << cfg.window_len << '\n'
    << "seeds = " << list(cfg.seeds, num) << '\n'
    << "train_frac = " << fmt("%g", cfg.train_frac) << '\n'
    << "val_frac = " << fmt("%g", cfg.val_frac) << '\n'
    << "epochs = " << cfg.epochs << '\n'
    << "batch_size = " << cfg.batch_size << '\n'
    << "eval_days = " << cfg.eval_days << '\n'
    << "alpha = " << fmt("%g", cfg.alpha) << '\n'
    << "output_dir = " << cfg.output_dir << '\n'
    << "jobs = " << cfg.jobs << '\n'
    << "num_layers = " << cfg.num_layers << '\n'
    << "hidden_units = " << cfg.hidden_units << '\n'
    << "conv_filters = " << cfg.conv_filters << '\n'
    << "activation = " << to_string(cfg.activation) << '\n'
    << "score = " << (cfg.score_mode == ScoreMode::Published ? "published" : "corrected") << '\n'
    << "histogram_bins = " << cfg.histogram_bins << '\n';
  return o.str();
}

std::string BenchJob::model() const {
  ModelConfig mc;
  mc.variant = kind.variant;
  mc.bidirectional = kind.bidirectional;
  return mc.model_id();
}

std::vector<BenchJob> job_grid(const BenchConfig &cfg) {
  std::vector<BenchJob> jobs;
  for (const auto &country : cfg.countries)
    for (auto target : cfg.targets)
      for (auto h : cfg.horizons)
        for (const auto &kind : cfg.variants)
          for (auto seed : cfg.seeds)
            jobs.push_back({country, target, h, kind, seed});
  return jobs;
}

std::string file_stem(std::string_view dataset, std::string_view model, std::uint64_t seed) {
  std::string out;
  for (char c : dataset)
    out.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  out += "__" + lower(model) + "__s" + std::to_string(seed);
  return out;
}

// ---------------------------------------------------------------------------
// Report files

namespace {
constexpr std::string_view kReportHeader =
    "dataset_id,model_id,seed,msle,mape,rmsle,ev,aggregate_score";

std::string metric_field(double v) { return std::isnan(v) ? std::string() : fmt("%.10g", v); }
} // namespace

void write_report_csv(std::ostream &out, std::span<const MetricReport> rows) {
  out << kReportHeader << '\n';
  for (const auto &r : rows)
    out << r.dataset_id << ',' << r.model_id << ',' << r.seed << ',' << metric_field(r.msle)
        << ',' << metric_field(r.mape) << ',' << metric_field(r.rmsle) << ','
        << metric_field(r.ev) << ',' << metric_field(r.aggregate_score) << '\n';
}

std::vector<MetricReport> read_report_csv(std::istream &in) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::SchemaMismatch, "report is empty");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  if (trim(line) != kReportHeader)
    throw Error(ErrorCode::SchemaMismatch, "report header must be '" + std::string(kReportHeader) +
                                               "', got '" + line + "'");
  std::vector<MetricReport> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (trim(line).empty())
      continue;
    auto f = split(line, ',');
    if (f.size() != 8)
      throw Error(ErrorCode::SchemaMismatch, "report line " + std::to_string(lineno) + " has " +
                                                 std::to_string(f.size()) + " fields, expected 8");
    auto num = [&](std::string_view s) {
      if (s.empty())
        return std::nan("");
      try {
        return parse_double("report", s);
      } catch (const Error &) {
        throw Error(ErrorCode::SchemaMismatch,
                    "report line " + std::to_string(lineno) + ": '" + std::string(s) +
                        "' is not a number");
      }
    };
    MetricReport r;
    r.dataset_id = std::string(f[0]);
    r.model_id = std::string(f[1]);
    r.seed = std::string(f[2]);
    r.msle = num(f[3]);
    r.mape = num(f[4]);
    r.rmsle = num(f[5]);
    r.ev = num(f[6]);
    r.aggregate_score = num(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_prediction_data(std::ostream &out, const ForecastRun &run, std::string_view dataset,
                           std::uint64_t seed) {
  out << "# dataset: " << dataset << '\n'
      << "# model: " << run.model_id << '\n'
      << "# seed: " << seed << '\n'
      << "# horizon: " << run.horizon << '\n'
      << "# evaluations: " << run.points.size() << " over " << run.eval_days << " days\n";
  if (!run.points.empty())
    out << "# first target date: " << format_date(run.points.front().date) << '\n';
  out << "# columns: date_index actual predicted\n";
  char buf[128];
  for (const auto &p : run.points) {
    std::snprintf(buf, sizeof buf, "%zu %.10g %.10g\n", p.index, p.actual, p.predicted);
    out << buf;
  }
}

void write_histogram_data(std::ostream &out, const Histogram &hist, std::string_view dataset,
                          std::string_view model, std::uint64_t seed) {
  out << "# dataset: " << dataset << '\n'
      << "# model: " << model << '\n'
      << "# seed: " << seed << '\n'
      << "# absolute error histogram, bins (left, right], first bin includes 0\n"
      << "# columns: bin_left bin_right count\n";
  char buf[128];
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.10g %.10g %zu\n", hist.edges[b], hist.edges[b + 1],
                  hist.counts[b]);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Score and rank tables

ScoreTable score_table(std::span<const MetricReport> rows, ScoreMode mode) {
  ScoreTable t;
  auto index_of = [](std::vector<std::string> &v, const std::string &s) {
    auto it = std::find(v.begin(), v.end(), s);
    if (it == v.end()) {
      v.push_back(s);
      return v.size() - 1;
    }
    return static_cast<std::size_t>(it - v.begin());
  };
  const bool have_mean = std::any_of(rows.begin(), rows.end(),
                                     [](const MetricReport &r) { return r.seed == "mean"; });
  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, std::size_t>> cells;
  for (const auto &r : rows) {
    const auto d = index_of(t.datasets, r.dataset_id);
    const auto m = index_of(t.models, r.model_id);
    if (have_mean && r.seed != "mean")
      continue;
    const bool metrics = !std::isnan(r.msle) && !std::isnan(r.mape) && !std::isnan(r.rmsle) &&
                         !std::isnan(r.ev);
    double score = metrics ? aggregate_score(r, mode) : r.aggregate_score;
    if (std::isnan(score))
      throw Error(ErrorCode::MissingMetric,
                  "row " + r.dataset_id + " / " + r.model_id + " has neither metrics nor a score");
    auto &cell = cells[{d, m}];
    cell.first += score;
    cell.second += 1;
  }
  t.scores = Matrix(t.datasets.size(), t.models.size());
  for (std::size_t d = 0; d < t.datasets.size(); ++d)
    for (std::size_t m = 0; m < t.models.size(); ++m) {
      auto it = cells.find({d, m});
      if (it == cells.end())
        throw Error(ErrorCode::SchemaMismatch,
                    "no score for " + t.datasets[d] + " / " + t.models[m]);
      t.scores(d, m) = it->second.first / static_cast<double>(it->second.second);
    }
  return t;
}

RankFixture read_rank_fixture(std::istream &in) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::SchemaMismatch, "rank fixture is empty");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  auto header = split(line, ',');
  if (header.size() < 2)
    throw Error(ErrorCode::SchemaMismatch, "rank fixture header needs a dataset column and models");
  RankFixture fx;
  for (std::size_t j = 1; j < header.size(); ++j)
    fx.table.models.emplace_back(header[j]);
  const std::size_t k = fx.table.models.size();
  std::vector<double> data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (trim(line).empty())
      continue;
    auto f = split(line, ',');
    if (f.size() != k + 1)
      throw Error(ErrorCode::SchemaMismatch, "rank fixture line " + std::to_string(lineno) +
                                                 " has " + std::to_string(f.size()) + " fields");
    std::vector<double> vals;
    for (std::size_t j = 1; j <= k; ++j) {
      double v = 0.0;
      try {
        v = parse_double("rank", f[j]);
      } catch (const Error &) {
        throw Error(ErrorCode::SchemaMismatch, "rank fixture line " + std::to_string(lineno) +
                                                   ": '" + std::string(f[j]) + "' is not a number");
      }
      vals.push_back(v);
    }
    if (lower(f[0]) == "average rank") {
      fx.published_average = vals;
      continue;
    }
    for (double v : vals)
      if (v < 1.0 || v > static_cast<double>(k))
        throw Error(ErrorCode::SchemaMismatch, "rank " + fmt("%g", v) + " on line " +
                                                   std::to_string(lineno) + " is outside [1, k]");
    fx.table.datasets.emplace_back(f[0]);
    data.insert(data.end(), vals.begin(), vals.end());
  }
  fx.table.ranks = Matrix(fx.table.datasets.size(), k, std::move(data));
  fx.table.average_ranks = fx.table.datasets.empty() ? std::vector<double>(k, 0.0)
                                                     : average_ranks(fx.table.ranks);
  return fx;
}

std::string format_score_table(const ScoreTable &t) {
  std::ostringstream o;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-24s", "Dataset");
  o << buf;
  for (const auto &m : t.models) {
    std::snprintf(buf, sizeof buf, " %14s", m.c_str());
    o << buf;
  }
  o << '\n';
  for (std::size_t d = 0; d < t.datasets.size(); ++d) {
    std::snprintf(buf, sizeof buf, "%-24s", t.datasets[d].c_str());
    o << buf;
    for (std::size_t m = 0; m < t.models.size(); ++m) {
      std::snprintf(buf, sizeof buf, " %14.6g", t.scores(d, m));
      o << buf;
    }
    o << '\n';
  }
  return o.str();
}

std::string format_rank_table(const RankTable &t) {
  std::ostringstream o;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-24s", "Dataset");
  o << buf;
  for (const auto &m : t.models) {
    std::snprintf(buf, sizeof buf, " %14s", m.c_str());
    o << buf;
  }
  o << '\n';
  for (std::size_t d = 0; d < t.datasets.size(); ++d) {
    std::snprintf(buf, sizeof buf, "%-24s", t.datasets[d].c_str());
    o << buf;
    for (std::size_t m = 0; m < t.models.size(); ++m) {
      std::snprintf(buf, sizeof buf, " %14g", t.ranks(d, m));
      o << buf;
    }
    o << '\n';
  }
  std::snprintf(buf, sizeof buf, "%-24s", "Average Rank");
  o << buf;
  for (double r : t.average_ranks) {
    std::snprintf(buf, sizeof buf, " %14.4f", r);
    o << buf;
  }
  o << '\n';
  return o.str();
}

std::string format_friedman(const FriedmanResult &r, std::span<const std::string> models,
                            std::span<const double> avg) {
  std::ostringstream o;
  o << "datasets (N) = " << r.num_datasets << '\n'
    << "models (k) = " << r.num_models << '\n'
    << "chi2_F = " << fmt("%.4f", r.chi2_f) << '\n'
    << "F_F = " << fmt("%.4f", r.f_f) << '\n'
    << "df = (" << r.df1 << ", " << r.df2 << ")\n"
    << "alpha = " << fmt("%g", r.alpha) << '\n'
    << "critical value = " << fmt("%.4f", r.critical_value) << '\n'
    << "decision = "
    << (r.reject_null ? "reject (F_F > critical value: the models do not perform equally)"
                      : "accept (F_F <= critical value: no significant difference)")
    << '\n';
  if (!models.empty() && models.size() == avg.size()) {
    const auto best = best_model(avg);
    o << "best model = " << models[best] << " (average rank " << fmt("%.4f", avg[best]) << ")\n";
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Commands

int cmd_run(const BenchConfig &cfg, const RunOptions &opts, std::ostream &log) {
  cfg.validate();
  const auto jobs = job_grid(cfg);
  const std::size_t datasets = cfg.countries.size() * cfg.targets.size() * cfg.horizons.size();

  if (opts.dry_run) {
    log << "dry run: " << jobs.size() << " jobs = " << datasets << " datasets x "
        << cfg.variants.size() << " variants x " << cfg.seeds.size() << " seeds ("
        << datasets * cfg.variants.size() << " jobs per seed)\n";
    for (std::size_t i = 0; i < jobs.size(); ++i)
      log << "  [" << i + 1 << "] " << jobs[i].dataset() << " | " << jobs[i].model() << " | seed "
          << jobs[i].seed << '\n';
    return 0;
  }

  std::ostringstream runlog;
  runlog << "# effective configuration\n" << describe(cfg) << '\n';

  Warnings data_warnings;
  const auto records = parse_who_csv_file(cfg.data_path, &data_warnings);
  for (const auto &w : data_warnings)
    runlog << "warning: " << w << '\n';

  // One immutable series per (country, target), shared by every job.
  struct SeriesSlot {
    std::optional<TimeSeries> series;
    std::string error;
  };
  std::map<std::pair<std::string, Column>, SeriesSlot> series;
  for (const auto &country : cfg.countries)
    for (auto target : cfg.targets) {
      Warnings w;
      SeriesSlot slot;
      try {
        slot.series = extract_series(records, country, target, std::nullopt, &w);
        runlog << "series " << country << " " << to_string(target) << ": "
               << format_date(slot.series->start_date) << " .. "
               << format_date(slot.series->end_date()) << " (" << slot.series->size()
               << " days)\n";
      } catch (const Error &e) {
        slot.error = e.what();
      }
      for (const auto &x : w)
        runlog << "warning: " << x << '\n';
      series[{country, target}] = std::move(slot);
    }

  const fs::path out_dir(cfg.output_dir);
  std::error_code ec;
  for (const auto *sub : {"predictions", "histograms", "losses", "models"})
    fs::create_directories(out_dir / sub, ec);
  if (ec)
    throw Error(ErrorCode::IoError, "cannot create '" + cfg.output_dir + "': " + ec.message());

  struct JobOutcome {
    std::optional<SeedOutcome> outcome;
    Warnings warnings;
    std::string error;
  };
  std::vector<JobOutcome> results(jobs.size());
  const int threads = cfg.jobs ? static_cast<int>(cfg.jobs) : omp_get_num_procs();
  log << "running " << jobs.size() << " jobs on " << threads << " thread(s)\n";

  std::size_t done = 0;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (long i = 0; i < static_cast<long>(jobs.size()); ++i) {
    const auto &job = jobs[static_cast<std::size_t>(i)];
    auto &res = results[static_cast<std::size_t>(i)];
    const auto &slot = series.at({job.country, job.target});
    try {
      if (!slot.series)
        throw Error(ErrorCode::UnknownCountry, slot.error);
      ExperimentSpec spec;
      spec.country_code = job.country;
      spec.column = job.target;
      spec.horizon = job.horizon;
      spec.model.variant = job.kind.variant;
      spec.model.bidirectional = job.kind.bidirectional;
      spec.model.num_layers = cfg.num_layers;
      spec.model.hidden_units = cfg.hidden_units;
      spec.model.conv_filters = cfg.conv_filters;
      spec.model.cell_activation = cfg.activation;
      spec.model.window_len = cfg.window_len;
      spec.train_frac = cfg.train_frac;
      spec.val_frac = cfg.val_frac;
      spec.train.epochs = cfg.epochs;
      spec.train.batch_size = cfg.batch_size;
      spec.eval_days = cfg.eval_days;
      spec.score_mode = cfg.score_mode;
      res.outcome = run_seed(*slot.series, spec, job.seed, &res.warnings);
    } catch (const std::exception &e) {
      res.error = e.what();
    }
#pragma omp critical(covcast_progress)
    {
      ++done;
      log << "[" << done << "/" << jobs.size() << "] " << job.dataset() << " | " << job.model()
          << " | seed " << job.seed << (res.error.empty() ? " ok" : " FAILED") << std::endl;
    }
  }

  // Everything below runs on one thread in grid order, so output files do
  // not depend on job completion order.
  std::vector<MetricReport> rows;
  std::vector<std::string> failures;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto &job = jobs[i];
    const auto &res = results[i];
    for (const auto &w : res.warnings)
      runlog << "warning: " << w << '\n';
    if (!res.outcome) {
      failures.push_back(job.dataset() + " | " + job.model() + " | seed " +
                         std::to_string(job.seed) + ": " + res.error);
      continue;
    }
    const auto &o = *res.outcome;
    const auto stem = file_stem(job.dataset(), job.model(), job.seed);
    {
      std::ostringstream s;
      write_prediction_data(s, o.run, job.dataset(), job.seed);
      write_file(out_dir / "predictions" / (stem + ".dat"), s.str());
    }
    {
      std::ostringstream s;
      const auto hist =
          abs_error_histogram(o.run.actual(), o.run.predicted(), cfg.histogram_bins);
      write_histogram_data(s, hist, job.dataset(), job.model(), job.seed);
      write_file(out_dir / "histograms" / (stem + ".dat"), s.str());
    }
    {
      std::ostringstream s;
      write_loss_history(s, o.history);
      write_file(out_dir / "losses" / (stem + ".csv"), s.str());
    }
    {
      std::ostringstream s;
      save_model(s, o.model);
      write_file(out_dir / "models" / (stem + ".hzb"), s.str());
    }
    runlog << "job " << job.dataset() << " | " << job.model() << " | seed " << job.seed
           << ": final train_mse " << fmt("%.6g", o.history.back().train_mse) << ", score "
           << fmt("%.6g", o.report.aggregate_score) << '\n';
    rows.push_back(o.report);
    // Seed-mean row after the last seed of a (dataset, model) group.
    const bool last_seed = job.seed == cfg.seeds.back();
    if (cfg.seeds.size() > 1 && last_seed) {
      std::vector<MetricReport> group;
      for (const auto &r : rows)
        if (r.dataset_id == o.report.dataset_id && r.model_id == o.report.model_id &&
            r.seed != "mean")
          group.push_back(r);
      if (group.size() == cfg.seeds.size())
        rows.push_back(mean_report(group, cfg.score_mode));
    }
  }

  {
    std::ostringstream s;
    write_report_csv(s, rows);
    write_file(out_dir / "report.csv", s.str());
  }

  std::string ranks_text, friedman_text;
  if (failures.empty()) {
    try {
      const auto scores = score_table(rows, cfg.score_mode);
      const auto table = rank_models(scores.scores, scores.datasets, scores.models);
      ranks_text = "# aggregate scores\n" + format_score_table(scores) + "\n# ranks (1 = best)\n" +
                   format_rank_table(table);
      const auto fr = friedman_test(table, cfg.alpha);
      friedman_text = format_friedman(fr, table.models, table.average_ranks);
    } catch (const Error &e) {
      friedman_text = std::string("not computed: ") + e.what() + '\n';
    }
  } else {
    ranks_text = friedman_text = "not computed: " + std::to_string(failures.size()) +
                                 " job(s) failed, see runlog.txt\n";
  }
  write_file(out_dir / "ranks.txt", ranks_text);
  write_file(out_dir / "friedman.txt", friedman_text);

  runlog << "\n" << jobs.size() - failures.size() << " of " << jobs.size() << " jobs succeeded\n";
  for (const auto &f : failures)
    runlog << "FAILED " << f << '\n';
  write_file(out_dir / "runlog.txt", runlog.str());

  for (const auto &f : failures)
    log << "FAILED " << f << '\n';
  log << friedman_text;
  return failures.empty() ? 0 : 1;
}

int cmd_stats(const StatsOptions &opts, std::ostream &out, std::ostream &err) {
  try {
    if (opts.report_path.empty() == opts.rank_fixture_path.empty())
      throw Error(ErrorCode::InvalidValue, "give exactly one of a report CSV or a rank fixture");
    if (!(opts.alpha > 0.0 && opts.alpha < 1.0))
      throw Error(ErrorCode::InvalidValue, "alpha must lie in (0, 1)");

    if (!opts.rank_fixture_path.empty()) {
      std::ifstream in(opts.rank_fixture_path);
      if (!in)
        throw Error(ErrorCode::IoError, "cannot open '" + opts.rank_fixture_path + "'");
      const auto fx = read_rank_fixture(in);
      out << "# ranks (fixture)\n" << format_rank_table(fx.table) << '\n';
      std::vector<double> avg = fx.table.average_ranks;
      if (fx.published_average) {
        if (fx.published_average->size() != avg.size())
          throw Error(ErrorCode::SchemaMismatch, "average rank row has the wrong width");
        avg = *fx.published_average;
        out << "# using the fixture's published average ranks\n";
      }
      const auto fr = friedman_test(avg, fx.table.num_datasets(), opts.alpha);
      out << format_friedman(fr, fx.table.models, avg);
      return 0;
    }

    std::ifstream in(opts.report_path);
    if (!in)
      throw Error(ErrorCode::IoError, "cannot open '" + opts.report_path + "'");
    const auto rows = read_report_csv(in);
    const auto scores = score_table(rows, opts.score_mode);
    const auto table = rank_models(scores.scores, scores.datasets, scores.models);
    out << "# aggregate scores\n"
        << format_score_table(scores) << "\n# ranks (1 = best)\n"
        << format_rank_table(table) << '\n';
    const auto fr = friedman_test(table, opts.alpha);
    out << format_friedman(fr, table.models, table.average_ranks);
    return 0;
  } catch (const std::exception &e) {
    err << "stats: " << e.what() << '\n';
    return 1;
  }
}

} // namespace covcast
