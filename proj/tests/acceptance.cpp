// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance 1 2 9      run a subset
#include "covcast/bench.hpp"
#include "covcast/error.hpp"
#include "covcast/forecast.hpp"
#include "covcast/stats.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace covcast;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char *spec, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, spec, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const std::vector<std::string> kModels{"LSTM",    "GRU",    "Conv-LSTM",
                                       "Bi-LSTM", "Bi-GRU", "Bi-Conv-LSTM"};

const std::pair<Variant, bool> kVariants[] = {
    {Variant::Lstm, false}, {Variant::Gru, false}, {Variant::ConvLstm, false},
    {Variant::Lstm, true},  {Variant::Gru, true},  {Variant::ConvLstm, true}};

// ---------------------------------------------------------------------------

Outcome friedman_reproduction() {
  const std::vector<double> avg{3, 3.25, 4.83, 4.08, 2.33, 3.42};
  const auto r = friedman_test(avg, 12, 0.05);

  // Same numbers through the rank-fixture path.
  std::ifstream in(oracle::fixture("published_ranks.csv"));
  const auto fx = read_rank_fixture(in);
  const bool fixture_ok = fx.published_average && fx.table.num_datasets() == 12 &&
                          fx.table.num_models() == 6 &&
                          friedman_test(*fx.published_average, 12, 0.05).chi2_f == r.chi2_f;

  const bool pass = std::abs(r.chi2_f - 10.84) <= 0.02 && std::abs(r.f_f - 2.43) <= 0.02 &&
                    std::abs(r.critical_value - 2.38) <= 0.01 && r.reject_null && fixture_ok;
  return {pass, fmt("chi2_F=%.4f F_f=%.4f critical=%.4f decision=%s fixture=%s", r.chi2_f, r.f_f,
                    r.critical_value, r.reject_null ? "reject" : "accept",
                    fixture_ok ? "ok" : "mismatch")};
}

Outcome f_quantile() {
  const auto t0 = std::chrono::steady_clock::now();
  const double crit = f_critical(0.05, 5, 55);
  const double combos[20][3] = {
      {0.05, 5, 55}, {0.05, 1, 1},  {0.01, 5, 55},  {0.10, 5, 55}, {0.05, 2, 10},
      {0.05, 3, 30}, {0.01, 1, 10}, {0.10, 10, 10}, {0.05, 4, 4},  {0.20, 6, 60},
      {0.05, 7, 77}, {0.01, 2, 22}, {0.10, 1, 100}, {0.05, 8, 3},  {0.025, 5, 20},
      {0.5, 3, 3},   {0.05, 12, 120}, {0.001, 5, 55}, {0.3, 2, 2},  {0.05, 20, 5}};
  double quantiles[20];
  for (int i = 0; i < 20; ++i)
    quantiles[i] = f_critical(combos[i][0], combos[i][1], combos[i][2]);
  const double elapsed = seconds_since(t0); // the oracle's integration is not counted
  double worst = 0.0;
  for (int i = 0; i < 20; ++i)
    worst = std::max(worst, std::abs(oracle::f_cdf(quantiles[i], combos[i][1], combos[i][2]) -
                                     (1.0 - combos[i][0])));
  const bool pass = std::abs(crit - 2.38) <= 0.01 && worst <= 1e-6 && elapsed < 1.0;
  return {pass, fmt("f_critical(0.05,5,55)=%.5f max |oracle CDF(q) - (1-alpha)| = %.2e over 20 "
                    "combinations, quantiles in %.3f s",
                    crit, worst, elapsed)};
}

Outcome rank_derivation() {
  Matrix s{{0.49265, 0.494675, 0.71, 0.49435, 0.4927, 0.548825}};
  const auto t = rank_models(s, {"New Cases 1-day AU"}, kModels);
  const std::vector<double> want{1, 4, 6, 3, 2, 5};
  std::vector<double> got(t.ranks.row(0).begin(), t.ranks.row(0).end());
  std::string shown;
  for (double r : got)
    shown += fmt("%g ", r);
  return {got == want, "ranks " + shown};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(20200125);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0, worst_sq = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + trial % 120;
    const double scale = std::pow(10.0, trial % 7);
    std::vector<double> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = scale * u(rng) + (trial % 3 == 0 ? 0.0 : 1.0);
      p[i] = scale * u(rng);
    }
    if (n == 1 || y.front() == 0.0)
      y.front() += 1.0; // keeps the variance and MAPE denominators nonzero
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    worst = std::max({worst, rel(msle(y, p), oracle::msle(y, p)),
                      rel(rmsle(y, p), oracle::rmsle(y, p)),
                      rel(mape(y, p).value, oracle::mape(y, p))});
    if (n > 1 && *std::max_element(y.begin(), y.end()) != *std::min_element(y.begin(), y.end()))
      worst = std::max(worst, rel(explained_variance(y, p), oracle::explained_variance(y, p)));
    const double r = rmsle(y, p);
    worst_sq = std::max(worst_sq, std::abs(r * r - msle(y, p)));
  }
  const double worked = mape(std::vector<double>{345000}, std::vector<double>{404000}).value;
  const bool pass = worst <= 1e-10 && worst_sq <= 1e-12 && fmt("%.2f", worked) == "17.10";
  return {pass, fmt("max deviation from oracle %.2e, max |rmsle^2 - msle| %.2e, worked MAPE "
                    "%.2f%%",
                    worst, worst_sq, worked)};
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t entries = 0, failures = 0, tiny = 0, candidate_bias = 0;
  double worst = 0.0;
  std::string failing;
  for (auto [v, bi] : kVariants)
    for (std::uint64_t seed : {101u, 202u, 303u}) {
      ModelConfig c;
      c.variant = v;
      c.bidirectional = bi;
      c.num_layers = 3;
      c.hidden_units = 8;
      c.conv_filters = 8;
      c.window_len = 4;
      c.seed = seed;
      RecurrentModel m(c);
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> x(3 * 4), t(3);
      for (auto &e : x)
        e = u(rng);
      for (auto &e : t)
        e = u(rng);
      ForwardCache cache;
      m.zero_grad();
      m.loss_and_gradients(x, t, cache);
      auto params = m.parameters();
      const auto rep = grad_check([&] { return m.loss(x, t); }, params);
      entries += rep.entries.size();
      failures += rep.failures;
      worst = std::max(worst, rep.max_rel_error);
      for (const auto &e : rep.entries)
        if (e.rel_error > 1e-4) {
          if (std::max(std::abs(e.analytic), std::abs(e.numeric)) < 1e-6)
            ++tiny;
          else if (e.name.find(".b_g") != std::string::npos)
            ++candidate_bias;
        }
      if (!rep.passed())
        failing += c.model_id() + fmt("/seed %llu ", static_cast<unsigned long long>(seed));
    }
  const double elapsed = seconds_since(t0);
  return {failures == 0 && elapsed < 120.0,
          fmt("%.0f s, %zu entries checked, %zu failures (%zu with |g| < 1e-6, %zu on candidate biases), "
              "max relative error %.2e in ",
              elapsed, entries, failures, tiny, candidate_bias, worst) +
              failing};
}

TimeSeries sine_fixture() {
  TimeSeries s;
  s.country_code = "SINE";
  s.column = Column::CumulativeCases;
  s.start_date = parse_date("2020-01-01");
  for (std::size_t t = 0; t < 300; ++t)
    s.values.push_back(100.0 + 50.0 * std::sin(2.0 * std::numbers::pi * t / 25.0));
  return s;
}

ExperimentSpec sine_spec(Variant v, bool bi, std::size_t h) {
  ExperimentSpec spec;
  spec.country_code = "SINE";
  spec.model.variant = v;
  spec.model.bidirectional = bi;
  spec.horizon = h;
  spec.eval_days = split_sizes(300, 0.70, 0.20).test; // the test region
  return spec;
}

Outcome trainability() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto series = sine_fixture();
  bool pass = true;
  std::string detail;
  for (auto [v, bi] : kVariants) {
    const auto spec = sine_spec(v, bi, 1);
    const auto out = run_seed(series, spec, 42);
    const double ratio = out.history.back().train_mse / out.history.front().train_mse;
    const bool ok = ratio <= 0.10 && out.report.mape < 5.0;
    pass = pass && ok;
    detail += fmt("%s ratio=%.2e mape=%.2f%%%s; ", spec.model.model_id().c_str(), ratio,
                  out.report.mape, ok ? "" : " (fail)");
  }
  const double elapsed = seconds_since(t0);
  return {pass && elapsed < 300.0, fmt("%.0f s for six variants; ", elapsed) + detail};
}

Outcome horizon_degradation() {
  const auto series = sine_fixture();
  const std::uint64_t seeds[] = {1, 2, 3, 4, 5};
  int holds = 0;
  std::string detail;
  for (auto [v, bi] : kVariants) {
    double mean[2] = {0.0, 0.0};
    int k = 0;
    for (std::size_t h : {1u, 7u}) {
      const auto spec = sine_spec(v, bi, h);
      for (auto seed : seeds)
        mean[k] += run_seed(series, spec, seed).report.rmsle / std::size(seeds);
      ++k;
    }
    const bool ok = mean[1] >= mean[0];
    holds += ok;
    detail += fmt("%s h1=%.5f h7=%.5f%s; ", sine_spec(v, bi, 1).model.model_id().c_str(), mean[0],
                  mean[1], ok ? "" : " (violated)");
  }
  return {holds >= 5, fmt("%d/6 variants degrade with horizon: ", holds) + detail};
}

std::map<std::string, std::string> read_tree(const fs::path &root) {
  std::map<std::string, std::string> files;
  for (const auto &e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      std::ostringstream s;
      s << in.rdbuf();
      files[fs::relative(e.path(), root).string()] = s.str();
    }
  return files;
}

Outcome end_to_end() {
  const fs::path out = fs::temp_directory_path() / "covcast_acceptance_grid";
  BenchConfig cfg;
  cfg.data_path = oracle::fixture("who_au_ir.csv");
  cfg.output_dir = out.string();

  std::map<std::string, std::string> first;
  double times[2] = {0.0, 0.0};
  int status[2] = {0, 0};
  std::size_t rows = 0;
  bool identical = false;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(out);
    std::ostringstream log;
    const auto t0 = std::chrono::steady_clock::now();
    status[run] = cmd_run(cfg, {}, log);
    times[run] = seconds_since(t0);
    auto tree = read_tree(out);
    if (run == 0) {
      std::istringstream rep(tree["report.csv"]);
      rows = read_report_csv(rep).size();
      first = std::move(tree);
    } else {
      identical = tree == first;
    }
  }
  fs::remove_all(out);
  const double slowest = std::max(times[0], times[1]);
  const bool pass = status[0] == 0 && status[1] == 0 && rows == 72 && identical &&
                    slowest < 30.0 * 60.0;
  return {pass, fmt("exit %d/%d, %zu report rows, %zu files, repeat %s, wall %.0f s and %.0f s "
                    "on %u hardware thread(s)",
                    status[0], status[1], rows, first.size(),
                    identical ? "byte-identical" : "DIFFERS", times[0], times[1],
                    std::thread::hardware_concurrency())};
}

Outcome data_round_trip() {
  const auto records = parse_who_csv_file(oracle::fixture("who_au_ir.csv"));
  struct Want {
    const char *code, *first, *last;
  };
  bool pass = true;
  std::string detail;
  for (const Want &w : {Want{"AU", "1/25/2020", "8/19/2020"}, Want{"IR", "1/3/2020", "10/6/2020"}}) {
    const DateRange range{parse_date(w.first), parse_date(w.last)};
    for (auto col : {Column::CumulativeCases, Column::CumulativeDeaths}) {
      const auto s = extract_series(records, w.code, col, range);
      const auto sp = split_series(s.values, 0.70, 0.20);
      const double len = static_cast<double>(s.size());
      const double block = static_cast<double>(sp.sizes.train + sp.sizes.validation);
      std::vector<double> joined = sp.train;
      joined.insert(joined.end(), sp.validation.begin(), sp.validation.end());
      joined.insert(joined.end(), sp.test.begin(), sp.test.end());
      const bool ok = s.start_date == range.first && s.end_date() == range.last &&
                      std::abs(block - 0.70 * len) <= 1.0 &&
                      std::abs(static_cast<double>(sp.sizes.validation) - 0.20 * block) <= 1.0 &&
                      joined == s.values;
      pass = pass && ok;
      if (col == Column::CumulativeCases)
        detail += fmt("%s %s..%s len=%zu train=%zu val=%zu test=%zu%s; ", w.code,
                      format_date(s.start_date).c_str(), format_date(s.end_date()).c_str(),
                      s.size(), sp.sizes.train, sp.sizes.validation, sp.sizes.test,
                      ok ? "" : " (fail)");
    }
  }
  return {pass, detail};
}

struct Criterion {
  int id;
  const char *name;
  std::function<Outcome()> run;
};

} // namespace

int main(int argc, char **argv) {
  const std::vector<Criterion> all{
      {1, "Friedman reproduction", friedman_reproduction},
      {2, "F quantile", f_quantile},
      {3, "rank derivation", rank_derivation},
      {4, "metric oracles", metric_oracles},
      {5, "gradient correctness", gradient_correctness},
      {6, "trainability", trainability},
      {7, "horizon degradation", horizon_degradation},
      {8, "end-to-end determinism and scale", end_to_end},
      {9, "data-layer round trip", data_round_trip},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i)
    wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto &c : all) {
    if (!wanted.empty() && !wanted.count(c.id))
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception &e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s [%d] %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
