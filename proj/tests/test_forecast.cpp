// SPDX-License-Identifier: Apache-2.0
#include "covcast/error.hpp"
#include "covcast/forecast.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace covcast;

namespace {

ErrorCode code_of(auto &&fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

ModelConfig tiny(Variant v = Variant::Lstm, bool bi = false) {
  ModelConfig c;
  c.variant = v;
  c.bidirectional = bi;
  c.num_layers = 1;
  c.hidden_units = 6;
  c.conv_filters = 4;
  c.window_len = 4;
  return c;
}

TimeSeries sine_series(std::size_t n) {
  TimeSeries s;
  s.country_code = "SN";
  s.column = Column::CumulativeCases;
  s.start_date = parse_date("2020-01-01");
  for (std::size_t t = 0; t < n; ++t)
    s.values.push_back(100.0 + 50.0 * std::sin(2.0 * std::numbers::pi * t / 25.0));
  return s;
}

} // namespace

TEST_CASE("training reaches a constant target") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  WindowedDataset ds;
  ds.window_len = 4;
  ds.horizon = 1;
  for (int i = 0; i < 48; ++i) {
    for (int j = 0; j < 4; ++j)
      ds.inputs.push_back(u(rng));
    ds.targets.push_back(0.3);
    ds.origins.push_back(static_cast<std::size_t>(i));
  }
  TrainedModel m = build_model(tiny());
  TrainConfig cfg;
  auto hist = train(m, ds, nullptr, cfg);
  REQUIRE(hist.size() == 200);
  CHECK(hist.back().train_mse < 1e-4);
  CHECK(std::isnan(hist.back().val_mse));
  CHECK(m.network.predict(ds.window(0)) == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("training is reproducible and checks its inputs") {
  auto series = sine_series(120);
  auto scaler = MinMaxScaler::fit(series.values);
  auto ds = build_windows(scaler.apply(series.values), 4, 1);
  TrainConfig cfg;
  cfg.epochs = 15;
  TrainedModel a = build_model(tiny(Variant::Gru)), b = build_model(tiny(Variant::Gru));
  auto ha = train(a, ds, &ds, cfg), hb = train(b, ds, &ds, cfg);
  REQUIRE(ha.size() == hb.size());
  for (std::size_t i = 0; i < ha.size(); ++i) {
    CHECK(ha[i].epoch == i + 1);
    CHECK(ha[i].train_mse == hb[i].train_mse);
    CHECK(ha[i].val_mse == hb[i].val_mse);
  }

  auto wrong = build_windows(scaler.apply(series.values), 4, 3);
  TrainedModel c = build_model(tiny());
  CHECK(code_of([&] { train(c, wrong, nullptr, cfg); }) == ErrorCode::ShapeMismatch);
  cfg.epochs = 0;
  CHECK(code_of([&] { train(c, ds, nullptr, cfg); }) == ErrorCode::InvalidValue);

  std::ostringstream csv;
  write_loss_history(csv, ha);
  CHECK(csv.str().rfind("epoch,train_mse,val_mse\n1,", 0) == 0);
}

TEST_CASE("rolling forecast issues ceil(eval/h) teacher-forced predictions") {
  auto series = sine_series(300);
  for (std::size_t h : {1u, 3u, 7u}) {
    ModelConfig c = tiny();
    c.horizon = h;
    TrainedModel m = build_model(c);
    m.scaler = MinMaxScaler(50.0, 150.0);
    auto run = rolling_forecast(m, series, h, 100);
    CHECK(run.points.size() == (100 + h - 1) / h);
    CHECK(run.points.front().index == 200);
    for (std::size_t i = 0; i < run.points.size(); ++i) {
      const auto &p = run.points[i];
      REQUIRE(p.index == 200 + i * h);
      REQUIRE(p.actual == series.values[p.index]);
      // The window ends h days before the target and holds observed values.
      std::vector<double> window;
      for (std::size_t j = p.index - h - 3; j <= p.index - h; ++j)
        window.push_back(m.scaler.apply(series.values[j]));
      REQUIRE(p.predicted == doctest::Approx(m.scaler.invert(m.network.predict(window))));
    }
  }
  TrainedModel m = build_model(tiny());
  CHECK(code_of([&] { rolling_forecast(m, series, 3, 100); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { rolling_forecast(m, sine_series(50), 1, 100); }) ==
        ErrorCode::SeriesTooShort);
}

TEST_CASE("a model that outputs zero forecasts the scaler minimum") {
  TrainedModel m = build_model(tiny(Variant::ConvLstm, true));
  for (auto *p : m.network.parameters())
    p->value.fill(0.0);
  m.scaler = MinMaxScaler(12.5, 900.0);
  auto run = rolling_forecast(m, sine_series(150), 1, 100);
  for (const auto &p : run.points)
    CHECK(p.predicted == 12.5);
}

TEST_CASE("dataset labels") {
  CHECK(dataset_id(Column::CumulativeCases, 1, "AU") == "New Cases 1-day AU");
  CHECK(dataset_id(Column::CumulativeDeaths, 7, "IR") == "New Deaths 7-day IR");
  CHECK(dataset_id(Column::NewCases, 3, "IR") == "Daily Cases 3-day IR");
}

TEST_CASE("run_experiment end to end on the fixture") {
  const auto records = parse_who_csv_file(oracle::fixture("who_au_ir.csv"));
  ExperimentSpec spec;
  spec.country_code = "AU";
  spec.column = Column::CumulativeDeaths;
  spec.horizon = 7;
  spec.model = tiny(Variant::Gru);
  spec.train.epochs = 20;
  spec.seeds = {1, 2};
  auto a = run_experiment(records, spec);
  auto b = run_experiment(records, spec);
  REQUIRE(a.outcomes.size() == 2);
  CHECK(a.dataset_id == "New Deaths 7-day AU");
  CHECK(a.model_id == "GRU");
  CHECK(a.outcomes[0].run.points.size() == 15);
  CHECK(a.mean.seed == "mean");
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a.outcomes[i].report.aggregate_score == b.outcomes[i].report.aggregate_score);
    CHECK(a.outcomes[i].history.back().train_mse == b.outcomes[i].history.back().train_mse);
    CHECK(a.outcomes[i].history.back().train_mse <= a.outcomes[i].history.front().train_mse);
  }
  CHECK(a.outcomes[0].report.seed == "1");
  // The 100-day window reaches back before the 63-day test split of AU.
  CHECK_FALSE(a.warnings.empty());

  spec.country_code = "XX";
  try {
    run_experiment(records, spec);
    FAIL("no error");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::UnknownCountry);
    CHECK(std::string(e.what()).find("New Deaths 7-day XX") != std::string::npos);
  }
}
