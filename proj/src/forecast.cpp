// SPDX-License-Identifier: Apache-2.0
#include "covcast/forecast.hpp"

#include "covcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace covcast {

void TrainConfig::validate() const {
  if (epochs == 0)
    throw Error(ErrorCode::InvalidValue, "epochs must be at least 1");
  if (batch_size == 0)
    throw Error(ErrorCode::InvalidValue, "batch size must be at least 1");
}

std::vector<EpochLoss> train(TrainedModel &model, const WindowedDataset &train_set,
                             const WindowedDataset *validation, const TrainConfig &cfg) {
  cfg.validate();
  RecurrentModel &net = model.network;
  const ModelConfig &mc = net.config();
  auto check = [&](const WindowedDataset &ds, const char *which) {
    if (ds.window_len != mc.window_len || ds.horizon != mc.horizon)
      throw Error(ErrorCode::ShapeMismatch,
                  std::string(which) + " windows (W=" + std::to_string(ds.window_len) +
                      ", h=" + std::to_string(ds.horizon) + ") do not match the model (W=" +
                      std::to_string(mc.window_len) + ", h=" + std::to_string(mc.horizon) + ")");
  };
  check(train_set, "training");
  if (train_set.size() == 0)
    throw Error(ErrorCode::EmptyInput, "no training windows");
  if (validation)
    check(*validation, "validation");

  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  XorShift64Star rng(stream_seed(mc.seed, "shuffle"));

  std::vector<AdamState> states;
  auto params = net.parameters();
  for (const auto *p : params)
    states.emplace_back(p->value);

  ForwardCache cache;
  std::vector<double> xb, yb;
  std::vector<EpochLoss> history;
  history.reserve(cfg.epochs);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle_each_epoch)
      shuffle_indices(order, rng);
    double weighted = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      xb.clear();
      yb.clear();
      for (std::size_t q = start; q < end; ++q) {
        auto w = train_set.window(order[q]);
        xb.insert(xb.end(), w.begin(), w.end());
        yb.push_back(train_set.targets[order[q]]);
      }
      net.zero_grad();
      const double loss = net.loss_and_gradients(xb, yb, cache);
      if (!std::isfinite(loss))
        throw Error(ErrorCode::DivergedLoss, "training loss became " + std::to_string(loss) +
                                                 " in epoch " + std::to_string(epoch));
      if (cfg.clip_norm > 0.0)
        clip_global_norm(params, cfg.clip_norm);
      for (std::size_t i = 0; i < params.size(); ++i)
        adam_step(*params[i], states[i], cfg.adam);
      weighted += loss * static_cast<double>(end - start);
    }
    EpochLoss e;
    e.epoch = epoch;
    e.train_mse = weighted / static_cast<double>(n);
    e.val_mse = std::numeric_limits<double>::quiet_NaN();
    if (validation && validation->size() > 0)
      e.val_mse = net.loss(validation->inputs, validation->targets);
    history.push_back(e);
  }
  return history;
}

void write_loss_history(std::ostream &out, std::span<const EpochLoss> history) {
  out << "epoch,train_mse,val_mse\n";
  char buf[96];
  for (const auto &e : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", e.epoch, e.train_mse, e.val_mse);
    out << buf;
  }
}

std::vector<double> ForecastRun::actual() const {
  std::vector<double> v;
  v.reserve(points.size());
  for (const auto &p : points)
    v.push_back(p.actual);
  return v;
}

std::vector<double> ForecastRun::predicted() const {
  std::vector<double> v;
  v.reserve(points.size());
  for (const auto &p : points)
    v.push_back(p.predicted);
  return v;
}

std::size_t evaluation_start(std::size_t series_len, std::size_t eval_days) {
  if (eval_days == 0 || eval_days > series_len)
    throw Error(ErrorCode::SeriesTooShort, "evaluation window of " + std::to_string(eval_days) +
                                               " days does not fit a series of " +
                                               std::to_string(series_len));
  return series_len - eval_days;
}

ForecastRun rolling_forecast(const TrainedModel &model, const TimeSeries &series,
                             std::size_t horizon, std::size_t eval_days) {
  const ModelConfig &mc = model.config();
  if (horizon != mc.horizon)
    throw Error(ErrorCode::InvalidConfig, "model was trained for h=" + std::to_string(mc.horizon) +
                                              ", asked to forecast h=" + std::to_string(horizon));
  const std::size_t len = series.size(), W = mc.window_len;
  const std::size_t start = evaluation_start(len, eval_days);
  if (start < horizon + W - 1)
    throw Error(ErrorCode::SeriesTooShort,
                "series of length " + std::to_string(len) + " cannot supply a window of " +
                    std::to_string(W) + " before the first target of a " +
                    std::to_string(eval_days) + "-day evaluation at h=" + std::to_string(horizon));

  ForecastRun run;
  run.model_id = mc.model_id();
  run.country_code = series.country_code;
  run.column = series.column;
  run.horizon = horizon;
  run.eval_days = eval_days;

  std::vector<double> windows;
  for (std::size_t target = start; target < len; target += horizon) {
    const std::size_t origin = target - horizon;
    for (std::size_t j = origin + 1 - W; j <= origin; ++j)
      windows.push_back(model.scaler.apply(series.values[j]));
    ForecastPoint p;
    p.index = target;
    p.date = series.date_at(target);
    p.actual = series.values[target];
    run.points.push_back(p);
  }
  const auto pred = model.network.predict_batch(windows);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    run.points[i].predicted = model.scaler.invert(pred[i]);
    if (!std::isfinite(run.points[i].predicted))
      throw Error(ErrorCode::DivergedLoss, "non-finite forecast at series index " +
                                               std::to_string(run.points[i].index));
  }
  return run;
}

std::string dataset_id(Column column, std::size_t horizon, std::string_view country_code) {
  std::string what;
  switch (column) {
  case Column::CumulativeCases:
    what = "New Cases";
    break;
  case Column::CumulativeDeaths:
    what = "New Deaths";
    break;
  case Column::NewCases:
    what = "Daily Cases";
    break;
  case Column::NewDeaths:
    what = "Daily Deaths";
    break;
  }
  return what + " " + std::to_string(horizon) + "-day " + std::string(country_code);
}

namespace {

SeedOutcome run_seed_impl(const TimeSeries &series, const ExperimentSpec &spec,
                          std::uint64_t seed, Warnings *warnings) {
  const std::size_t h = spec.horizon;
  ModelConfig mc = spec.model;
  mc.seed = seed;
  mc.horizon = h;

  const auto split = split_series(series.values, spec.train_frac, spec.val_frac);
  const auto scaler = MinMaxScaler::fit(split.train);
  const auto scaled_train = scaler.apply(split.train);
  const auto scaled_val = scaler.apply(split.validation);

  const auto train_ds = build_windows(scaled_train, mc.window_len, h, 0);
  std::optional<WindowedDataset> val_ds;
  if (scaled_val.size() >= mc.window_len + h)
    val_ds = build_windows(scaled_val, mc.window_len, h, split.sizes.train);
  else if (warnings && spec.val_frac > 0.0)
    warnings->push_back("validation split of " + std::to_string(scaled_val.size()) +
                        " values is too short for W + h; validation loss not recorded");

  const std::size_t start = evaluation_start(series.size(), spec.eval_days);
  const std::size_t test_start = split.sizes.train + split.sizes.validation;
  if (warnings && start < test_start)
    warnings->push_back(dataset_id(series.column, h, series.country_code) + ": the " +
                        std::to_string(spec.eval_days) + "-day evaluation window starts " +
                        std::to_string(test_start - start) +
                        " days before the test split (series has " +
                        std::to_string(series.size()) + " days)");

  SeedOutcome out;
  out.seed = seed;
  out.model = build_model(mc);
  out.model.scaler = scaler;
  out.history = train(out.model, train_ds, val_ds ? &*val_ds : nullptr, spec.train);
  out.run = rolling_forecast(out.model, series, h, spec.eval_days);
  out.report = evaluate_forecast(out.run.actual(), out.run.predicted(),
                                 dataset_id(series.column, h, series.country_code), mc.model_id(),
                                 std::to_string(seed), spec.score_mode, warnings);
  return out;
}

} // namespace

SeedOutcome run_seed(const TimeSeries &series, const ExperimentSpec &spec, std::uint64_t seed,
                     Warnings *warnings) {
  try {
    return run_seed_impl(series, spec, seed, warnings);
  } catch (const Error &e) {
    ModelConfig mc = spec.model;
    throw Error(e.code(), dataset_id(series.column, spec.horizon, series.country_code) + " / " +
                              mc.model_id() + " / seed " + std::to_string(seed) + ": " +
                              e.what());
  }
}

ExperimentResult run_experiment(std::span<const SeriesRecord> records, const ExperimentSpec &spec) {
  if (spec.seeds.empty())
    throw Error(ErrorCode::InvalidValue, "experiment needs at least one seed");
  ExperimentResult result;
  result.dataset_id = dataset_id(spec.column, spec.horizon, spec.country_code);
  result.model_id = spec.model.model_id();
  TimeSeries series;
  try {
    series = extract_series(records, spec.country_code, spec.column, spec.range,
                            &result.warnings);
  } catch (const Error &e) {
    throw Error(e.code(), result.dataset_id + ": " + e.what());
  }
  std::vector<MetricReport> reports;
  for (auto seed : spec.seeds) {
    result.outcomes.push_back(run_seed(series, spec, seed, &result.warnings));
    reports.push_back(result.outcomes.back().report);
  }
  result.mean = mean_report(reports, spec.score_mode);
  return result;
}

} // namespace covcast
