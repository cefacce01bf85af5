// SPDX-License-Identifier: Apache-2.0
// covcast: run the forecasting benchmark grid or replay the rank statistics.
#include "covcast/bench.hpp"
#include "covcast/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <utility>
#include <vector>

namespace {

struct Flag {
  const char *name;
  const char *key;
  const char *help;
};

// Flags that map one-to-one onto config keys. Values are kept as text and
// applied after the config file so that flags win.
constexpr Flag kRunFlags[] = {
    {"--data", "data_path", "WHO-format CSV with the daily counts"},
    {"--countries", "countries", "comma-separated ISO country codes"},
    {"--targets", "targets",
     "comma-separated columns (cumulative_cases, cumulative_deaths, new_cases, new_deaths)"},
    {"--horizons", "horizons", "comma-separated forecast horizons in days"},
    {"--variants", "variants",
     "comma-separated models (lstm, gru, conv_lstm, bi_lstm, bi_gru, bi_conv_lstm)"},
    {"--window", "window_len", "input window length W"},
    {"--seeds", "seeds", "comma-separated training seeds"},
    {"--train-frac", "train_frac", "fraction of each series used for training"},
    {"--val-frac", "val_frac", "fraction of the training block held out for validation"},
    {"--epochs", "epochs", "training epochs"},
    {"--batch", "batch_size", "mini-batch size"},
    {"--eval-days", "eval_days", "length of the evaluation window"},
    {"--alpha", "alpha", "significance level of the Iman-Davenport test"},
    {"--out", "output_dir", "output directory"},
    {"--jobs", "jobs", "parallel training jobs (0 = all execution units)"},
    {"--layers", "num_layers", "stacked recurrent layers"},
    {"--hidden", "hidden_units", "units per LSTM/GRU layer"},
    {"--filters", "conv_filters", "filters per Conv-LSTM layer"},
    {"--activation", "activation", "cell activation (relu or tanh)"},
    {"--bins", "histogram_bins", "absolute-error histogram bins"},
};

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"covcast - recurrent COVID-19 forecasting benchmark"};
  app.require_subcommand(1);

  auto *run = app.add_subcommand("run", "train and evaluate the model grid");
  std::string config_path;
  bool dry_run = false, corrected = false;
  std::vector<std::pair<const char *, std::string>> run_values;
  run_values.reserve(std::size(kRunFlags));
  run->add_option("--config", config_path, "key = value configuration file");
  for (const auto &f : kRunFlags) {
    run_values.emplace_back(f.key, std::string());
    run->add_option(f.name, run_values.back().second, f.help);
  }
  run->add_flag("--dry-run", dry_run, "print the job grid without training");
  run->add_flag("--corrected-score", corrected,
                "aggregate with (1 - EV) instead of EV (not the published score)");

  auto *stats = app.add_subcommand("stats", "rank models and run the Friedman test");
  covcast::StatsOptions sopts;
  bool stats_corrected = false;
  auto *report_opt = stats->add_option("--report", sopts.report_path, "report CSV")
                         ->check(CLI::ExistingFile);
  auto *fixture_opt =
      stats->add_option("--rank-fixture", sopts.rank_fixture_path, "ranks CSV (one row per dataset)")
          ->check(CLI::ExistingFile);
  report_opt->excludes(fixture_opt);
  stats->add_option("--alpha", sopts.alpha, "significance level")->capture_default_str();
  stats->add_flag("--corrected-score", stats_corrected, "aggregate with (1 - EV) instead of EV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*stats) {
      if (stats_corrected)
        sopts.score_mode = covcast::ScoreMode::Corrected;
      return covcast::cmd_stats(sopts, std::cout, std::cerr);
    }
    covcast::BenchConfig cfg;
    if (!config_path.empty())
      covcast::apply_config_file(cfg, config_path);
    for (std::size_t i = 0; i < std::size(kRunFlags); ++i)
      if (run->count(kRunFlags[i].name) > 0)
        covcast::apply_setting(cfg, run_values[i].first, run_values[i].second);
    if (corrected)
      cfg.score_mode = covcast::ScoreMode::Corrected;
    covcast::RunOptions opts;
    opts.dry_run = dry_run;
    return covcast::cmd_run(cfg, opts, dry_run ? std::cout : std::cerr);
  } catch (const covcast::Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
