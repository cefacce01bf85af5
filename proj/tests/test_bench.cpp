// SPDX-License-Identifier: Apache-2.0
#include "covcast/bench.hpp"
#include "covcast/error.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace covcast;
namespace fs = std::filesystem;

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

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string &name) {
  auto p = fs::temp_directory_path() / ("covcast_test_" + name);
  fs::remove_all(p);
  return p;
}

double field(const std::string &text, const std::string &key) {
  const auto pos = text.find(key + " = ");
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + key.size() + 3));
}

std::size_t data_rows(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#')
      ++n;
  return n;
}

// A grid small enough to train in a few seconds.
BenchConfig small_grid(const fs::path &out) {
  BenchConfig cfg;
  cfg.data_path = oracle::fixture("who_au_ir.csv");
  cfg.countries = {"AU"};
  cfg.targets = {Column::CumulativeDeaths};
  cfg.horizons = {1, 7};
  cfg.variants = {{Variant::Lstm, false}, {Variant::Gru, true}, {Variant::ConvLstm, false}};
  cfg.epochs = 3;
  cfg.num_layers = 1;
  cfg.hidden_units = 4;
  cfg.conv_filters = 3;
  cfg.output_dir = out.string();
  return cfg;
}

} // namespace

TEST_CASE("configuration text") {
  SUBCASE("empty file plus data path gives the defaults") {
    BenchConfig cfg;
    std::istringstream empty("");
    apply_config_text(cfg, empty);
    apply_setting(cfg, "data", "fixtures/who.csv");
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.countries == std::vector<std::string>{"AU", "IR"});
    CHECK(cfg.horizons == std::vector<std::size_t>{1, 3, 7});
    CHECK(cfg.variants.size() == 6);
    CHECK(cfg.window_len == 4);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{42});
    CHECK(cfg.train_frac == 0.70);
    CHECK(cfg.val_frac == 0.20);
    CHECK(cfg.epochs == 200);
    CHECK(cfg.batch_size == 16);
    CHECK(cfg.eval_days == 100);
    CHECK(cfg.alpha == 0.05);
  }
  SUBCASE("lists, comments and overrides") {
    BenchConfig cfg;
    std::istringstream in("# grid\nhorizons = 1,3,7\nvariants = bi_gru, conv_lstm # two\n"
                          "targets = new_cases\nseeds=1,2,3\nactivation = TANH\n");
    apply_config_text(cfg, in);
    CHECK(cfg.horizons == std::vector<std::size_t>{1, 3, 7});
    REQUIRE(cfg.variants.size() == 2);
    CHECK(cfg.variants[0] == ModelKind{Variant::Gru, true});
    CHECK(cfg.variants[1] == ModelKind{Variant::ConvLstm, false});
    CHECK(cfg.targets == std::vector<Column>{Column::NewCases});
    CHECK(cfg.seeds.size() == 3);
    CHECK(cfg.activation == Activation::Tanh);
    apply_setting(cfg, "horizons", "3"); // later settings win
    CHECK(cfg.horizons == std::vector<std::size_t>{3});
  }
  SUBCASE("errors") {
    BenchConfig cfg;
    CHECK(code_of([&] { apply_setting(cfg, "epochs", "-5"); }) == ErrorCode::InvalidValue);
    CHECK(code_of([&] { apply_setting(cfg, "epochs", "0"); }) == ErrorCode::InvalidValue);
    CHECK(code_of([&] { apply_setting(cfg, "epochs", "2.5"); }) == ErrorCode::InvalidValue);
    CHECK(code_of([&] { apply_setting(cfg, "horizons", "1,,7"); }) == ErrorCode::InvalidValue);
    CHECK(code_of([&] { apply_setting(cfg, "variants", "transformer"); }) ==
          ErrorCode::InvalidValue);
    CHECK(code_of([&] { apply_setting(cfg, "activation", "sigmoid"); }) ==
          ErrorCode::InvalidValue);
    CHECK(code_of([&] { apply_setting(cfg, "learning_rate", "0.1"); }) == ErrorCode::UnknownKey);
    std::istringstream bad("epochs 5\n");
    CHECK(code_of([&] { apply_config_text(cfg, bad); }) == ErrorCode::InvalidValue);
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::MissingDataPath);
    cfg.data_path = "x.csv";
    cfg.train_frac = 1.0;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidValue);
    cfg.train_frac = 0.7;
    cfg.window_len = 5; // Conv-LSTM needs an even window
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidValue);
  }
  SUBCASE("describe round-trips") {
    BenchConfig cfg;
    cfg.data_path = "who.csv";
    cfg.horizons = {2, 5};
    cfg.seeds = {9, 10};
    cfg.alpha = 0.1;
    BenchConfig back;
    std::istringstream in(describe(cfg));
    apply_config_text(back, in);
    CHECK(describe(back) == describe(cfg));
  }
}

TEST_CASE("job grid") {
  BenchConfig cfg;
  auto jobs = job_grid(cfg);
  REQUIRE(jobs.size() == 72);
  CHECK(jobs.front().dataset() == "New Cases 1-day AU");
  CHECK(jobs.front().model() == "LSTM");
  CHECK(jobs[5].model() == "Bi-Conv-LSTM");
  CHECK(jobs.back().dataset() == "New Deaths 7-day IR");
  cfg.seeds = {1, 2};
  CHECK(job_grid(cfg).size() == 144);
  CHECK(file_stem("New Cases 1-day AU", "Bi-GRU", 42) == "new_cases_1-day_au__bi-gru__s42");
}

TEST_CASE("report csv") {
  std::vector<MetricReport> rows{{"New Cases 1-day AU", "LSTM", "42", 0.1, 12.5, 0.3, 0.9, 3.45},
                                 {"New Cases 1-day AU", "GRU", "mean", std::nan(""), std::nan(""),
                                  std::nan(""), std::nan(""), 0.49}};
  std::stringstream buf;
  write_report_csv(buf, rows);
  auto back = read_report_csv(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[0].mape == 12.5);
  CHECK(back[0].seed == "42");
  CHECK(std::isnan(back[1].msle));
  CHECK(back[1].aggregate_score == 0.49);

  std::istringstream wrong("dataset,model,score\n");
  CHECK(code_of([&] { read_report_csv(wrong); }) == ErrorCode::SchemaMismatch);
  std::istringstream short_row("dataset_id,model_id,seed,msle,mape,rmsle,ev,aggregate_score\n"
                               "a,b,1,2\n");
  CHECK(code_of([&] { read_report_csv(short_row); }) == ErrorCode::SchemaMismatch);
}

TEST_CASE("score tables") {
  std::ifstream in(oracle::fixture("published_scores.csv"));
  auto rows = read_report_csv(in);
  REQUIRE(rows.size() == 72);
  auto t = score_table(rows, ScoreMode::Published);
  CHECK(t.datasets.size() == 12);
  CHECK(t.models.size() == 6);
  CHECK(t.scores(0, 0) == 0.49265);
  CHECK(t.scores(0, 2) == 0.71);

  // Seed-mean rows take precedence over per-seed rows.
  std::vector<MetricReport> seeded{{"d", "A", "1", 1, 1, 1, 1, 1}, {"d", "A", "2", 3, 3, 3, 3, 3},
                                   {"d", "A", "mean", 2, 2, 2, 2, 2}};
  auto s = score_table(seeded, ScoreMode::Published);
  CHECK(s.scores(0, 0) == 2.0);
  seeded.pop_back();
  CHECK(score_table(seeded, ScoreMode::Published).scores(0, 0) == 2.0);
}

TEST_CASE("stats command") {
  std::ostringstream out, err;
  StatsOptions fx;
  fx.rank_fixture_path = oracle::fixture("published_ranks.csv");
  REQUIRE(cmd_stats(fx, out, err) == 0);
  CHECK(field(out.str(), "chi2_F") == doctest::Approx(10.84).epsilon(0.02 / 10.84));
  CHECK(field(out.str(), "F_F") == doctest::Approx(2.43).epsilon(0.02 / 2.43));
  CHECK(field(out.str(), "critical value") == doctest::Approx(2.38).epsilon(0.01 / 2.38));
  CHECK(out.str().find("decision = reject") != std::string::npos);
  CHECK(out.str().find("best model = Bi-GRU") != std::string::npos);

  std::ostringstream out3;
  StatsOptions t3;
  t3.report_path = oracle::fixture("published_scores.csv");
  REQUIRE(cmd_stats(t3, out3, err) == 0);
  CHECK(out3.str().find("best model = Bi-GRU") != std::string::npos);

  // One model only.
  const auto single = scratch("single.csv");
  {
    std::ofstream f(single);
    f << "dataset_id,model_id,seed,msle,mape,rmsle,ev,aggregate_score\n"
         "a,LSTM,1,,,,,0.5\nb,LSTM,1,,,,,0.7\n";
  }
  std::ostringstream out1, err1;
  StatsOptions s1;
  s1.report_path = single.string();
  CHECK(cmd_stats(s1, out1, err1) != 0);
  CHECK(err1.str().find("DegenerateTable") != std::string::npos);
  fs::remove(single);

  StatsOptions none;
  std::ostringstream e2;
  CHECK(cmd_stats(none, out1, e2) != 0);
}

TEST_CASE("dry run touches no files") {
  const auto out = scratch("dry");
  BenchConfig cfg = small_grid(out);
  std::ostringstream log;
  REQUIRE(cmd_run(cfg, {true}, log) == 0);
  CHECK_FALSE(fs::exists(out));
  CHECK(log.str().find("6 jobs") != std::string::npos);

  BenchConfig full;
  full.data_path = oracle::fixture("who_au_ir.csv");
  full.output_dir = out.string();
  std::ostringstream full_log;
  REQUIRE(cmd_run(full, {true}, full_log) == 0);
  CHECK(full_log.str().find("72 jobs per seed") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("run writes every output deterministically") {
  const auto a = scratch("run_a"), b = scratch("run_b");
  BenchConfig ca = small_grid(a), cb = small_grid(b);
  ca.jobs = 1;
  cb.jobs = 3;
  std::ostringstream la, lb;
  REQUIRE(cmd_run(ca, {}, la) == 0);
  REQUIRE(cmd_run(cb, {}, lb) == 0);

  for (const char *f : {"report.csv", "ranks.txt", "friedman.txt"})
    CHECK(slurp(a / f) == slurp(b / f));
  std::size_t files = 0;
  for (const char *dir : {"predictions", "histograms", "losses", "models"})
    for (const auto &e : fs::directory_iterator(a / dir)) {
      ++files;
      CHECK(slurp(e.path()) == slurp(b / dir / e.path().filename()));
    }
  CHECK(files == 6 * 4);
  // The run log echoes the jobs setting, the only intended difference.
  CHECK(slurp(a / "runlog.txt").find("jobs = 1") != std::string::npos);

  std::ifstream rep(a / "report.csv");
  auto rows = read_report_csv(rep);
  CHECK(rows.size() == 6);

  const auto stem = file_stem("New Deaths 7-day AU", "Bi-GRU", 42);
  const auto pred = slurp(a / "predictions" / (stem + ".dat"));
  CHECK(data_rows(pred) == 15);
  const auto hist = slurp(a / "histograms" / (stem + ".dat"));
  std::istringstream hs(hist);
  std::string line;
  std::size_t total = 0;
  while (std::getline(hs, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    std::istringstream ls(line);
    double lo, hi;
    std::size_t count;
    ls >> lo >> hi >> count;
    total += count;
  }
  CHECK(total == 15);

  auto model = load_model_file((a / "models" / (stem + ".hzb")).string());
  CHECK(model.config().model_id() == "Bi-GRU");
  CHECK(model.config().horizon == 7);

  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("failing jobs are named and make the run fail") {
  const auto out = scratch("fail");
  BenchConfig cfg = small_grid(out);
  cfg.countries = {"AU", "XX"};
  cfg.variants = {{Variant::Lstm, false}};
  cfg.horizons = {1};
  std::ostringstream log;
  CHECK(cmd_run(cfg, {}, log) != 0);
  CHECK(log.str().find("FAILED New Deaths 1-day XX | LSTM | seed 42") != std::string::npos);
  const auto runlog = slurp(out / "runlog.txt");
  CHECK(runlog.find("1 of 2 jobs succeeded") != std::string::npos);
  CHECK(runlog.find("FAILED New Deaths 1-day XX") != std::string::npos);
  fs::remove_all(out);
}
