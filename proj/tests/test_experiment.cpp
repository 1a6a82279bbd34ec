#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "riesz/experiment.hpp"
#include "riesz/serialization.hpp"

namespace riesz {
namespace {

std::string tmp_path(const std::string& name) { return std::string(RIESZ_TEST_TMPDIR) + "/experiment_" + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EstimatorSpec est(EstimatorKind kind, double l2 = 0.0, double l1 = 0.0) {
  EstimatorSpec e;
  e.kind = kind;
  e.l2 = l2;
  e.l1 = l1;
  return e;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  AteDgpConfig dgp;
  dgp.p = 2;
  dgp.propensity_coefs = {0.5, -0.5};
  dgp.outcome_coefs = {1.0, 0.5};
  cfg.dgp = dgp;
  cfg.basis = "poly-t:2";
  cfg.estimators = {est(EstimatorKind::RieszLoss), est(EstimatorKind::Rayleigh), est(EstimatorKind::Lasso, 0.0, 0.05),
                    est(EstimatorKind::RayleighL1, 0.0, 0.05)};
  cfg.sample_sizes = {100, 200};
  cfg.replications = 3;
  cfg.master_seed = 11;
  cfg.record_timing = false;
  return cfg;
}

TEST(Experiment, RowCountAndOrdering) {
  const auto rows = run_experiment(small_config());
  ASSERT_EQ(rows.size(), 2u * 4u * 3u);
  EXPECT_EQ(rows.front().estimator, "riesz-loss");
  EXPECT_EQ(rows.front().n, 100u);
  EXPECT_EQ(rows[1].replication, 1u);
  EXPECT_EQ(rows[3].estimator, "rayleigh");
  EXPECT_EQ(rows[6].estimator, "lasso[l1=0.05]");
  EXPECT_EQ(rows.back().n, 200u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.error.empty()) << r.error;
    EXPECT_TRUE(std::isfinite(r.rr_mse));
    EXPECT_TRUE(r.dr_estimate);
    EXPECT_EQ(r.runtime_ms, 0.0);
  }
}

TEST(Experiment, RieszLossAndRayleighRowsAgree) {
  for (const auto& r : run_experiment(small_config())) {
    if (r.estimator == "riesz-loss" || r.estimator == "rayleigh") {
      ASSERT_TRUE(r.equivalence_max_rel_diff);
      EXPECT_LE(*r.equivalence_max_rel_diff, 1e-8);
    } else {
      EXPECT_FALSE(r.equivalence_max_rel_diff);
    }
  }
}

TEST(Experiment, ByteIdenticalAcrossRunsAndThreadCounts) {
  auto cfg = small_config();
  cfg.output_path = tmp_path("a.csv");
  run_experiment(cfg);
  cfg.output_path = tmp_path("b.csv");
  run_experiment(cfg);
  cfg.output_path = tmp_path("c.csv");
  cfg.threads = 3;
  run_experiment(cfg);
  const auto a = slurp(tmp_path("a.csv"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(tmp_path("b.csv")));
  EXPECT_EQ(a, slurp(tmp_path("c.csv")));
}

TEST(Experiment, ReplicationsUseDistinctSeeds) {
  const auto cfg = small_config();
  const auto r0 = run_replication(cfg, 100, 0);
  const auto r1 = run_replication(cfg, 100, 1);
  EXPECT_NE(r0[0].weighting_estimate, r1[0].weighting_estimate);
  // A single cell reproduces its row in the full run.
  const auto rows = run_experiment(cfg);
  EXPECT_EQ(rows[1].weighting_estimate, r1[0].weighting_estimate);
}

TEST(Experiment, OneRowAndEmptyCsvShapes) {
  auto cfg = small_config();
  cfg.estimators = {est(EstimatorKind::RieszLoss)};
  cfg.sample_sizes = {50};
  cfg.replications = 1;
  cfg.output_path = tmp_path("one.csv");
  run_experiment(cfg);
  const auto text = slurp(cfg.output_path);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(text.substr(0, text.find('\n')), kResultsHeader);

  write_results({}, tmp_path("empty.csv"));
  EXPECT_EQ(slurp(tmp_path("empty.csv")), std::string(kResultsHeader) + "\n");
  EXPECT_TRUE(read_results(tmp_path("empty.csv")).empty());
}

TEST(Experiment, ResultsRoundTripThroughCsv) {
  auto cfg = small_config();
  cfg.output_path = tmp_path("roundtrip.csv");
  cfg.record_timing = true;
  const auto rows = run_experiment(cfg);
  const auto back = read_results(cfg.output_path);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].estimator, rows[i].estimator);
    EXPECT_EQ(back[i].n, rows[i].n);
    EXPECT_EQ(back[i].replication, rows[i].replication);
    EXPECT_EQ(back[i].rr_mse, rows[i].rr_mse);
    EXPECT_EQ(back[i].weighting_estimate, rows[i].weighting_estimate);
    EXPECT_EQ(back[i].dr_estimate, rows[i].dr_estimate);
    EXPECT_EQ(back[i].objective_value, rows[i].objective_value);
    EXPECT_EQ(back[i].equivalence_max_rel_diff, rows[i].equivalence_max_rel_diff);
    EXPECT_EQ(back[i].runtime_ms, rows[i].runtime_ms);
  }
}

TEST(Experiment, FailingEstimatorIsRecordedNotFatal) {
  auto cfg = small_config();
  auto bad = est(EstimatorKind::NnRiesz);
  bad.hidden = {4};
  bad.train.learning_rate = 1e308;
  bad.train.max_epochs = 50;
  bad.label = "nn, diverging";
  cfg.estimators = {est(EstimatorKind::RieszLoss), bad};
  cfg.sample_sizes = {60};
  cfg.replications = 1;
  cfg.output_path = tmp_path("failure.csv");
  const auto rows = run_experiment(cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].error.empty());
  EXPECT_NE(rows[1].error.find("non-finite"), std::string::npos) << rows[1].error;
  EXPECT_TRUE(std::isnan(rows[1].rr_mse));
  const auto back = read_results(cfg.output_path);
  EXPECT_EQ(back[1].estimator, "nn, diverging");
  EXPECT_EQ(back[1].error, rows[1].error);
}

TEST(Experiment, UnwritableOutputFailsBeforeRunning) {
  auto cfg = small_config();
  cfg.output_path = "/nonexistent-dir/out.csv";
  EXPECT_THROW(run_experiment(cfg), IoError);
}

TEST(Experiment, ShiftDesign) {
  ExperimentConfig cfg;
  ShiftDgpConfig dgp;
  dgp.n_target = 300;
  dgp.mean_shift = 0.5;
  cfg.dgp = dgp;
  cfg.basis = "poly:3";
  cfg.estimators = {est(EstimatorKind::RieszLoss), est(EstimatorKind::Rayleigh)};
  cfg.sample_sizes = {300};
  cfg.record_timing = false;
  const auto rows = run_experiment(cfg);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.error.empty()) << r.error;
    EXPECT_LE(*r.equivalence_max_rel_diff, 1e-8);
  }
}

TEST(Config, JsonRoundTripAndValidation) {
  auto cfg = small_config();
  auto nn = est(EstimatorKind::NnRayleigh);
  nn.hidden = {8, 4};
  nn.train.max_epochs = 17;
  nn.init_seed = 5;
  cfg.estimators.push_back(nn);
  const auto j = to_json(cfg);
  const auto back = experiment_config_from_json(j);
  EXPECT_EQ(to_json(back), j);

  auto unknown = j;
  unknown["unexpected"] = 1;
  EXPECT_THROW(experiment_config_from_json(unknown), ConfigError);
  auto bad_estimator = j;
  bad_estimator["estimators"][0]["name"] = "ridge";
  EXPECT_THROW(experiment_config_from_json(bad_estimator), ConfigError);

  auto invalid = small_config();
  invalid.estimators = {est(EstimatorKind::Lasso)};
  EXPECT_THROW(invalid.validate(), ConfigError);
  invalid.estimators = {};
  EXPECT_THROW(invalid.validate(), ConfigError);
  EXPECT_THROW(load_experiment_config(tmp_path("missing.json")), IoError);
}

}  // namespace
}  // namespace riesz
