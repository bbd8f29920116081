#include <doctest.h>

#include <cmath>
#include <sstream>

#include "tlerc/harness.hpp"
#include "tlerc/report.hpp"

using namespace tlerc;

namespace {

TargetData small_target() {
  SyntheticConfig sc;
  sc.vocab_size = 25;
  sc.turns = 4;
  sc.n_conversations = 12;
  sc.seed = 3;
  TargetData d;
  d.train = generate_synthetic(sc);
  sc.n_conversations = 4;
  sc.seed = 4;
  sc.id_prefix = "v";
  d.val = generate_synthetic(sc);
  sc.seed = 5;
  sc.id_prefix = "t";
  d.test = generate_synthetic(sc);
  d.vocab = build_vocab(d.train, 1);
  d.labels = LabelSet::from_corpus(d.train);
  return d;
}

ExperimentSpec small_spec(const TargetData& d) {
  ExperimentSpec s;
  s.arms = {{"random", TransferVariant::random, Adaptation::finetune_all},
            {"frozen", TransferVariant::random, Adaptation::freeze_encoder}};
  s.fractions = {0.5, 1.0};
  s.seeds = {1, 2};
  s.model.vocab_size = d.vocab.size();
  s.model.embed_dim = 4;
  s.model.encoder_hidden = 3;
  s.model.context_hidden = 4;
  s.model.labels = d.labels.names();
  s.training.max_epochs = 3;
  s.training.patience = 2;
  s.training.batch_size = 4;
  return s;
}

std::string records_text(const ExperimentReport& r) {
  std::ostringstream out;
  write_jsonl(out, experiment_records(r));
  return out.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("adam first step moves each coordinate by about lr") {
  ParameterSet ps;
  ps.add("w", Tensor::vector({0.5, -2.0, 3.0}));
  GradientMap g{{"w", Tensor::vector({1e-3, -4.0, 250.0})}};
  Optimizer opt(OptimizerKind::adam, 0.01);
  const auto before = ps.at("w");
  opt.step(ps, g);
  for (std::size_t i = 0; i < 3; ++i) {
    const double d = std::abs(ps.at("w")[i] - before[i]);
    CHECK(d >= 0.99 * 0.01);
    CHECK(d <= 0.01);
  }
  CHECK(ps.at("w")[1] > before[1]);
}

TEST_CASE("zero gradients leave parameters alone") {
  for (auto kind : {OptimizerKind::adam, OptimizerKind::rmsprop}) {
    ParameterSet ps;
    ps.add("w", Tensor::vector({1.0, 2.0}));
    Optimizer opt(kind, 0.1);
    opt.step(ps, {{"w", Tensor::zeros({2})}});
    CHECK(ps.at("w") == Tensor::vector({1.0, 2.0}));
  }
}

TEST_CASE("adam minimizes a parabola") {
  ParameterSet ps;
  ps.add("t", Tensor::scalar(1.0));
  Optimizer opt(OptimizerKind::adam, 1e-2);
  double theta = 1.0, m = 0.0, v = 0.0;
  for (int i = 1; i <= 250; ++i) {
    const double g = 2.0 * theta;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta -= 1e-2 * (m / (1 - std::pow(0.9, i))) / (std::sqrt(v / (1 - std::pow(0.999, i))) + 1e-8);
    opt.step(ps, {{"t", Tensor::scalar(2.0 * ps.at("t")[0])}});
    CHECK(ps.at("t")[0] == doctest::Approx(theta).epsilon(1e-12));
    // Still about 0.0156 at step 200; below 1e-2 from step ~210.
    if (i == 200) CHECK(std::abs(theta) < 0.02);
  }
  CHECK(std::abs(ps.at("t")[0]) < 1e-2);
}

TEST_CASE("rmsprop matches a hand recursion") {
  ParameterSet ps;
  ps.add("t", Tensor::scalar(1.0));
  Optimizer opt(OptimizerKind::rmsprop, 0.05);
  double theta = 1.0, ms = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double g = 2.0 * theta;
    ms = 0.9 * ms + 0.1 * g * g;
    theta -= 0.05 * g / (std::sqrt(ms) + 1e-8);
    opt.step(ps, {{"t", Tensor::scalar(2.0 * ps.at("t")[0])}});
  }
  CHECK(ps.at("t")[0] == doctest::Approx(theta).epsilon(1e-14));
}

TEST_CASE("non-finite gradients abort with the parameter name") {
  ParameterSet ps;
  ps.add("w", Tensor::scalar(1.0));
  GradientMap g;
  g.emplace("w", Tensor::unchecked({1}, {std::nan("")}));
  Optimizer opt(OptimizerKind::adam, 0.1);
  try {
    opt.step(ps, g);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("w") != std::string::npos);
  }
  CHECK(ps.at("w")[0] == 1.0);
  CHECK_THROWS_AS(parse_optimizer("sgd"), FormatError);
}

TEST_CASE("grid search") {
  const auto grid = GridSpec::defaults();
  CHECK(grid.cells().size() == 36);

  GridSpec one{{1e-3}, {OptimizerKind::rmsprop}, {4}, {0.5}};
  CHECK(grid_search(one, [](const GridCell&) { return 0.1; }).best == one.cells()[0]);

  // Quality peaks at rmsprop, lr 1e-3, batch 10, dropout 0.5.
  auto quality = [](const GridCell& c) {
    return (c.optimizer == OptimizerKind::rmsprop ? 1.0 : 0.0) - std::abs(std::log10(c.lr) + 3) -
           std::abs(static_cast<double>(c.batch_size) - 10.0) / 100.0 + c.dropout;
  };
  const auto r = grid_search(grid, quality);
  CHECK(r.best == GridCell{OptimizerKind::rmsprop, 1e-3, 10, 0.5});
  CHECK(r.leaderboard.size() == 36);
  CHECK(r.best_metric == doctest::Approx(quality(r.best)));

  const auto tied = grid_search(grid, [](const GridCell&) { return 0.5; });
  CHECK(tied.best.optimizer == OptimizerKind::adam);
  CHECK(tied.best.lr == 1e-4);

  const auto some_fail = grid_search(grid, [](const GridCell& c) {
    if (c.lr == 1e-3) throw NumericError("diverged");
    return c.lr;
  });
  CHECK(some_fail.best.lr == 1e-4);
  CHECK(some_fail.leaderboard[0].error == "diverged");

  try {
    grid_search(one, [](const GridCell&) -> double { throw NumericError("boom"); });
    FAIL("expected failure");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("every cell failed") != std::string::npos);
    CHECK(msg.find("boom") != std::string::npos);
    CHECK(msg.find("rmsprop") != std::string::npos);
  }
}

TEST_CASE("experiments are deterministic and paired") {
  const auto data = small_target();
  auto spec = small_spec(data);
  const auto parallel = run_experiment(spec, data);
  spec.parallel = false;
  const auto serial = run_experiment(spec, data);
  CHECK(records_text(parallel) == records_text(serial));
  CHECK(records_text(run_experiment(spec, data)) == records_text(serial));

  REQUIRE(serial.runs.size() == 8);
  for (const auto& r : serial.runs) {
    CHECK(r.ok);
    CHECK(r.result.best_params.size() == 0);
    CHECK(r.result.val_loss.size() == r.result.epochs_run);
  }
  for (std::uint64_t seed : {1, 2}) {
    CHECK(serial.find("random", 0.5, seed)->train_conversations == 6);
    CHECK(serial.find("frozen", 0.5, seed)->train_conversations == 6);
  }
  // Same starting model; freezing the encoder changes the trajectory.
  CHECK_FALSE(serial.find("random", 1.0, 1)->result.val_loss ==
              serial.find("frozen", 1.0, 1)->result.val_loss);
}

TEST_CASE("aggregates rebuild from run records") {
  const auto data = small_target();
  auto spec = small_spec(data);
  spec.parallel = false;
  const auto report = run_experiment(spec, data);
  for (const auto& agg : report.aggregates) {
    REQUIRE(agg.aggregate);
    std::vector<double> v, be;
    for (auto seed : spec.seeds) {
      const auto* r = report.find(agg.arm, agg.fraction, seed);
      v.push_back(r->result.test_metric);
      be.push_back(static_cast<double>(r->result.best_epoch));
    }
    const auto again = aggregate_runs(v, be);
    CHECK(std::abs(again.mean - agg.aggregate->mean) <= 1e-12);
    CHECK(std::abs(*again.std_error - *agg.aggregate->std_error) <= 1e-12);
    CHECK(again.mean_best_epoch == agg.aggregate->mean_best_epoch);
  }
  CHECK(report.significance.size() == 2);
  for (const auto& s : report.significance) {
    CHECK(s.arm == "frozen");
    CHECK(s.baseline == "random");
  }

  std::vector<nlohmann::json> recs = experiment_records(report);
  const auto path = std::filesystem::temp_directory_path() / "tlerc_report.jsonl";
  write_jsonl(path, recs);
  CHECK(read_jsonl(path) == recs);
  std::filesystem::remove(path);
}

TEST_CASE("single seed has no significance tests") {
  const auto data = small_target();
  auto spec = small_spec(data);
  spec.seeds = {4};
  spec.fractions = {1.0};
  spec.parallel = false;
  const auto report = run_experiment(spec, data);
  CHECK(report.significance.empty());
  CHECK_FALSE(report.aggregates[0].aggregate->std_error);
  CHECK(report.aggregates[0].aggregate->mean == report.runs[0].result.test_metric);
}

TEST_CASE("a failing arm is marked incomplete") {
  const auto data = small_target();
  auto spec = small_spec(data);
  spec.arms.push_back({"transfer", TransferVariant::encoder_plus_context, Adaptation::finetune_all});
  spec.parallel = false;
  const auto report = run_experiment(spec, data);
  const auto* bad = report.aggregate("transfer", 1.0);
  REQUIRE(bad);
  CHECK_FALSE(bad->complete);
  CHECK_FALSE(bad->aggregate);
  CHECK(report.aggregate("random", 1.0)->complete);
  CHECK_FALSE(report.find("transfer", 1.0, 1)->ok);
  CHECK(report.find("transfer", 1.0, 1)->error.find("source") != std::string::npos);
  CHECK_THROWS_AS(run_experiment(ExperimentSpec{}, data), ContractError);
}

TEST_CASE("in-domain fine-tuning") {
  SyntheticConfig sc;
  sc.vocab_size = 25;
  sc.turns = 4;
  sc.n_conversations = 30;
  sc.seed = 2;
  const auto source_corpus = generate_synthetic(sc);
  sc.inertia_prob = 0.9;
  sc.mirror_prob = 0.0;
  sc.signal_prob = 0.9;
  sc.seed = 8;
  const auto target = generate_synthetic(sc);

  const auto vocab = build_vocab(source_corpus, 1);
  HredConfig hc;
  hc.vocab_size = vocab.size();
  hc.embed_dim = 6;
  hc.encoder_hidden = 6;
  hc.context_hidden = 6;
  hc.decoder_hidden = 6;
  auto model = HredModel::create(hc, 1);
  const auto enc = encode_all(source_corpus, vocab);
  PretrainConfig pc;
  pc.epochs = 2;
  model.params() = pretrain(model, enc, enc, pc).best;
  model.params() = round_to_float(model.params());
  const auto source = make_checkpoint(model, vocab);

  pc.epochs = 0;
  CHECK(in_domain_finetune(source, target, target, pc).to_bytes() == source.to_bytes());

  pc.epochs = 10;
  pc.lr = 1e-2;
  const auto tuned = in_domain_finetune(source, target, target, pc);
  const auto target_enc = encode_all(target, vocab);
  const double before = perplexity(hred_from_checkpoint(source), target_enc);
  const double after = perplexity(hred_from_checkpoint(tuned), target_enc);
  CHECK(after < before);
  CHECK(export_context_params(tuned).size() == 8);
  CHECK(vocab_from_checkpoint(tuned) == vocab);
}

}  // TEST_SUITE
