#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "tlerc/checkpoint.hpp"
#include "tlerc/corpus.hpp"
#include "tlerc/harness.hpp"
#include "tlerc/hred.hpp"
#include "tlerc/report.hpp"
#include "tlerc/transfer.hpp"

using namespace tlerc;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_reals(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_csv(s)) {
    std::size_t pos = 0;
    const double v = std::stod(item, &pos);
    if (pos != item.size()) throw FormatError("not a number: " + item);
    out.push_back(v);
  }
  return out;
}

LabelSet union_labels(std::initializer_list<const Corpus*> corpora) {
  std::vector<std::string> names;
  for (const auto* c : corpora) {
    const LabelSet labels = LabelSet::from_corpus(*c);
    names.insert(names.end(), labels.names().begin(), labels.names().end());
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return LabelSet(std::move(names));
}

struct PretrainArgs {
  std::string corpus, val, out, report;
  std::size_t hidden = 16, embed = 16, epochs = 10, batch = 8, latent = 16, min_freq = 5;
  std::size_t max_tokens = 30, max_turns = 10;
  double lr = 1e-3;
  std::string optimizer = "adam";
  std::uint64_t seed = 1;
  bool vhred = false;
};

int run_pretrain(const PretrainArgs& a) {
  const Corpus train = load_corpus(a.corpus);
  const Corpus val = load_corpus(a.val);
  const Vocabulary vocab = build_vocab(train, a.min_freq);
  HredConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.embed_dim = a.embed;
  cfg.encoder_hidden = cfg.context_hidden = cfg.decoder_hidden = a.hidden;
  cfg.latent_dim = a.vhred ? a.latent : 0;
  cfg.max_tokens = a.max_tokens;
  cfg.max_turns = a.max_turns;
  const EncodeOptions opts{a.max_tokens, a.max_turns};
  const auto train_enc = encode_all(train, vocab, nullptr, nullptr, opts);
  const auto val_enc = encode_all(val, vocab, nullptr, nullptr, opts);

  HredModel model = HredModel::create(cfg, a.seed);
  PretrainConfig pc;
  pc.optimizer = parse_optimizer(a.optimizer);
  pc.lr = a.lr;
  pc.epochs = a.epochs;
  pc.batch_size = a.batch;
  pc.seed = a.seed;
  const auto result = pretrain(model, train_enc, val_enc, pc);
  model.params() = result.best;
  make_checkpoint(model, vocab).save(a.out);

  json config = to_json(cfg);
  config["optimizer"] = a.optimizer;
  config["lr"] = a.lr;
  config["epochs"] = a.epochs;
  config["batch_size"] = a.batch;
  config["seed"] = a.seed;
  const auto records = pretrain_records(result, config);
  if (!a.report.empty()) write_jsonl(std::filesystem::path(a.report), records);
  std::cout << "best epoch " << result.best_epoch << ", validation perplexity "
            << result.best_val_perplexity << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus, val, test, variant = "random", source, vectors, adapt = "finetune";
  std::string seeds, fractions = "1.0", exclude, out, model_out, optimizer = "adam";
  std::string fscore = "weighted";
  std::size_t runs = 0, hidden = 16, embed = 16, batch = 8, max_epochs = 300, patience = 10;
  std::size_t min_freq = 5, max_tokens = 30;
  double lr = 1e-3, dropout = 0.0;
  bool serial = false;
};

// Target model shape: follows the source checkpoint when one is given.
ErcConfig target_config(const TrainArgs& a, const Checkpoint* source, const Vocabulary& vocab,
                        const TargetData& data, const ExternalVectors* vectors) {
  ErcConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.embed_dim = a.embed;
  cfg.encoder_hidden = a.hidden;
  cfg.context_hidden = a.hidden;
  if (source != nullptr && source->kind != "context") {
    const auto src = hred_config_from_json(source->config);
    cfg.embed_dim = src.embed_dim;
    cfg.encoder_hidden = src.encoder_hidden;
    cfg.context_hidden = src.context_hidden;
    cfg.latent_dim = src.latent_dim;
  } else if (source != nullptr) {
    cfg.context_hidden = source->config.value("context_hidden", a.hidden);
    cfg.latent_dim = source->config.value("latent_dim", std::size_t{0});
  }
  if (vectors != nullptr) {
    cfg.encoder_kind = SentenceEncoderKind::external;
    cfg.external_dim = vectors->dim();
  }
  if (data.labels.size() > 0) {
    cfg.task = ErcTask::classification;
    cfg.labels = data.labels.names();
  } else {
    cfg.task = ErcTask::regression;
    cfg.dims = data.dims;
  }
  cfg.dropout = a.dropout;
  return cfg;
}

FScoreMode parse_fscore(const std::string& s) {
  if (s == "weighted") return FScoreMode::weighted;
  if (s == "micro") return FScoreMode::micro;
  throw FormatError("unknown F-score mode '" + s + "' (weighted|micro)");
}

struct Loaded {
  TargetData data;
  std::unique_ptr<Checkpoint> source;
  std::shared_ptr<const ExternalVectors> vectors;
};

Loaded load_target(const std::string& corpus, const std::string& val, const std::string& test,
                   const std::string& source, const std::string& vectors, std::size_t min_freq) {
  Loaded l;
  l.data.train = load_corpus(corpus);
  l.data.val = load_corpus(val);
  if (!test.empty()) l.data.test = load_corpus(test);
  if (!source.empty()) l.source = std::make_unique<Checkpoint>(Checkpoint::load(source));
  if (l.source && l.source->config.contains("vocab"))
    l.data.vocab = vocab_from_checkpoint(*l.source);
  else
    l.data.vocab = build_vocab(l.data.train, min_freq);
  l.data.labels = union_labels({&l.data.train, &l.data.val, &l.data.test});
  if (l.data.labels.size() == 0) l.data.dims = target_dimensions(l.data.train);
  if (!vectors.empty())
    l.vectors = std::make_shared<const ExternalVectors>(ExternalVectors::load(vectors));
  return l;
}

int run_train_erc(const TrainArgs& a) {
  auto l = load_target(a.corpus, a.val, a.test, a.source, a.vectors, a.min_freq);
  ExperimentSpec spec;
  spec.arms = {Arm{a.variant, parse_variant(a.variant), parse_adaptation(a.adapt)}};
  spec.fractions = parse_reals(a.fractions);
  spec.seeds.clear();
  if (a.seeds.empty()) {
    for (std::size_t s = 1; s <= std::max<std::size_t>(a.runs, 1); ++s) spec.seeds.push_back(s);
  } else {
    for (const auto& s : split_csv(a.seeds)) spec.seeds.push_back(std::stoull(s));
    if (a.runs && spec.seeds.size() != a.runs)
      throw FormatError("--seeds lists " + std::to_string(spec.seeds.size()) +
                        " seeds but --runs is " + std::to_string(a.runs));
  }
  spec.model = target_config(a, l.source.get(), l.data.vocab, l.data, l.vectors.get());
  spec.training.optimizer = parse_optimizer(a.optimizer);
  spec.training.lr = a.lr;
  spec.training.batch_size = a.batch;
  spec.training.max_epochs = a.max_epochs;
  spec.training.patience = a.patience;
  spec.training.fscore_mode = parse_fscore(a.fscore);
  for (const auto& x : split_csv(a.exclude)) spec.training.exclude_labels.insert(x);
  spec.encode = EncodeOptions{a.max_tokens, 0};
  spec.source = l.source.get();
  spec.vectors = l.vectors;
  spec.parallel = !a.serial;
  spec.keep_params = !a.model_out.empty();

  const auto report = run_experiment(spec, l.data);
  write_jsonl(std::filesystem::path(a.out), experiment_records(report));
  for (const auto& agg : report.aggregates) {
    std::cout << agg.arm << " fraction " << agg.fraction;
    if (agg.aggregate)
      std::cout << ": mean " << agg.aggregate->mean << ", mean best epoch "
                << agg.aggregate->mean_best_epoch;
    std::cout << (agg.complete ? "" : " (incomplete)") << "\n";
  }
  for (const auto& r : report.runs)
    if (!r.ok) std::cerr << "run " << r.arm << " seed " << r.seed << " failed: " << r.error << "\n";

  if (!a.model_out.empty()) {
    const auto& first = report.runs.front();
    if (!first.ok) throw Error("cannot write --model-out: first run failed");
    ErcModel model(spec.model, first.result.best_params, l.vectors);
    const bool trainable = spec.model.encoder_kind == SentenceEncoderKind::trainable;
    make_checkpoint(model, trainable ? &l.data.vocab : nullptr).save(a.model_out);
  }
  return 0;
}

struct GridArgs {
  std::string corpus, val, grid = "default", out, source, variant = "random";
  std::size_t hidden = 16, embed = 16, max_epochs = 300, min_freq = 5;
  std::uint64_t seed = 1;
};

int run_gridsearch(const GridArgs& a) {
  if (a.grid != "default") throw FormatError("unknown grid '" + a.grid + "' (default)");
  auto l = load_target(a.corpus, a.val, "", a.source, "", a.min_freq);
  TrainArgs shape;
  shape.hidden = a.hidden;
  shape.embed = a.embed;
  const ErcConfig base = target_config(shape, l.source.get(), l.data.vocab, l.data, nullptr);
  const auto* dims = l.data.dims.empty() ? nullptr : &l.data.dims;
  const auto train = encode_all(l.data.train, l.data.vocab, &l.data.labels, dims);
  const auto val = encode_all(l.data.val, l.data.vocab, &l.data.labels, dims);
  const TransferSpec ts{parse_variant(a.variant), l.source.get(), Adaptation::finetune_all};

  const auto result = grid_search(GridSpec::defaults(), [&](const GridCell& cell) {
    ErcConfig cfg = base;
    cfg.dropout = cell.dropout;
    ErcModel model = init_target(cfg, ts, a.seed);
    ErcTrainConfig tc;
    tc.optimizer = cell.optimizer;
    tc.lr = cell.lr;
    tc.batch_size = cell.batch_size;
    tc.seed = a.seed;
    tc.max_epochs = a.max_epochs;
    return train_erc(model, train, val, {}, tc).val_metric;
  });
  write_jsonl(std::filesystem::path(a.out), grid_records(result));
  std::cout << "best: " << to_string(result.best.optimizer) << " lr " << result.best.lr
            << " batch " << result.best.batch_size << " dropout " << result.best.dropout
            << " (validation " << result.best_metric << ")\n";
  return 0;
}

struct EvalArgs {
  std::string ckpt, corpus, metric = "wf", exclude, vectors, fscore = "weighted";
};

int run_evaluate(const EvalArgs& a) {
  const Checkpoint ckpt = Checkpoint::load(a.ckpt);
  const Corpus corpus = load_corpus(a.corpus);
  if (ckpt.kind == "hred" || ckpt.kind == "vhred") {
    const HredModel model = hred_from_checkpoint(ckpt);
    const auto vocab = vocab_from_checkpoint(ckpt);
    const EncodeOptions opts{model.config().max_tokens, model.config().max_turns};
    const double ppl = perplexity(model, encode_all(corpus, vocab, nullptr, nullptr, opts));
    std::cout << json{{"type", "eval"}, {"metric", "perplexity"}, {"value", ppl}}.dump() << "\n";
    return 0;
  }
  ErcModel model = erc_from_checkpoint(ckpt);
  const auto& cfg = model.config();
  if (!a.vectors.empty())
    model.set_vectors(std::make_shared<const ExternalVectors>(ExternalVectors::load(a.vectors)));
  const Vocabulary vocab = ckpt.config.contains("vocab") ? vocab_from_checkpoint(ckpt)
                                                         : Vocabulary();
  const LabelSet labels(cfg.labels);
  const auto data = encode_all(corpus, vocab, cfg.task == ErcTask::classification ? &labels : nullptr,
                               cfg.dims.empty() ? nullptr : &cfg.dims);
  std::set<std::string> exclude;
  for (const auto& x : split_csv(a.exclude)) exclude.insert(x);
  if (a.metric == "wf") {
    if (cfg.task != ErcTask::classification)
      throw FormatError("--metric wf needs a classification model");
    const auto eval = evaluate_erc(model, data, exclude, parse_fscore(a.fscore));
    json j = to_json(*eval.fscore);
    j["type"] = "eval";
    std::cout << j.dump() << "\n";
  } else if (a.metric == "pearson") {
    if (cfg.task != ErcTask::regression) throw FormatError("--metric pearson needs a regression model");
    const auto eval = evaluate_erc(model, data);
    std::cout << json{{"type", "eval"}, {"metric", "pearson"}, {"value", eval.metric},
                      {"per_dimension", eval.pearson}}
                     .dump()
              << "\n";
  } else {
    throw FormatError("unknown metric '" + a.metric + "' (wf|pearson)");
  }
  return 0;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dialogue pre-training and transfer to emotion recognition"};
  app.require_subcommand(1);

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain", "Train an HRED/VHRED source model");
  pre->add_option("--corpus", pa.corpus)->required();
  pre->add_option("--val", pa.val)->required();
  pre->add_option("--hidden", pa.hidden);
  pre->add_option("--embed", pa.embed);
  pre->add_option("--epochs", pa.epochs);
  pre->add_option("--batch", pa.batch);
  pre->add_option("--lr", pa.lr);
  pre->add_option("--optimizer", pa.optimizer)->check(CLI::IsMember({"adam", "rmsprop"}));
  pre->add_option("--seed", pa.seed);
  pre->add_option("--out", pa.out)->required();
  pre->add_flag("--vhred", pa.vhred);
  pre->add_option("--latent", pa.latent);
  pre->add_option("--min-freq", pa.min_freq);
  pre->add_option("--max-tokens", pa.max_tokens);
  pre->add_option("--max-turns", pa.max_turns);
  pre->add_option("--report", pa.report, "Perplexity trace (JSONL)");

  std::string ex_ckpt, ex_out;
  auto* ex = app.add_subcommand("export-context", "Write the context transfer set");
  ex->add_option("--ckpt", ex_ckpt)->required();
  ex->add_option("--out", ex_out)->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train-erc", "Train emotion recognition runs");
  tr->add_option("--corpus", ta.corpus)->required();
  tr->add_option("--val", ta.val)->required();
  tr->add_option("--test", ta.test)->required();
  tr->add_option("--variant", ta.variant)
      ->check(CLI::IsMember({"random", "encoder", "encoder+context"}));
  tr->add_option("--source", ta.source);
  tr->add_option("--vectors", ta.vectors);
  tr->add_option("--adapt", ta.adapt)
      ->check(CLI::IsMember({"finetune", "freeze-enc", "freeze-enc-ctx"}));
  tr->add_option("--runs", ta.runs);
  tr->add_option("--seeds", ta.seeds);
  tr->add_option("--fraction", ta.fractions, "One or more comma-separated fractions");
  tr->add_option("--exclude-labels", ta.exclude);
  tr->add_option("--out", ta.out)->required();
  tr->add_option("--model-out", ta.model_out, "Checkpoint of the first run's best model");
  tr->add_option("--hidden", ta.hidden);
  tr->add_option("--embed", ta.embed);
  tr->add_option("--lr", ta.lr);
  tr->add_option("--optimizer", ta.optimizer)->check(CLI::IsMember({"adam", "rmsprop"}));
  tr->add_option("--batch", ta.batch);
  tr->add_option("--dropout", ta.dropout);
  tr->add_option("--max-epochs", ta.max_epochs);
  tr->add_option("--patience", ta.patience);
  tr->add_option("--min-freq", ta.min_freq);
  tr->add_option("--fscore", ta.fscore)->check(CLI::IsMember({"weighted", "micro"}));
  tr->add_flag("--serial", ta.serial, "Run seeds one after another");

  GridArgs ga;
  auto* gs = app.add_subcommand("gridsearch", "Hyper-parameter grid search");
  gs->add_option("--corpus", ga.corpus)->required();
  gs->add_option("--val", ga.val)->required();
  gs->add_option("--grid", ga.grid);
  gs->add_option("--out", ga.out)->required();
  gs->add_option("--source", ga.source);
  gs->add_option("--variant", ga.variant)
      ->check(CLI::IsMember({"random", "encoder", "encoder+context"}));
  gs->add_option("--hidden", ga.hidden);
  gs->add_option("--embed", ga.embed);
  gs->add_option("--max-epochs", ga.max_epochs);
  gs->add_option("--seed", ga.seed);
  gs->add_option("--min-freq", ga.min_freq);

  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a corpus");
  ev->add_option("--ckpt", ea.ckpt)->required();
  ev->add_option("--corpus", ea.corpus)->required();
  ev->add_option("--metric", ea.metric)->check(CLI::IsMember({"wf", "pearson"}));
  ev->add_option("--exclude-labels", ea.exclude);
  ev->add_option("--vectors", ea.vectors);
  ev->add_option("--fscore", ea.fscore)->check(CLI::IsMember({"weighted", "micro"}));

  std::string syn_config, syn_out;
  auto* syn = app.add_subcommand("synth", "Generate a planted-dynamics corpus");
  syn->add_option("--config", syn_config)->required();
  syn->add_option("--out", syn_out)->required();

  std::string sub_corpus, sub_out;
  double sub_fraction = 1.0;
  std::uint64_t sub_seed = 1;
  auto* sub = app.add_subcommand("subsample", "Label-preserving dialogue subsample");
  sub->add_option("--corpus", sub_corpus)->required();
  sub->add_option("--fraction", sub_fraction)->required();
  sub->add_option("--seed", sub_seed);
  sub->add_option("--out", sub_out)->required();

  std::string lex_corpus, lex_lexicon, lex_lemmas;
  std::size_t lex_min_freq = 5;
  auto* lex = app.add_subcommand("profile-lexicon", "Emotion-lexicon profile of a vocabulary");
  lex->add_option("--corpus", lex_corpus)->required();
  lex->add_option("--lexicon", lex_lexicon)->required();
  lex->add_option("--lemmas", lex_lemmas);
  lex->add_option("--min-freq", lex_min_freq);

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return run_pretrain(pa);
    if (ex->parsed()) {
      context_checkpoint(Checkpoint::load(ex_ckpt)).save(ex_out);
      return 0;
    }
    if (tr->parsed()) return run_train_erc(ta);
    if (gs->parsed()) return run_gridsearch(ga);
    if (ev->parsed()) return run_evaluate(ea);
    if (syn->parsed()) {
      save_corpus(syn_out, generate_synthetic(parse_synthetic_config(read_file(syn_config))));
      return 0;
    }
    if (sub->parsed()) {
      if (!(sub_fraction > 0.0 && sub_fraction <= 1.0))
        throw ContractError("--fraction must lie in (0, 1]");
      save_corpus(sub_out, subsample_training(load_corpus(sub_corpus), sub_fraction, sub_seed));
      return 0;
    }
    if (lex->parsed()) {
      const auto vocab = build_vocab(load_corpus(lex_corpus), lex_min_freq);
      const auto lexicon = load_lexicon(lex_lexicon);
      const LemmaMap lemmas = lex_lemmas.empty() ? LemmaMap{} : load_lemmas(lex_lemmas);
      const auto profile = lexicon_profile(vocab, lexicon, lemmas);
      std::cout << json{{"type", "lexicon_profile"},
                        {"vocabulary_tokens", profile.vocabulary_tokens},
                        {"matched_tokens", profile.matched_tokens},
                        {"counts", profile.counts}}
                       .dump()
                << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
