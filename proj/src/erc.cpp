#include "tlerc/erc.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "tlerc/hred.hpp"

namespace tlerc {

ExternalVectors ExternalVectors::parse(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("vector file: missing header line");
  std::size_t dim = 0, count = 0;
  {
    std::istringstream header(line);
    if (!(header >> dim >> count) || dim == 0)
      throw FormatError("vector file: header must be 'dim<TAB>N' with dim >= 1");
  }
  ExternalVectors out(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos)
      throw FormatError("vector file line " + std::to_string(line_no) +
                        ": expected id<TAB>index<TAB>values");
    const std::string id = line.substr(0, tab1);
    std::size_t index = 0;
    try {
      std::size_t pos = 0;
      const std::string idx = line.substr(tab1 + 1, tab2 - tab1 - 1);
      index = std::stoul(idx, &pos);
      if (pos != idx.size()) throw std::invalid_argument(idx);
    } catch (const std::exception&) {
      throw FormatError("vector file line " + std::to_string(line_no) + ": bad utterance index");
    }
    std::istringstream values(line.substr(tab2 + 1));
    std::vector<double> vec;
    double v;
    while (values >> v) vec.push_back(v);
    if (!values.eof() || vec.size() != dim)
      throw FormatError("vector file line " + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values");
    out.add(id, index, std::move(vec));
  }
  if (out.size() != count)
    throw FormatError("vector file: header declares " + std::to_string(count) + " records, found " +
                      std::to_string(out.size()));
  return out;
}

ExternalVectors ExternalVectors::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open vector file " + path.string());
  return parse(in);
}

void ExternalVectors::write(std::ostream& out) const {
  out << dim_ << '\t' << vectors_.size() << '\n';
  out.precision(17);
  for (const auto& [key, vec] : vectors_) {
    out << key.first << '\t' << key.second << '\t';
    for (std::size_t i = 0; i < vec.size(); ++i) out << (i ? " " : "") << vec[i];
    out << '\n';
  }
}

void ExternalVectors::add(const std::string& conversation, std::size_t index,
                          std::vector<double> vec) {
  if (vec.size() != dim_)
    throw ShapeError("external vector for (" + conversation + ", " + std::to_string(index) +
                     ") has " + std::to_string(vec.size()) + " values, expected " +
                     std::to_string(dim_));
  for (double v : vec)
    if (!std::isfinite(v)) throw NumericError("external vector contains a non-finite value");
  if (!vectors_.emplace(std::make_pair(conversation, index), std::move(vec)).second)
    throw FormatError("duplicate external vector for (" + conversation + ", " +
                      std::to_string(index) + ")");
}

const std::vector<double>& ExternalVectors::lookup(const std::string& conversation,
                                                   std::size_t index) const {
  auto it = vectors_.find({conversation, index});
  if (it == vectors_.end())
    throw LookupError("no external vector for (" + conversation + ", " + std::to_string(index) +
                      ")");
  return it->second;
}

bool ExternalVectors::contains(const std::string& conversation, std::size_t index) const {
  return vectors_.contains({conversation, index});
}

ErcModel::ErcModel(ErcConfig config, ParameterSet params,
                   std::shared_ptr<const ExternalVectors> vectors)
    : config_(std::move(config)), params_(std::move(params)), vectors_(std::move(vectors)) {
  validate();
}

ErcModel ErcModel::create(const ErcConfig& config, std::uint64_t seed,
                          std::shared_ptr<const ExternalVectors> vectors) {
  if (config.output_dim() == 0) throw ContractError("ErcModel: empty label/dimension inventory");
  ErcModel model;
  model.config_ = config;
  model.vectors_ = std::move(vectors);
  Rng rng(seed);
  if (config.encoder_kind == SentenceEncoderKind::trainable) {
    if (config.vocab_size <= kNumSpecial)
      throw ContractError("ErcModel: vocabulary must contain tokens beyond the specials");
    model.encoder().init(model.params_, rng);
  } else if (config.external_dim == 0) {
    throw ContractError("ErcModel: external encoder needs external_dim >= 1");
  }
  model.context().init(model.params_, rng);
  if (config.latent_dim > 0)
    VhredParams{config.context_hidden, config.sentence_dim(), config.latent_dim}.init_prior(
        model.params_, rng);
  model.params_.add("head/W", xavier_uniform(config.output_dim(), config.head_input_dim(), rng));
  model.params_.add("head/b", Tensor::zeros({config.output_dim()}));
  return model;
}

EncoderParams ErcModel::encoder() const {
  return EncoderParams{"encoder", config_.vocab_size, config_.embed_dim, config_.encoder_hidden};
}

ContextParams ErcModel::context() const {
  return ContextParams{GruParams{"context", config_.sentence_dim(), config_.context_hidden}};
}

void ErcModel::validate() const {
  if (config_.encoder_kind == SentenceEncoderKind::trainable) {
    encoder().forward().validate(params_);
    encoder().backward().validate(params_);
    if (params_.at(encoder().embedding()).shape() != Shape{config_.vocab_size, config_.embed_dim})
      throw ShapeError("encoder embedding does not match vocab/embed sizes");
  }
  context().validate(params_);
  if (config_.latent_dim > 0)
    for (const auto& name : {VhredParams::prior_mu_W(), VhredParams::prior_mu_b(),
                             VhredParams::prior_sigma_W(), VhredParams::prior_sigma_b()})
      if (!params_.contains(name)) throw SchemaError("missing parameter " + name);
  if (params_.at("head/W").shape() != Shape{config_.output_dim(), config_.head_input_dim()})
    throw ShapeError("head/W is " + shape_str(params_.at("head/W").shape()) + ", expected [" +
                     std::to_string(config_.output_dim()) + " x " +
                     std::to_string(config_.head_input_dim()) + "]");
  if (params_.at("head/b").shape() != Shape{config_.output_dim()})
    throw ShapeError("head/b does not match the output size");
}

namespace {

Var dropout(Var x, double rate, const ForwardOptions& options) {
  if (!options.train || rate <= 0.0) return x;
  if (options.rng == nullptr) throw ContractError("dropout needs an rng in training mode");
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = options.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  return x * x.tape().constant(Tensor::vector(std::move(mask)));
}

struct LossParts {
  std::vector<Var> terms;
  std::size_t count = 0;
};

LossParts loss_parts(Tape& tape, const ErcModel& model, const EncodedConversation& conversation,
                     const ForwardOptions& options) {
  const auto outputs = erc_forward(tape, model, conversation, options);
  const auto& cfg = model.config();
  LossParts parts;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    if (cfg.task == ErcTask::classification) {
      if (t >= conversation.labels.size() || !conversation.labels[t]) continue;
      parts.terms.push_back(ops::cross_entropy(outputs[t], *conversation.labels[t]));
      ++parts.count;
    } else {
      if (t >= conversation.targets.size()) continue;
      const auto& row = conversation.targets[t];
      for (std::size_t d = 0; d < row.size() && d < cfg.dims.size(); ++d) {
        if (!row[d]) continue;
        Var pred = ops::slice(outputs[t], d, 1);
        parts.terms.push_back(ops::mse(pred, tape.constant(Tensor::vector({*row[d]}))));
        ++parts.count;
      }
    }
  }
  return parts;
}

}  // namespace

std::vector<Var> erc_forward(Tape& tape, const ErcModel& model,
                             const EncodedConversation& conversation,
                             const ForwardOptions& options) {
  if (conversation.size() == 0)
    throw ContractError("erc_forward: conversation '" + conversation.id + "' is empty");
  const auto& cfg = model.config();
  const auto& ps = model.params();
  const bool external = cfg.encoder_kind == SentenceEncoderKind::external;
  if (external && model.vectors() == nullptr)
    throw ContractError("erc_forward: external encoder without a vector table");

  EncoderVars enc;
  if (!external) enc = bind(tape, ps, model.encoder());
  ContextVars ctx = bind(tape, ps, model.context());
  PriorVars prior;
  if (cfg.latent_dim > 0) prior = bind_prior(tape, ps);
  Var head_W = tape.param(ps, "head/W");
  Var head_b = tape.param(ps, "head/b");

  Var h = tape.constant(Tensor::zeros({cfg.context_hidden}));
  std::vector<Var> outputs;
  outputs.reserve(conversation.size());
  for (std::size_t t = 0; t < conversation.size(); ++t) {
    Var sentence;
    if (external) {
      const auto& v = model.vectors()->lookup(conversation.id, t);
      sentence = tape.constant(Tensor::vector(v));
    } else {
      sentence = encode_sentence(conversation.utterances[t], enc);
    }
    h = context_step(dropout(sentence, cfg.dropout, options), h, ctx);
    Var features = h;
    if (cfg.latent_dim > 0) features = ops::concat(h, ops::linear(h, prior.W_mu, prior.b_mu));
    outputs.push_back(ops::linear(dropout(features, cfg.dropout, options), head_W, head_b));
  }
  return outputs;
}

ErcLoss erc_loss(Tape& tape, const ErcModel& model, const EncodedConversation& conversation,
                 const ForwardOptions& options) {
  auto parts = loss_parts(tape, model, conversation, options);
  if (parts.count == 0)
    throw ContractError("erc_loss: conversation '" + conversation.id + "' has no labeled turns");
  return ErcLoss{ops::sum_scalars(parts.terms), parts.count};
}

Prediction predict(const ErcModel& model, const EncodedConversation& conversation) {
  Tape tape(false);
  const auto outputs = erc_forward(tape, model, conversation);
  Prediction out;
  for (const auto& o : outputs) {
    const auto v = o.value().values();
    if (model.config().task == ErcTask::classification)
      out.labels.push_back(argmax(v));
    else
      out.values.emplace_back(v.begin(), v.end());
  }
  return out;
}

bool EarlyStopping::update(double loss) {
  ++epochs_;
  improved_ = best_epoch_ == 0 || loss < best_;
  if (improved_) {
    best_ = loss;
    best_epoch_ = epochs_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

double mean_loss(const ErcModel& model, std::span<const EncodedConversation> data) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& conv : data) {
    Tape tape(false);
    auto parts = loss_parts(tape, model, conv, {});
    if (parts.count == 0) continue;
    total += ops::sum_scalars(parts.terms).item();
    count += parts.count;
  }
  if (count == 0) throw ContractError("mean_loss: no labeled turns");
  return total / static_cast<double>(count);
}

Evaluation evaluate_erc(const ErcModel& model, std::span<const EncodedConversation> data,
                        const std::set<std::string>& exclude, FScoreMode mode) {
  const auto& cfg = model.config();
  Evaluation eval;
  if (cfg.task == ErcTask::classification) {
    std::vector<std::string> gold, pred;
    for (const auto& conv : data) {
      const auto p = predict(model, conv);
      for (std::size_t t = 0; t < p.labels.size(); ++t) {
        if (t >= conv.labels.size() || !conv.labels[t]) continue;
        gold.push_back(cfg.labels.at(*conv.labels[t]));
        pred.push_back(cfg.labels.at(p.labels[t]));
      }
    }
    eval.fscore = weighted_fscore(gold, pred, exclude, mode);
    eval.metric = eval.fscore->value;
    return eval;
  }
  std::vector<std::vector<double>> xs(cfg.dims.size()), ys(cfg.dims.size());
  for (const auto& conv : data) {
    const auto p = predict(model, conv);
    for (std::size_t t = 0; t < p.values.size() && t < conv.targets.size(); ++t)
      for (std::size_t d = 0; d < cfg.dims.size() && d < conv.targets[t].size(); ++d)
        if (conv.targets[t][d]) {
          xs[d].push_back(p.values[t][d]);
          ys[d].push_back(*conv.targets[t][d]);
        }
  }
  double sum = 0.0;
  for (std::size_t d = 0; d < cfg.dims.size(); ++d) {
    const double r = pearson_r(xs[d], ys[d]);
    eval.pearson[cfg.dims[d]] = r;
    sum += r;
  }
  eval.metric = sum / static_cast<double>(cfg.dims.size());
  return eval;
}

RunResult train_erc(ErcModel& model, std::span<const EncodedConversation> train,
                    std::span<const EncodedConversation> val,
                    std::span<const EncodedConversation> test, const ErcTrainConfig& config) {
  if (config.batch_size == 0) throw ContractError("train_erc: batch_size must be >= 1");
  if (config.max_epochs == 0) throw ContractError("train_erc: max_epochs must be >= 1");
  if (val.empty()) throw ContractError("train_erc: empty validation set");

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < train.size(); ++i) order.push_back(i);
  if (order.empty()) throw ContractError("train_erc: empty training set");

  Rng rng(config.seed);
  Optimizer optimizer(config.optimizer, config.lr);
  EarlyStopping stopper(config.patience);
  RunResult result;
  result.seed = config.seed;
  result.best_params = model.params();
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_terms = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      ++step;
      try {
        Tape tape;
        tape.set_frozen(&config.frozen);
        ForwardOptions options{true, &rng};
        std::vector<Var> losses;
        for (std::size_t k = start; k < end; ++k) {
          auto parts = loss_parts(tape, model, train[order[k]], options);
          if (parts.count == 0) continue;
          Var loss = ops::sum_scalars(parts.terms);
          epoch_loss += loss.item();
          epoch_terms += parts.count;
          losses.push_back(loss);
        }
        if (losses.empty()) continue;
        Var batch =
            ops::mul_scalar(ops::sum_scalars(losses), 1.0 / static_cast<double>(losses.size()));
        optimizer.step(model.params(), tape.backward(batch), config.frozen);
      } catch (const NumericError& e) {
        throw NumericError("train_erc diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + ": " + e.what());
      }
    }
    if (epoch_terms == 0) throw ContractError("train_erc: training set has no labeled turns");
    const double val_loss = mean_loss(model, val);
    if (!std::isfinite(val_loss))
      throw NumericError("train_erc diverged: non-finite validation loss at epoch " +
                         std::to_string(epoch));
    result.train_loss.push_back(epoch_loss / static_cast<double>(epoch_terms));
    result.val_loss.push_back(val_loss);
    const bool stop = stopper.update(val_loss);
    if (stopper.improved()) result.best_params = model.params();
    if (stop) break;
  }

  result.epochs_run = stopper.epochs();
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best_loss();
  model.params() = result.best_params;

  const auto val_eval = evaluate_erc(model, val, config.exclude_labels, config.fscore_mode);
  result.val_eval = val_eval.fscore;
  result.val_metric = val_eval.metric;
  if (!test.empty()) {
    const auto test_eval = evaluate_erc(model, test, config.exclude_labels, config.fscore_mode);
    result.test_eval = test_eval.fscore;
    result.test_pearson = test_eval.pearson;
    result.test_metric = test_eval.metric;
  }
  return result;
}

}  // namespace tlerc
