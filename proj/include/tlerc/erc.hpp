#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tlerc/corpus.hpp"
#include "tlerc/metrics.hpp"
#include "tlerc/optim.hpp"
#include "tlerc/params.hpp"
#include "tlerc/recurrent.hpp"
#include "tlerc/tape.hpp"

namespace tlerc {

// Precomputed sentence vectors keyed by (conversation id, utterance index).
// File layout: a header line "dim<TAB>N", then one record per line:
//   conversation_id<TAB>utterance_index<TAB>v1 v2 ... vN
class ExternalVectors {
 public:
  explicit ExternalVectors(std::size_t dim = 0) : dim_(dim) {}

  static ExternalVectors parse(std::istream& in);
  static ExternalVectors load(const std::filesystem::path& path);
  void write(std::ostream& out) const;

  void add(const std::string& conversation, std::size_t index, std::vector<double> vec);
  const std::vector<double>& lookup(const std::string& conversation, std::size_t index) const;
  bool contains(const std::string& conversation, std::size_t index) const;
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }

 private:
  std::size_t dim_;
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> vectors_;
};

enum class ErcTask { classification, regression };
enum class SentenceEncoderKind { trainable, external };

struct ErcConfig {
  SentenceEncoderKind encoder_kind = SentenceEncoderKind::trainable;
  // Trainable bi-GRU encoder.
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 16;
  std::size_t encoder_hidden = 16;
  // External vectors.
  std::size_t external_dim = 0;

  std::size_t context_hidden = 16;
  // Non-zero when the context carries a transferred latent prior; the head
  // then reads [h ; prior mean].
  std::size_t latent_dim = 0;

  ErcTask task = ErcTask::classification;
  std::vector<std::string> labels;  // classification inventory
  std::vector<std::string> dims;    // regression dimensions
  double dropout = 0.0;

  std::size_t sentence_dim() const {
    return encoder_kind == SentenceEncoderKind::trainable ? 2 * encoder_hidden : external_dim;
  }
  std::size_t head_input_dim() const { return context_hidden + latent_dim; }
  std::size_t output_dim() const {
    return task == ErcTask::classification ? labels.size() : dims.size();
  }
};

class ErcModel {
 public:
  ErcModel() = default;
  ErcModel(ErcConfig config, ParameterSet params,
           std::shared_ptr<const ExternalVectors> vectors = nullptr);
  static ErcModel create(const ErcConfig& config, std::uint64_t seed,
                         std::shared_ptr<const ExternalVectors> vectors = nullptr);

  const ErcConfig& config() const { return config_; }
  ErcConfig& config() { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const ExternalVectors* vectors() const { return vectors_.get(); }
  void set_vectors(std::shared_ptr<const ExternalVectors> v) { vectors_ = std::move(v); }

  EncoderParams encoder() const;
  ContextParams context() const;

  void validate() const;

 private:
  ErcConfig config_;
  ParameterSet params_;
  std::shared_ptr<const ExternalVectors> vectors_;
};

struct ForwardOptions {
  bool train = false;    // enables dropout
  Rng* rng = nullptr;    // required when train && dropout > 0
};

// One output per turn: logits (classification) or one value per dimension
// (regression). Output t depends only on utterances 0..t.
std::vector<Var> erc_forward(Tape& tape, const ErcModel& model,
                             const EncodedConversation& conversation,
                             const ForwardOptions& options = {});

struct ErcLoss {
  Var total;
  std::size_t terms = 0;  // labeled turns (classification) or targets (regression)
};

// Sum of per-turn cross-entropy, or of per-dimension squared error; turns
// without a label/target contribute context only.
ErcLoss erc_loss(Tape& tape, const ErcModel& model, const EncodedConversation& conversation,
                 const ForwardOptions& options = {});

struct Prediction {
  std::vector<std::size_t> labels;           // classification
  std::vector<std::vector<double>> values;   // regression
};

Prediction predict(const ErcModel& model, const EncodedConversation& conversation);

// Stops once the monitored loss has not improved for `patience` epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience = 10) : patience_(patience) {}

  // Records one epoch; returns true when training should stop.
  bool update(double loss);
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based
  double best_loss() const { return best_; }
  std::size_t epochs() const { return epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0.0;
  bool improved_ = false;
};

struct ErcTrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;
  FreezeMask frozen;
  std::set<std::string> exclude_labels;
  FScoreMode fscore_mode = FScoreMode::weighted;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;  // 1-based
  std::size_t epochs_run = 0;
  double best_val_loss = 0.0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  ParameterSet best_params;
  // Metrics of the best snapshot.
  std::optional<EvalResult> val_eval;
  std::optional<EvalResult> test_eval;
  std::map<std::string, double> test_pearson;  // regression, per dimension
  double test_metric = 0.0;  // weighted F (classification) or mean r (regression)
  double val_metric = 0.0;
};

// Mean loss per labeled term over a set of conversations (no dropout).
double mean_loss(const ErcModel& model, std::span<const EncodedConversation> data);

struct Evaluation {
  std::optional<EvalResult> fscore;
  std::map<std::string, double> pearson;
  double metric = 0.0;
};

Evaluation evaluate_erc(const ErcModel& model, std::span<const EncodedConversation> data,
                        const std::set<std::string>& exclude = {},
                        FScoreMode mode = FScoreMode::weighted);

// Mini-batch training with early stopping on validation loss. The model
// ends holding the best snapshot.
RunResult train_erc(ErcModel& model, std::span<const EncodedConversation> train,
                    std::span<const EncodedConversation> val,
                    std::span<const EncodedConversation> test, const ErcTrainConfig& config);

}  // namespace tlerc
