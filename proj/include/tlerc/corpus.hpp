#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tlerc/recurrent.hpp"

namespace tlerc {

struct Utterance {
  std::string speaker;
  std::vector<std::string> tokens;
  std::optional<std::string> label;
  std::map<std::string, double> targets;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

struct Corpus {
  std::vector<Conversation> conversations;

  std::size_t dialogue_count() const { return conversations.size(); }
  std::size_t utterance_count() const;
  bool empty() const { return conversations.empty(); }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// Corpus files hold one JSON object per line:
//   {"id": "...", "utterances": [{"speaker": "A", "tokens": [...],
//                                 "label": "...", "targets": {"valence": 0.1}}]}
// "label" and "targets" are optional.
Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

// Throws FormatError on empty utterances, empty token lists or more than two
// speakers.
void validate_conversation(const Conversation& conversation);

class Vocabulary {
 public:
  // Specials only.
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);  // tokens[i] has id i

  std::size_t id(const std::string& token) const;  // kUnk when absent
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  bool contains(const std::string& token) const { return index_.contains(token); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenIds encode(const std::vector<std::string>& tokens) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tokens with frequency >= min_freq, ordered by descending frequency then
// lexicographically, after the four reserved ids.
Vocabulary build_vocab(const Corpus& corpus, std::size_t min_freq = 5);

// Sorted inventory of categorical labels.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);
  static LabelSet from_corpus(const Corpus& corpus);

  std::size_t index(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
};

// Sorted names of regression targets present anywhere in the corpus.
std::vector<std::string> target_dimensions(const Corpus& corpus);

// Model-ready view of a conversation.
struct EncodedConversation {
  std::string id;
  std::vector<TokenIds> utterances;
  std::vector<std::optional<std::size_t>> labels;
  // targets[t][d] for dimension d of the supplied dimension list.
  std::vector<std::vector<std::optional<double>>> targets;

  std::size_t size() const { return utterances.size(); }
};

struct EncodeOptions {
  std::size_t max_tokens = 30;
  std::size_t max_turns = 0;  // 0 keeps every turn
};

EncodedConversation encode(const Conversation& conversation, const Vocabulary& vocab,
                           const LabelSet* labels = nullptr,
                           const std::vector<std::string>* dims = nullptr,
                           const EncodeOptions& options = {});
std::vector<EncodedConversation> encode_all(const Corpus& corpus, const Vocabulary& vocab,
                                            const LabelSet* labels = nullptr,
                                            const std::vector<std::string>* dims = nullptr,
                                            const EncodeOptions& options = {});

// Dialogue-level split; |val| = round(val_fraction * #D), kept within
// [1, #D - 1]. Both halves preserve corpus order.
std::pair<Corpus, Corpus> make_splits(const Corpus& corpus, double val_fraction,
                                      std::uint64_t seed);

// Label-preserving subsample of whole dialogues. The seed picks the first
// dialogue; each next one minimizes the L1 distance of utterance-label
// proportions, then pairwise swaps run while they lower it. Seed order breaks
// ties.
Corpus subsample_training(const Corpus& train, double fraction, std::uint64_t seed);

// L1 distance between the utterance-label proportions of two corpora.
double label_l1_distance(const Corpus& subset, const Corpus& full);

// --- Emotion lexicon -------------------------------------------------------

inline const std::vector<std::string>& lexicon_categories() {
  static const std::vector<std::string> kCategories = {
      "anger", "anticipation", "disgust", "fear",     "joy",
      "negative", "positive",  "sadness", "surprise", "trust"};
  return kCategories;
}

using EmotionLexicon = std::map<std::string, std::set<std::string>>;
using LemmaMap = std::unordered_map<std::string, std::string>;

// token<TAB>emotion per line.
EmotionLexicon parse_lexicon(std::istream& in);
EmotionLexicon load_lexicon(const std::filesystem::path& path);
// token<TAB>lemma per line.
LemmaMap parse_lemmas(std::istream& in);
LemmaMap load_lemmas(const std::filesystem::path& path);

// Lemma of a token: lemma map entry, else the first suffix-stripped form
// (-ing, -ed, -es, -s) found in the lexicon, else the token itself.
std::string lemmatize(const std::string& token, const LemmaMap& lemmas,
                      const EmotionLexicon& lexicon);

struct LexiconProfile {
  std::size_t vocabulary_tokens = 0;  // non-special tokens inspected
  std::size_t matched_tokens = 0;
  std::map<std::string, std::size_t> counts;  // every category, zero included
};

LexiconProfile lexicon_profile(const Vocabulary& vocab, const EmotionLexicon& lexicon,
                               const LemmaMap& lemmas);

// --- Planted-dynamics generator -------------------------------------------

struct SyntheticConfig {
  std::size_t n_conversations = 100;
  std::size_t turns = 6;
  std::size_t vocab_size = 40;
  std::size_t n_emotions = 4;
  double inertia_prob = 0.5;
  double mirror_prob = 0.3;
  std::uint64_t seed = 1;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 6;
  // Probability that a token is drawn from the utterance emotion's own words
  // rather than the shared filler words.
  double signal_prob = 0.5;
  // Adds a "valence" regression target per utterance.
  bool regression_targets = false;
  std::string id_prefix = "syn";
};

SyntheticConfig parse_synthetic_config(const std::string& json_text);
std::string synthetic_config_json(const SyntheticConfig& config);

std::string emotion_name(std::size_t index, std::size_t n_emotions);

// Two-speaker emotion process: a speaker keeps their previous emotion with
// inertia_prob, copies the other speaker's last emotion with mirror_prob,
// else resamples uniformly. Each emotion owns a block of word types.
Corpus generate_synthetic(const SyntheticConfig& config);

}  // namespace tlerc
