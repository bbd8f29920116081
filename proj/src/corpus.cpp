#include "tlerc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tlerc/rng.hpp"

namespace tlerc {

using nlohmann::json;

std::size_t Corpus::utterance_count() const {
  std::size_t n = 0;
  for (const auto& c : conversations) n += c.utterances.size();
  return n;
}

void validate_conversation(const Conversation& conversation) {
  if (conversation.utterances.empty())
    throw FormatError("conversation '" + conversation.id + "' has no utterances");
  std::set<std::string> speakers;
  for (std::size_t i = 0; i < conversation.utterances.size(); ++i) {
    const auto& u = conversation.utterances[i];
    if (u.tokens.empty())
      throw FormatError("conversation '" + conversation.id + "' utterance " + std::to_string(i) +
                        " has no tokens");
    speakers.insert(u.speaker);
  }
  if (speakers.size() > 2)
    throw FormatError("dyadic violation: conversation '" + conversation.id + "' has " +
                      std::to_string(speakers.size()) + " speakers");
}

namespace {

Conversation conversation_from_json(const json& j) {
  Conversation c;
  c.id = j.at("id").get<std::string>();
  for (const auto& ju : j.at("utterances")) {
    Utterance u;
    u.speaker = ju.at("speaker").get<std::string>();
    u.tokens = ju.at("tokens").get<std::vector<std::string>>();
    if (ju.contains("label") && !ju.at("label").is_null()) u.label = ju.at("label").get<std::string>();
    if (ju.contains("targets"))
      u.targets = ju.at("targets").get<std::map<std::string, double>>();
    c.utterances.push_back(std::move(u));
  }
  return c;
}

json conversation_to_json(const Conversation& c) {
  json utterances = json::array();
  for (const auto& u : c.utterances) {
    json ju = {{"speaker", u.speaker}, {"tokens", u.tokens}};
    if (u.label) ju["label"] = *u.label;
    if (!u.targets.empty()) ju["targets"] = u.targets;
    utterances.push_back(std::move(ju));
  }
  return json{{"id", c.id}, {"utterances", std::move(utterances)}};
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open " + path.string());
  return in;
}

}  // namespace

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Conversation c;
    try {
      c = conversation_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      validate_conversation(c);
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(c.id).second)
      throw FormatError("line " + std::to_string(line_no) + ": duplicate conversation id '" +
                        c.id + "'");
    corpus.conversations.push_back(std::move(c));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_corpus(in);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& c : corpus.conversations) out << conversation_to_json(c).dump() << '\n';
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LookupError("cannot write " + path.string());
  write_corpus(out, corpus);
}

// --- Vocabulary --------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  const std::vector<std::string> specials = {"<pad>", "<unk>", "<bos>", "<eos>"};
  if (tokens.size() < kNumSpecial ||
      !std::equal(specials.begin(), specials.end(), tokens.begin()))
    tokens.insert(tokens.begin(), specials.begin(), specials.end());
  tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], i).second)
      throw FormatError("duplicate vocabulary token '" + tokens_[i] + "'");
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

TokenIds Vocabulary::encode(const std::vector<std::string>& tokens) const {
  TokenIds ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t min_freq) {
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& c : corpus.conversations)
    for (const auto& u : c.utterances)
      for (const auto& t : u.tokens) ++freq[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : freq)
    if (n >= min_freq) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens = {"<pad>", "<unk>", "<bos>", "<eos>"};
  for (auto& [tok, _] : kept)
    if (tok != "<pad>" && tok != "<unk>" && tok != "<bos>" && tok != "<eos>")
      tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

// --- Labels ------------------------------------------------------------------

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
}

LabelSet LabelSet::from_corpus(const Corpus& corpus) {
  std::vector<std::string> names;
  for (const auto& c : corpus.conversations)
    for (const auto& u : c.utterances)
      if (u.label) names.push_back(*u.label);
  return LabelSet(std::move(names));
}

std::optional<std::size_t> LabelSet::find(const std::string& name) const {
  auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t LabelSet::index(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw LookupError("unknown label '" + name + "'");
}

std::vector<std::string> target_dimensions(const Corpus& corpus) {
  std::set<std::string> dims;
  for (const auto& c : corpus.conversations)
    for (const auto& u : c.utterances)
      for (const auto& [d, _] : u.targets) dims.insert(d);
  return {dims.begin(), dims.end()};
}

EncodedConversation encode(const Conversation& conversation, const Vocabulary& vocab,
                           const LabelSet* labels, const std::vector<std::string>* dims,
                           const EncodeOptions& options) {
  EncodedConversation out;
  out.id = conversation.id;
  std::size_t turns = conversation.utterances.size();
  if (options.max_turns > 0) turns = std::min(turns, options.max_turns);
  for (std::size_t t = 0; t < turns; ++t) {
    const auto& u = conversation.utterances[t];
    TokenIds ids = vocab.encode(u.tokens);
    if (options.max_tokens > 0 && ids.size() > options.max_tokens) ids.resize(options.max_tokens);
    out.utterances.push_back(std::move(ids));
    if (labels && u.label)
      out.labels.push_back(labels->find(*u.label));
    else
      out.labels.push_back(std::nullopt);
    std::vector<std::optional<double>> tv;
    if (dims)
      for (const auto& d : *dims) {
        auto it = u.targets.find(d);
        tv.push_back(it == u.targets.end() ? std::nullopt : std::optional<double>(it->second));
      }
    out.targets.push_back(std::move(tv));
  }
  return out;
}

std::vector<EncodedConversation> encode_all(const Corpus& corpus, const Vocabulary& vocab,
                                            const LabelSet* labels,
                                            const std::vector<std::string>* dims,
                                            const EncodeOptions& options) {
  std::vector<EncodedConversation> out;
  out.reserve(corpus.conversations.size());
  for (const auto& c : corpus.conversations) out.push_back(encode(c, vocab, labels, dims, options));
  return out;
}

// --- Splits and subsampling --------------------------------------------------

std::pair<Corpus, Corpus> make_splits(const Corpus& corpus, double val_fraction,
                                      std::uint64_t seed) {
  const std::size_t n = corpus.dialogue_count();
  if (n < 2) throw ContractError("make_splits: need at least 2 dialogues, got " + std::to_string(n));
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ContractError("make_splits: val_fraction must lie in (0, 1)");
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;

  Corpus train, val;
  for (std::size_t i = 0; i < n; ++i)
    (is_val[i] ? val : train).conversations.push_back(corpus.conversations[i]);
  return {std::move(train), std::move(val)};
}

namespace {

using LabelCounts = std::map<std::string, double>;

LabelCounts label_counts(const Conversation& c) {
  LabelCounts counts;
  for (const auto& u : c.utterances)
    if (u.label) counts[*u.label] += 1.0;
  return counts;
}

double l1(const LabelCounts& subset, double subset_total, const LabelCounts& full,
          double full_total) {
  std::set<std::string> keys;
  for (const auto& [k, _] : subset) keys.insert(k);
  for (const auto& [k, _] : full) keys.insert(k);
  double d = 0.0;
  for (const auto& k : keys) {
    auto s = subset.find(k);
    auto f = full.find(k);
    const double ps = subset_total > 0 && s != subset.end() ? s->second / subset_total : 0.0;
    const double pf = full_total > 0 && f != full.end() ? f->second / full_total : 0.0;
    d += std::abs(ps - pf);
  }
  return d;
}

double total(const LabelCounts& c) {
  double t = 0.0;
  for (const auto& [_, v] : c) t += v;
  return t;
}

}  // namespace

double label_l1_distance(const Corpus& subset, const Corpus& full) {
  LabelCounts s, f;
  for (const auto& c : subset.conversations)
    for (const auto& [k, v] : label_counts(c)) s[k] += v;
  for (const auto& c : full.conversations)
    for (const auto& [k, v] : label_counts(c)) f[k] += v;
  return l1(s, total(s), f, total(f));
}

Corpus subsample_training(const Corpus& train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ContractError("subsample_training: fraction must lie in (0, 1]");
  const std::size_t n = train.dialogue_count();
  if (fraction == 1.0 || n == 0) return train;

  const auto wanted = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));

  std::vector<LabelCounts> per_dialogue;
  per_dialogue.reserve(n);
  LabelCounts full;
  for (const auto& c : train.conversations) {
    per_dialogue.push_back(label_counts(c));
    for (const auto& [k, v] : per_dialogue.back()) full[k] += v;
  }
  const double full_total = total(full);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  auto with = [&](LabelCounts c, std::size_t idx, double sign) {
    for (const auto& [k, v] : per_dialogue[idx]) c[k] += sign * v;
    return c;
  };
  auto dist = [&](const LabelCounts& c) { return l1(c, total(c), full, full_total); };

  std::vector<bool> chosen(n, false);
  LabelCounts current = per_dialogue[order[0]];
  chosen[order[0]] = true;
  std::size_t picked = 1;
  while (picked < wanted) {
    std::size_t best = n;
    double best_d = 0.0;
    for (std::size_t idx : order) {
      if (chosen[idx]) continue;
      const double d = dist(with(current, idx, 1.0));
      if (best == n || d < best_d - 1e-12) {
        best = idx;
        best_d = d;
      }
    }
    chosen[best] = true;
    current = with(current, best, 1.0);
    ++picked;
  }

  // Greedy growth can strand a poor early pick; swap pairs while that helps.
  double current_d = dist(current);
  for (int pass = 0; pass < 20; ++pass) {
    bool improved = false;
    for (std::size_t out_idx : order) {
      if (!chosen[out_idx]) continue;
      const LabelCounts without = with(current, out_idx, -1.0);
      for (std::size_t in_idx : order) {
        if (chosen[in_idx]) continue;
        LabelCounts trial = with(without, in_idx, 1.0);
        const double d = dist(trial);
        if (d < current_d - 1e-12) {
          chosen[out_idx] = false;
          chosen[in_idx] = true;
          current = std::move(trial);
          current_d = d;
          improved = true;
          break;
        }
      }
    }
    if (!improved) break;
  }

  Corpus out;
  for (std::size_t i = 0; i < n; ++i)
    if (chosen[i]) out.conversations.push_back(train.conversations[i]);
  return out;
}

// --- Lexicon -----------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, std::string>> parse_tsv_pairs(std::istream& in,
                                                                 const char* what) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
      throw FormatError(std::string(what) + " line " + std::to_string(line_no) +
                        ": expected two tab-separated fields");
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

}  // namespace

EmotionLexicon parse_lexicon(std::istream& in) {
  const auto& categories = lexicon_categories();
  EmotionLexicon lexicon;
  for (auto& [token, tag] : parse_tsv_pairs(in, "lexicon")) {
    if (std::find(categories.begin(), categories.end(), tag) == categories.end())
      throw FormatError("lexicon: unknown emotion category '" + tag + "'");
    lexicon[token].insert(tag);
  }
  return lexicon;
}

EmotionLexicon load_lexicon(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_lexicon(in);
}

LemmaMap parse_lemmas(std::istream& in) {
  LemmaMap lemmas;
  for (auto& [token, lemma] : parse_tsv_pairs(in, "lemma map")) lemmas[token] = lemma;
  return lemmas;
}

LemmaMap load_lemmas(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_lemmas(in);
}

std::string lemmatize(const std::string& token, const LemmaMap& lemmas,
                      const EmotionLexicon& lexicon) {
  if (auto it = lemmas.find(token); it != lemmas.end()) return it->second;
  if (lexicon.contains(token)) return token;
  for (const std::string suffix : {"ing", "ed", "es", "s"}) {
    if (token.size() > suffix.size() + 1 && token.ends_with(suffix)) {
      std::string stem = token.substr(0, token.size() - suffix.size());
      if (lexicon.contains(stem)) return stem;
    }
  }
  return token;
}

LexiconProfile lexicon_profile(const Vocabulary& vocab, const EmotionLexicon& lexicon,
                               const LemmaMap& lemmas) {
  LexiconProfile profile;
  for (const auto& c : lexicon_categories()) profile.counts[c] = 0;
  for (std::size_t id = kNumSpecial; id < vocab.size(); ++id) {
    ++profile.vocabulary_tokens;
    auto it = lexicon.find(lemmatize(vocab.token(id), lemmas, lexicon));
    if (it == lexicon.end() || it->second.empty()) continue;
    ++profile.matched_tokens;
    for (const auto& tag : it->second) ++profile.counts[tag];
  }
  return profile;
}

// --- Synthetic corpus --------------------------------------------------------

SyntheticConfig parse_synthetic_config(const std::string& json_text) {
  SyntheticConfig c;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("synthetic config: ") + e.what());
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("n_conversations", c.n_conversations);
  get("turns", c.turns);
  get("vocab_size", c.vocab_size);
  get("n_emotions", c.n_emotions);
  get("inertia_prob", c.inertia_prob);
  get("mirror_prob", c.mirror_prob);
  get("seed", c.seed);
  get("min_tokens", c.min_tokens);
  get("max_tokens", c.max_tokens);
  get("signal_prob", c.signal_prob);
  get("regression_targets", c.regression_targets);
  get("id_prefix", c.id_prefix);
  return c;
}

std::string synthetic_config_json(const SyntheticConfig& c) {
  json j = {{"n_conversations", c.n_conversations},
            {"turns", c.turns},
            {"vocab_size", c.vocab_size},
            {"n_emotions", c.n_emotions},
            {"inertia_prob", c.inertia_prob},
            {"mirror_prob", c.mirror_prob},
            {"seed", c.seed},
            {"min_tokens", c.min_tokens},
            {"max_tokens", c.max_tokens},
            {"signal_prob", c.signal_prob},
            {"regression_targets", c.regression_targets},
            {"id_prefix", c.id_prefix}};
  return j.dump();
}

std::string emotion_name(std::size_t index, std::size_t n_emotions) {
  static const std::vector<std::string> kNames = {"neutral", "happy",   "sad",
                                                  "angry",   "excited", "frustrated"};
  if (n_emotions <= kNames.size()) return kNames[index];
  return "emotion" + std::to_string(index);
}

Corpus generate_synthetic(const SyntheticConfig& config) {
  if (config.n_emotions < 2) throw ContractError("generate_synthetic: n_emotions must be >= 2");
  if (config.inertia_prob < 0 || config.mirror_prob < 0 ||
      config.inertia_prob + config.mirror_prob > 1.0 + 1e-12)
    throw ContractError("generate_synthetic: need inertia_prob + mirror_prob <= 1");
  if (config.turns == 0 || config.min_tokens == 0 || config.max_tokens < config.min_tokens)
    throw ContractError("generate_synthetic: invalid turn or token length settings");
  const std::size_t block = config.vocab_size / (config.n_emotions + 1);
  if (block == 0)
    throw ContractError("generate_synthetic: vocab_size too small for n_emotions");
  const std::size_t filler_begin = block * config.n_emotions;
  const std::size_t filler_count = config.vocab_size - filler_begin;

  Rng rng(config.seed);
  Corpus corpus;
  for (std::size_t ci = 0; ci < config.n_conversations; ++ci) {
    Conversation conv;
    conv.id = config.id_prefix + std::to_string(ci);
    // Last emotion per speaker; n_emotions marks "not spoken yet".
    std::size_t last[2] = {config.n_emotions, config.n_emotions};
    for (std::size_t t = 0; t < config.turns; ++t) {
      const std::size_t speaker = t % 2;
      const std::size_t other = 1 - speaker;
      const double r = rng.uniform();
      std::size_t emotion;
      if (r < config.inertia_prob && last[speaker] < config.n_emotions)
        emotion = last[speaker];
      else if (r >= config.inertia_prob && r < config.inertia_prob + config.mirror_prob &&
               last[other] < config.n_emotions)
        emotion = last[other];
      else
        emotion = rng.index(config.n_emotions);
      last[speaker] = emotion;

      Utterance u;
      u.speaker = speaker == 0 ? "A" : "B";
      const std::size_t len =
          config.min_tokens + rng.index(config.max_tokens - config.min_tokens + 1);
      for (std::size_t k = 0; k < len; ++k) {
        std::size_t word;
        if (rng.bernoulli(config.signal_prob))
          word = emotion * block + rng.index(block);
        else
          word = filler_begin + rng.index(filler_count);
        u.tokens.push_back("w" + std::to_string(word));
      }
      u.label = emotion_name(emotion, config.n_emotions);
      if (config.regression_targets) {
        const double valence =
            -1.0 + 2.0 * static_cast<double>(emotion) / static_cast<double>(config.n_emotions - 1);
        u.targets["valence"] = valence + 0.1 * rng.normal();
      }
      conv.utterances.push_back(std::move(u));
    }
    corpus.conversations.push_back(std::move(conv));
  }
  return corpus;
}

}  // namespace tlerc
