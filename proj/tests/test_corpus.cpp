#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "tlerc/corpus.hpp"
#include "tlerc/tensor.hpp"

using namespace tlerc;

namespace {

Conversation make_conv(const std::string& id, const std::vector<std::string>& labels,
                       const std::string& word = "x") {
  Conversation c;
  c.id = id;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Utterance u;
    u.speaker = i % 2 ? "B" : "A";
    u.tokens = {word, word + std::to_string(i)};
    u.label = labels[i];
    c.utterances.push_back(u);
  }
  return c;
}

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in);
}

std::string expect_format_error(const std::string& text) {
  try {
    parse(text);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

// Best L1 over every subset of exactly k dialogues.
double best_subset_l1(const Corpus& full, std::size_t k) {
  const std::size_t n = full.dialogue_count();
  double best = 1e9;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
    Corpus sub;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) sub.conversations.push_back(full.conversations[i]);
    best = std::min(best, label_l1_distance(sub, full));
  }
  return best;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("loading counts dialogues and utterances") {
  CHECK(parse("").dialogue_count() == 0);
  CHECK(parse("\n  \n").empty());
  Corpus c;
  c.conversations = {make_conv("a", {"x", "y", "x"}), make_conv("b", {"x", "y", "y", "x"})};
  std::ostringstream out;
  write_corpus(out, c);
  const auto back = parse(out.str());
  CHECK(back.dialogue_count() == 2);
  CHECK(back.utterance_count() == 7);
  CHECK(back == c);
  std::ostringstream again;
  write_corpus(again, back);
  CHECK(again.str() == out.str());
}

TEST_CASE("optional fields round trip through files") {
  Corpus c;
  c.conversations = {make_conv("a", {"x", "y"})};
  c.conversations[0].utterances[0].label.reset();
  c.conversations[0].utterances[1].targets = {{"valence", -0.25}, {"arousal", 1.5}};
  const auto path = std::filesystem::temp_directory_path() / "tlerc_corpus_rt.jsonl";
  save_corpus(path, c);
  CHECK(load_corpus(path) == c);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), LookupError);
}

TEST_CASE("malformed corpora report the line") {
  const std::string ok =
      R"({"id":"a","utterances":[{"speaker":"A","tokens":["hi"]}]})";
  CHECK(expect_format_error(ok + "\n{not json\n").find("line 2") != std::string::npos);
  const std::string three =
      R"({"id":"b","utterances":[{"speaker":"A","tokens":["a"]},{"speaker":"B","tokens":["b"]},{"speaker":"C","tokens":["c"]}]})";
  const auto msg = expect_format_error(ok + "\n\n" + three);
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK(msg.find("dyadic") != std::string::npos);
  CHECK(expect_format_error(R"({"id":"a","utterances":[]})").find("no utterances") !=
        std::string::npos);
  CHECK(expect_format_error(R"({"id":"a","utterances":[{"speaker":"A","tokens":[]}]})")
            .find("no tokens") != std::string::npos);
  CHECK(expect_format_error(ok + "\n" + ok).find("duplicate") != std::string::npos);
  CHECK_FALSE(expect_format_error(R"({"id":"a"})").empty());
}

TEST_CASE("vocabulary frequency order") {
  // Frequencies: the 4, and 3, cat 3, dog 2, zebra 1.
  Conversation c;
  c.id = "v";
  auto utt = [](std::string s, std::vector<std::string> t) { return Utterance{s, t, {}, {}}; };
  c.utterances = {utt("A", {"the", "cat", "and", "dog"}), utt("B", {"the", "cat", "and"}),
                  utt("A", {"the", "zebra", "dog", "cat", "and", "the"})};
  Corpus corpus{{c}};
  const auto v1 = build_vocab(corpus, 1);
  const std::vector<std::string> expected{"<pad>", "<unk>", "<bos>", "<eos>", "the",
                                          "and",   "cat",   "dog",   "zebra"};
  REQUIRE(v1.size() == expected.size());
  for (std::size_t i = kNumSpecial; i < expected.size(); ++i) CHECK(v1.token(i) == expected[i]);
  const auto v3 = build_vocab(corpus, 3);
  CHECK(v3.size() == kNumSpecial + 3);
  CHECK(v3.id("dog") == kUnk);
  CHECK(v3.id("cat") == 6);
  CHECK(build_vocab(corpus, 5).size() == kNumSpecial);
  CHECK(v3.encode({"the", "zebra"}) == TokenIds{4, kUnk});
}

TEST_CASE("vocabulary ignores conversation order") {
  SyntheticConfig sc;
  sc.n_conversations = 30;
  auto corpus = generate_synthetic(sc);
  const auto v = build_vocab(corpus, 2);
  std::mt19937_64 gen(4);
  std::shuffle(corpus.conversations.begin(), corpus.conversations.end(), gen);
  CHECK(build_vocab(corpus, 2) == v);
}

TEST_CASE("encoding truncates and maps labels") {
  Conversation c = make_conv("e", {"b", "a", "zz"});
  c.utterances[0].tokens = {"p", "q", "r", "s"};
  c.utterances[1].targets["valence"] = 0.5;
  const Vocabulary v({"<pad>", "<unk>", "<bos>", "<eos>", "p", "q"});
  const LabelSet labels({"a", "b"});
  const std::vector<std::string> dims{"valence"};
  const auto e = encode(c, v, &labels, &dims, {.max_tokens = 3, .max_turns = 2});
  REQUIRE(e.size() == 2);
  CHECK(e.utterances[0] == TokenIds{4, 5, kUnk});
  CHECK(e.labels[0] == 1u);
  CHECK(e.labels[1] == 0u);
  CHECK_FALSE(e.targets[0][0]);
  CHECK(*e.targets[1][0] == 0.5);
  // Labels outside the set are treated as unlabeled.
  CHECK_FALSE(encode(c, v, &labels).labels[2]);
}

TEST_CASE("splits are dialogue level") {
  Corpus c;
  for (int i = 0; i < 10; ++i) c.conversations.push_back(make_conv("d" + std::to_string(i), {"a"}));
  const auto [tr, va] = make_splits(c, 0.2, 5);
  CHECK(tr.dialogue_count() == 8);
  CHECK(va.dialogue_count() == 2);
  const auto [tr2, va2] = make_splits(c, 0.2, 5);
  CHECK(tr2 == tr);
  CHECK(va2 == va);
  std::set<std::string> ids;
  for (const auto& x : tr.conversations) ids.insert(x.id);
  for (const auto& x : va.conversations) CHECK(ids.insert(x.id).second);
  CHECK(ids.size() == 10);
  CHECK_THROWS_AS(make_splits(Corpus{{make_conv("x", {"a"})}}, 0.2, 1), ContractError);
  CHECK_THROWS_AS(make_splits(c, 1.0, 1), ContractError);
}

TEST_CASE("subsampling a balanced toy set") {
  Corpus c;
  for (int i = 0; i < 5; ++i) c.conversations.push_back(make_conv("a" + std::to_string(i), {"x", "x", "y"}));
  for (int i = 0; i < 5; ++i) c.conversations.push_back(make_conv("b" + std::to_string(i), {"y", "y", "x"}));
  CHECK(subsample_training(c, 1.0, 3) == c);
  const auto s = subsample_training(c, 0.5, 3);
  CHECK(s.dialogue_count() == 5);
  // Ideal is 7.5 utterances per label.
  int xs = 0, ys = 0;
  for (const auto& conv : s.conversations)
    for (const auto& u : conv.utterances) (*u.label == "x" ? xs : ys)++;
  CHECK(std::abs(xs - 7.5) <= 1.0);
  CHECK(std::abs(ys - 7.5) <= 1.0);
  CHECK_THROWS_AS(subsample_training(c, 0.0, 1), ContractError);
  CHECK_THROWS_AS(subsample_training(c, 1.5, 1), ContractError);
}

TEST_CASE("greedy subsample stays near the enumerated optimum") {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 100; ++trial) {
    Corpus c;
    const std::size_t n = 6 + gen() % 5;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> labels(1 + gen() % 5);
      for (auto& l : labels) l = std::string(1, static_cast<char>('a' + gen() % 3));
      c.conversations.push_back(make_conv("c" + std::to_string(i), labels));
    }
    const double fraction = 0.3 + 0.1 * static_cast<double>(gen() % 4);
    const auto s = subsample_training(c, fraction, trial);
    const std::size_t k = s.dialogue_count();
    CHECK(k == static_cast<std::size_t>(std::ceil(fraction * n - 1e-9)));
    const double bound = best_subset_l1(c, k) + 2.0 / static_cast<double>(s.utterance_count());
    CHECK(label_l1_distance(s, c) <= bound + 1e-12);
  }
}

TEST_CASE("independent subsamples differ and keep proportions") {
  SyntheticConfig sc;
  sc.n_conversations = 60;
  sc.seed = 9;
  const auto full = generate_synthetic(sc);
  std::vector<Corpus> subs;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    subs.push_back(subsample_training(full, 0.25, seed));
    CHECK(subs.back().dialogue_count() == 15);
    CHECK(label_l1_distance(subs.back(), full) <= 2.0 / subs.back().utterance_count() + 0.05);
    CHECK(subsample_training(full, 0.25, seed) == subs.back());
  }
  for (std::size_t i = 0; i < subs.size(); ++i)
    for (std::size_t j = i + 1; j < subs.size(); ++j) CHECK_FALSE(subs[i] == subs[j]);
}

TEST_CASE("lexicon profile") {
  std::istringstream lex("angry\tanger\nangry\tnegative\nhappy\tjoy\nrun\tanticipation\n");
  const auto lexicon = parse_lexicon(lex);
  const Vocabulary v({"<pad>", "<unk>", "<bos>", "<eos>", "angry"});
  const auto p = lexicon_profile(v, lexicon, {});
  CHECK(p.vocabulary_tokens == 1);
  CHECK(p.matched_tokens == 1);
  CHECK(p.counts.at("anger") == 1);
  CHECK(p.counts.at("negative") == 1);
  CHECK(p.counts.at("joy") == 0);
  CHECK(p.counts.size() == lexicon_categories().size());

  const auto empty = lexicon_profile(v, {}, {});
  CHECK(empty.matched_tokens == 0);
  for (const auto& [k, n] : empty.counts) CHECK(n == 0);

  std::istringstream lem("ran\trun\n");
  const auto lemmas = parse_lemmas(lem);
  CHECK(lemmatize("ran", lemmas, lexicon) == "run");
  CHECK(lemmatize("running", lemmas, lexicon) == "running");
  CHECK(lemmatize("runs", lemmas, lexicon) == "run");
  CHECK(lemmatize("angryed", lemmas, lexicon) == "angry");
  CHECK(lemmatize("other", lemmas, lexicon) == "other");
  const Vocabulary v2({"<pad>", "<unk>", "<bos>", "<eos>", "ran", "runs", "happy", "table"});
  const auto p2 = lexicon_profile(v2, lexicon, lemmas);
  CHECK(p2.matched_tokens == 3);
  CHECK(p2.counts.at("anticipation") == 2);
}

TEST_CASE("lexicon parsing errors") {
  std::istringstream bad_tag("angry\trage\n");
  CHECK_THROWS_AS(parse_lexicon(bad_tag), FormatError);
  std::istringstream no_tab("angry anger\n");
  CHECK_THROWS_AS(parse_lexicon(no_tab), FormatError);
}

TEST_CASE("synthetic generator extremes") {
  SyntheticConfig sc;
  sc.n_conversations = 50;
  sc.inertia_prob = 1.0;
  sc.mirror_prob = 0.0;
  for (const auto& c : generate_synthetic(sc).conversations) {
    std::map<std::string, std::string> first;
    for (const auto& u : c.utterances) {
      auto [it, fresh] = first.emplace(u.speaker, *u.label);
      CHECK(it->second == *u.label);
    }
  }
  sc.inertia_prob = 0.0;
  sc.mirror_prob = 1.0;
  for (const auto& c : generate_synthetic(sc).conversations)
    for (std::size_t t = 1; t < c.utterances.size(); ++t)
      CHECK(*c.utterances[t].label == *c.utterances[t - 1].label);

  sc.inertia_prob = 0.7;
  sc.mirror_prob = 0.4;
  CHECK_THROWS_AS(generate_synthetic(sc), ContractError);
  sc.mirror_prob = 0.3;
  sc.n_emotions = 1;
  CHECK_THROWS_AS(generate_synthetic(sc), ContractError);
}

TEST_CASE("synthetic transition frequencies") {
  SyntheticConfig sc;
  sc.n_conversations = 2500;
  sc.turns = 6;
  sc.inertia_prob = 0.5;
  sc.mirror_prob = 0.3;
  sc.n_emotions = 4;
  const auto corpus = generate_synthetic(sc);
  // Only turns where both speakers have spoken and disagree separate the two effects.
  double own = 0, other = 0, n = 0, turns = 0;
  for (const auto& c : corpus.conversations)
    for (std::size_t t = 2; t < c.utterances.size(); ++t) {
      ++turns;
      const auto& prev_own = *c.utterances[t - 2].label;
      const auto& prev_other = *c.utterances[t - 1].label;
      if (prev_own == prev_other) continue;
      ++n;
      own += *c.utterances[t].label == prev_own;
      other += *c.utterances[t].label == prev_other;
    }
  CHECK(turns >= 1e4);
  const double uniform = (1.0 - 0.5 - 0.3) / 4.0;
  CHECK(std::abs(own / n - (0.5 + uniform)) < 0.02);
  CHECK(std::abs(other / n - (0.3 + uniform)) < 0.02);
}

TEST_CASE("synthetic output is reproducible") {
  SyntheticConfig sc;
  sc.regression_targets = true;
  sc.seed = 77;
  std::ostringstream a, b;
  write_corpus(a, generate_synthetic(sc));
  write_corpus(b, generate_synthetic(parse_synthetic_config(synthetic_config_json(sc))));
  CHECK(a.str() == b.str());
  const auto c = generate_synthetic(sc);
  CHECK(c.dialogue_count() == sc.n_conversations);
  CHECK(c.conversations[0].utterances[0].targets.contains("valence"));
  CHECK(LabelSet::from_corpus(c).size() == sc.n_emotions);
  CHECK_THROWS(parse_synthetic_config("{\"turns\": \"many\"}"));
}

}  // TEST_SUITE
