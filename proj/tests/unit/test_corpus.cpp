#include <doctest.h>

#include <random>
#include <stdexcept>
#include <string>

#include "chatdqn/corpus.hpp"

using namespace chatdqn;

namespace {

const char* kToy =
    R"({"id": "d1", "turns": [{"a": "Hello, world!", "b": "hi there"}, {"a": "how are you?", "b": "good."}]})"
    "\n"
    R"({"id": "d2", "turns": [{"a": "hi there", "b": "bye"}, {"a": "good.", "b": "see you"}]})"
    "\n";

std::string join(const std::vector<std::string>& toks) {
  std::string s;
  for (const auto& t : toks) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

}  // namespace

TEST_CASE("tokenize splits punctuation and lowercases") {
  CHECK(tokenize("hello") == std::vector<std::string>{"hello"});
  CHECK(tokenize("Hello, world!") == std::vector<std::string>{"hello", ",", "world", "!"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t\n ").empty());
  CHECK(tokenize("i'm  GOOD ,thanks") == std::vector<std::string>{"i'm", "good", ",", "thanks"});
  CHECK(tokenize("'quoted'") == std::vector<std::string>{"'", "quoted", "'"});
}

TEST_CASE("tokenize is idempotent on its joined output") {
  std::mt19937 rng(7);
  const std::string alphabet = "abcXYZ019 ,.!?'\t-\"";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const int len = static_cast<int>(rng() % 24);
    for (int i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    const auto once = tokenize(s);
    CHECK(tokenize(join(once)) == once);
  }
}

TEST_CASE("empty corpus") {
  LoadReport rep;
  const Corpus c = parse_corpus("", "empty", &rep);
  CHECK(c.dialogues.empty());
  CHECK(c.vocabulary.empty());
  const auto st = corpus_stats(c);
  CHECK(st.dialogues == 0);
  CHECK(st.turns == 0);
  CHECK(st.avg_turns_per_dialogue == 0.0);
  CHECK(st.avg_words_per_sentence == 0.0);
}

TEST_CASE("toy corpus matches hand counts") {
  LoadReport rep;
  const Corpus c = parse_corpus(kToy, "toy", &rep);
  REQUIRE(c.dialogues.size() == 2);
  CHECK(rep.loaded == 2);
  CHECK(rep.malformed == 0);
  CHECK(c.vocabulary.size() == 14);
  CHECK(c.vocabulary.count(",") == 1);
  CHECK(c.vocabulary.count("Hello") == 0);

  const auto st = corpus_stats(c);
  CHECK(st.dialogues == 2);
  CHECK(st.turns == 4);
  CHECK(st.sentences == 8);
  CHECK(st.unique_sentences == 6);
  CHECK(st.unique_words == 14);
  CHECK(st.words == 19);
  CHECK(st.avg_turns_per_dialogue == doctest::Approx(2.0));
  CHECK(st.avg_words_per_dialogue == doctest::Approx(9.5));
  CHECK(st.avg_words_per_sentence == doctest::Approx(2.375));

  const auto flat = c.dialogues[0].flattened();
  REQUIRE(flat.size() == 4);
  CHECK(flat[0]->text == "Hello, world!");
  CHECK(flat[1]->text == "hi there");
  CHECK(flat[3]->text == "good.");
}

TEST_CASE("malformed and empty records are counted, not fatal") {
  const std::string content =
      "not json\n"
      R"({"id": "x", "turns": []})"
      "\n"
      R"({"id": "y", "turns": [{"a": "hi"}]})"
      "\n"
      R"({"id": "z", "turns": [{"a": "hi", "b": "..."}]})"
      "\n"
      R"({"id": "z", "turns": [{"a": "again", "b": "dup"}]})"
      "\n"
      R"({"id": "w", "turns": [{"a": "  ", "b": "blank a"}]})"
      "\n";
  LoadReport rep;
  const Corpus c = parse_corpus(content, "bad", &rep);
  CHECK(c.dialogues.size() == 1);
  CHECK(rep.malformed == 3);
  CHECK(rep.skipped == 2);
  CHECK(rep.warnings.size() == 5);
}

TEST_CASE("load_corpus fails on unreadable file") {
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl", Split::kTrain), std::runtime_error);
}

TEST_CASE("sentence_overlap") {
  const Corpus c = parse_corpus(kToy, "toy");
  Corpus first, second;
  first.dialogues.push_back(c.dialogues[0]);
  second.dialogues.push_back(c.dialogues[1]);
  CHECK(sentence_overlap(c, c) == corpus_stats(c).unique_sentences);
  CHECK(sentence_overlap(first, second) == 2);
  CHECK(sentence_overlap(second, first) == 2);

  Corpus disjoint = parse_corpus(R"({"id": "q", "turns": [{"a": "alpha", "b": "beta"}]})", "q");
  CHECK(sentence_overlap(c, disjoint) == 0);
  CHECK(sentence_overlap(disjoint, c) == 0);
}

TEST_CASE("bundled desk corpus loads cleanly") {
  LoadReport rep;
  const Corpus c = load_corpus(std::string(CHATDQN_DATA_DIR) + "/desk/train.jsonl", Split::kTrain, &rep);
  CHECK(rep.malformed == 0);
  CHECK(c.dialogues.size() == 100);
  // counted independently from the raw file
  const auto st = corpus_stats(c);
  CHECK(st.turns == 813);
  CHECK(st.sentences == 1626);
  CHECK(st.unique_sentences == 471);
  CHECK(st.unique_words == 57);
  CHECK(st.words == 8357);
}
