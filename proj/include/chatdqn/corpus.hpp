#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace chatdqn {

struct Sentence {
  std::string text;
  std::vector<std::string> tokens;
};

Sentence make_sentence(std::string text);

// One exchange: speaker A speaks, speaker B (the agent side) responds.
struct Turn {
  Sentence a;
  Sentence b;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;

  // Sentences in speaking order: a1, b1, a2, b2, ...
  std::vector<const Sentence*> flattened() const;
  std::size_t sentence_count() const { return 2 * turns.size(); }
};

struct Corpus {
  std::vector<Dialogue> dialogues;
  std::set<std::string> vocabulary;

  // Rebuilds the vocabulary from the dialogues.
  void index_vocabulary();
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t loaded = 0;
  std::size_t malformed = 0;
  std::size_t skipped = 0;  // well-formed but rejected (no turns, duplicate id)
  std::vector<std::string> warnings;
};

enum class Split { kTrain, kTest };

// Lowercases ASCII, splits punctuation into separate tokens and collapses
// whitespace. An apostrophe between two word characters stays inside the
// word ("i'm").
std::vector<std::string> tokenize(std::string_view text);

// Reads a JSONL dialogue file: {"id": "...", "turns": [{"a": "...", "b": "..."}]}.
// Throws std::runtime_error if the file cannot be read.
Corpus load_corpus(const std::string& path, Split split, LoadReport* report = nullptr);

// Parses JSONL content already in memory; `source` names it in warnings.
Corpus parse_corpus(std::string_view content, const std::string& source,
                    LoadReport* report = nullptr);

struct CorpusStats {
  std::size_t dialogues = 0;
  std::size_t turns = 0;
  std::size_t sentences = 0;
  std::size_t unique_sentences = 0;
  std::size_t unique_words = 0;
  std::size_t words = 0;
  double avg_turns_per_dialogue = 0.0;
  double avg_words_per_dialogue = 0.0;
  double avg_words_per_sentence = 0.0;
};

CorpusStats corpus_stats(const Corpus& corpus);

std::set<std::string> unique_sentences(const Corpus& corpus);

// Number of exact-string unique sentences present in both corpora.
std::size_t sentence_overlap(const Corpus& a, const Corpus& b);

}  // namespace chatdqn
