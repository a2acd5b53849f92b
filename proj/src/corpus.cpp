#include "chatdqn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace chatdqn {

namespace {

bool is_word_byte(unsigned char c) {
  // Bytes >= 0x80 belong to UTF-8 sequences and are kept inside words.
  return c >= 0x80 || std::isalnum(c) != 0;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c) != 0) {
      flush();
    } else if (is_word_byte(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'' && !current.empty() && i + 1 < text.size() &&
               is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
      current.push_back('\'');
    } else {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

Sentence make_sentence(std::string text) {
  Sentence s;
  s.tokens = tokenize(text);
  s.text = std::move(text);
  return s;
}

std::vector<const Sentence*> Dialogue::flattened() const {
  std::vector<const Sentence*> out;
  out.reserve(sentence_count());
  for (const auto& t : turns) {
    out.push_back(&t.a);
    out.push_back(&t.b);
  }
  return out;
}

void Corpus::index_vocabulary() {
  vocabulary.clear();
  for (const auto& d : dialogues) {
    for (const auto* s : d.flattened()) vocabulary.insert(s->tokens.begin(), s->tokens.end());
  }
}

Corpus parse_corpus(std::string_view content, const std::string& source, LoadReport* report) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = LoadReport{};

  Corpus corpus;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    ++rep.lines;

    auto warn = [&](const std::string& msg) {
      rep.warnings.push_back(source + ":" + std::to_string(line_no) + ": " + msg);
    };

    nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j["id"].is_string() ||
        !j.contains("turns") || !j["turns"].is_array()) {
      ++rep.malformed;
      warn("malformed dialogue record");
      continue;
    }

    Dialogue d;
    d.id = j["id"].get<std::string>();
    bool ok = true;
    for (const auto& t : j["turns"]) {
      if (!t.is_object() || !t.contains("a") || !t.contains("b") || !t["a"].is_string() ||
          !t["b"].is_string()) {
        ok = false;
        break;
      }
      Turn turn{make_sentence(t["a"].get<std::string>()), make_sentence(t["b"].get<std::string>())};
      if (turn.a.tokens.empty() || turn.b.tokens.empty()) {
        ok = false;
        break;
      }
      d.turns.push_back(std::move(turn));
    }
    if (!ok) {
      ++rep.malformed;
      warn("malformed turn in dialogue '" + d.id + "'");
      continue;
    }
    if (d.turns.empty()) {
      ++rep.skipped;
      warn("dialogue '" + d.id + "' has no turns; skipped");
      continue;
    }
    if (!ids.insert(d.id).second) {
      ++rep.skipped;
      warn("duplicate dialogue id '" + d.id + "'; skipped");
      continue;
    }
    corpus.dialogues.push_back(std::move(d));
    ++rep.loaded;
  }
  corpus.index_vocabulary();
  return corpus;
}

Corpus load_corpus(const std::string& path, Split /*split*/, LoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read corpus file: " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_corpus(content, path, report);
}

std::set<std::string> unique_sentences(const Corpus& corpus) {
  std::set<std::string> out;
  for (const auto& d : corpus.dialogues) {
    for (const auto* s : d.flattened()) out.insert(s->text);
  }
  return out;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats st;
  st.dialogues = corpus.dialogues.size();
  for (const auto& d : corpus.dialogues) {
    st.turns += d.turns.size();
    for (const auto* s : d.flattened()) {
      ++st.sentences;
      st.words += s->tokens.size();
    }
  }
  st.unique_sentences = unique_sentences(corpus).size();
  st.unique_words = corpus.vocabulary.size();
  if (st.dialogues > 0) {
    st.avg_turns_per_dialogue = static_cast<double>(st.turns) / static_cast<double>(st.dialogues);
    st.avg_words_per_dialogue = static_cast<double>(st.words) / static_cast<double>(st.dialogues);
  }
  if (st.sentences > 0) {
    st.avg_words_per_sentence = static_cast<double>(st.words) / static_cast<double>(st.sentences);
  }
  return st;
}

std::size_t sentence_overlap(const Corpus& a, const Corpus& b) {
  const auto sa = unique_sentences(a);
  const auto sb = unique_sentences(b);
  std::size_t n = 0;
  for (const auto& s : sa) n += sb.count(s);
  return n;
}

}  // namespace chatdqn
