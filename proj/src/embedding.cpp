#include "chatdqn/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace chatdqn {

bool WordEmbeddingTable::insert(const std::string& token, Vec v) {
  if (static_cast<std::size_t>(v.size()) != dim_) {
    throw std::invalid_argument("embedding for '" + token + "' has dimension " +
                                std::to_string(v.size()) + ", table expects " +
                                std::to_string(dim_));
  }
  return entries_.try_emplace(token, std::move(v)).second;
}

const Vec* WordEmbeddingTable::find(std::string_view token) const {
  auto it = entries_.find(std::string(token));
  return it == entries_.end() ? nullptr : &it->second;
}

std::uint64_t WordEmbeddingTable::fingerprint() const {
  std::uint64_t acc = splitmix64(dim_);
  for (const auto& [token, v] : entries_) {
    std::uint64_t h = fnv1a(token);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::uint64_t bits;
      const double x = v[i];
      std::memcpy(&bits, &x, sizeof bits);
      h = splitmix64(h ^ bits);
    }
    acc += h;  // commutative so map order does not matter
  }
  return acc;
}

WordEmbeddingTable parse_embeddings(std::string_view content, const std::string& source,
                                    EmbeddingLoadReport* report) {
  EmbeddingLoadReport local;
  EmbeddingLoadReport& rep = report ? *report : local;
  rep = EmbeddingLoadReport{};

  WordEmbeddingTable table;
  bool have_dim = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::vector<double> coeffs;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(' ') == std::string_view::npos) continue;

    std::size_t i = line.find_first_not_of(' ');
    std::size_t j = line.find(' ', i);
    if (j == std::string_view::npos) throw FormatError(source, line_no, "token has no coefficients");
    std::string token(line.substr(i, j - i));

    coeffs.clear();
    i = j;
    while (true) {
      i = line.find_first_not_of(' ', i);
      if (i == std::string_view::npos) break;
      j = line.find(' ', i);
      if (j == std::string_view::npos) j = line.size();
      double x = 0.0;
      const char* first = line.data() + i;
      const char* last = line.data() + j;
      auto [ptr, ec] = std::from_chars(first, last, x);
      if (ec != std::errc() || ptr != last) {
        throw FormatError(source, line_no,
                          "non-numeric coefficient '" + std::string(first, last) + "'");
      }
      coeffs.push_back(x);
      i = j;
    }

    if (!have_dim) {
      if (coeffs.empty()) throw FormatError(source, line_no, "token has no coefficients");
      table = WordEmbeddingTable(coeffs.size());
      have_dim = true;
    } else if (coeffs.size() != table.dim()) {
      throw FormatError(source, line_no,
                        "expected " + std::to_string(table.dim()) + " coefficients, found " +
                            std::to_string(coeffs.size()));
    }
    Vec v = Eigen::Map<const Vec>(coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
    if (table.insert(token, std::move(v))) {
      ++rep.entries;
    } else {
      ++rep.duplicates;
      rep.warnings.push_back(source + ":" + std::to_string(line_no) + ": duplicate token '" +
                             token + "'; keeping first vector");
    }
  }
  return table;
}

WordEmbeddingTable load_embeddings(const std::string& path, EmbeddingLoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read embedding file: " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_embeddings(content, path, report);
}

Vec sentence_vector(const std::vector<std::string>& tokens, const WordEmbeddingTable& table) {
  Vec sum = Vec::Zero(static_cast<Eigen::Index>(table.dim()));
  std::size_t known = 0;
  for (const auto& t : tokens) {
    if (const Vec* v = table.find(t)) {
      sum += *v;
      ++known;
    }
  }
  if (known > 0) sum /= static_cast<double>(known);
  return sum;
}

HistoryState history_state(const std::vector<Sentence>& history, const WordEmbeddingTable& table,
                           std::size_t max_history) {
  if (max_history == 0) throw std::invalid_argument("max_history must be at least 1");
  const std::size_t first = history.size() > max_history ? history.size() - max_history : 0;
  HistoryState state;
  state.reserve(history.size() - first);
  for (std::size_t i = first; i < history.size(); ++i) {
    state.push_back(sentence_vector(history[i].tokens, table));
  }
  return state;
}

Mat to_sequence(const HistoryState& state, std::size_t dim) {
  Mat m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(state.size()));
  for (std::size_t t = 0; t < state.size(); ++t) m.col(static_cast<Eigen::Index>(t)) = state[t];
  return m;
}

}  // namespace chatdqn
