#include "lexfusion/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lexfusion/unicode.hpp"

namespace lexfusion {

using nlohmann::json;

void SememeGraph::normalize() {
  std::set<std::pair<std::size_t, std::size_t>> unique;
  for (auto [i, j] : edges) {
    unique.emplace(i, j);
    unique.emplace(j, i);
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) unique.emplace(i, i);
  edges.assign(unique.begin(), unique.end());
}

SememeGraph SememeGraph::fully_connected() const {
  SememeGraph out;
  out.nodes = nodes;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = 0; j < nodes.size(); ++j) out.edges.emplace_back(i, j);
  }
  return out;
}

Tensor SememeGraph::adjacency() const {
  const std::size_t m = nodes.size();
  Tensor adj({m, m});
  for (auto [i, j] : edges) adj.at(i, j) = 1.0;
  return adj;
}

std::optional<std::size_t> SememeLexicon::sememe_index(std::string_view name) const {
  auto it = sememe_ids_.find(std::string(name));
  if (it == sememe_ids_.end()) return std::nullopt;
  return it->second;
}

bool SememeLexicon::contains(std::u32string_view word) const {
  return words_.find(std::u32string(word)) != words_.end();
}

std::span<const Sense> SememeLexicon::senses(std::u32string_view word) const {
  auto it = words_.find(std::u32string(word));
  if (it == words_.end()) return {};
  return it->second;
}

std::set<std::size_t> SememeLexicon::sememes_of(std::u32string_view word) const {
  std::set<std::size_t> out;
  for (const Sense& s : senses(word)) out.insert(s.graph.nodes.begin(), s.graph.nodes.end());
  return out;
}

std::vector<std::u32string> SememeLexicon::words() const {
  std::vector<std::u32string> out;
  out.reserve(words_.size());
  for (const auto& [w, _] : words_) out.push_back(w);
  std::sort(out.begin(), out.end());
  return out;
}

SememeLexicon SememeLexicon::parse(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw LexiconError(std::string("malformed lexicon JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("sememes") || !doc.contains("words") ||
      !doc["sememes"].is_array() || !doc["words"].is_object()) {
    throw LexiconError("lexicon must be an object with a \"sememes\" array and a \"words\" object");
  }

  SememeLexicon lex;
  for (const auto& s : doc["sememes"]) {
    if (!s.is_string()) throw LexiconError("sememe names must be strings");
    const std::string name = s.get<std::string>();
    if (!lex.sememe_ids_.emplace(name, lex.sememes_.size()).second) {
      throw LexiconError("duplicate sememe '" + name + "'");
    }
    lex.sememes_.push_back(name);
  }

  for (const auto& [word_utf8, sense_list] : doc["words"].items()) {
    const std::u32string word = utf8_decode(word_utf8);
    const std::string ctx = "word '" + word_utf8 + "'";
    if (word.empty()) throw LexiconError("empty word in lexicon");
    if (!sense_list.is_array() || sense_list.empty()) {
      throw LexiconError(ctx + ": expected a non-empty list of senses");
    }
    std::vector<Sense> senses;
    for (const auto& entry : sense_list) {
      Sense sense;
      sense.word = word;
      if (!entry.is_object() || !entry.contains("sememes") || !entry["sememes"].is_array()) {
        throw LexiconError(ctx + ": sense needs a \"sememes\" array");
      }
      sense.id = entry.value("sense", word_utf8 + "#" + std::to_string(senses.size()));
      const std::string sctx = ctx + " sense '" + sense.id + "'";
      for (const auto& ref : entry["sememes"]) {
        if (ref.is_number_unsigned() || ref.is_number_integer()) {
          const auto idx = ref.get<long long>();
          if (idx < 0 || static_cast<std::size_t>(idx) >= lex.sememes_.size()) {
            throw LexiconError(sctx + ": undefined sememe index " + std::to_string(idx));
          }
          sense.graph.nodes.push_back(static_cast<std::size_t>(idx));
        } else if (ref.is_string()) {
          const auto name = ref.get<std::string>();
          auto idx = lex.sememe_index(name);
          if (!idx) throw LexiconError(sctx + ": undefined sememe '" + name + "'");
          sense.graph.nodes.push_back(*idx);
        } else {
          throw LexiconError(sctx + ": sememe references must be indices or names");
        }
      }
      if (sense.graph.nodes.empty()) throw LexiconError(sctx + ": sense has no sememes");
      if (entry.contains("edges")) {
        for (const auto& e : entry["edges"]) {
          if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
            throw LexiconError(sctx + ": edges must be [i, j] pairs");
          }
          const auto i = e[0].get<long long>();
          const auto j = e[1].get<long long>();
          const auto m = static_cast<long long>(sense.graph.nodes.size());
          if (i < 0 || j < 0 || i >= m || j >= m) {
            throw LexiconError(sctx + ": edge [" + std::to_string(i) + ", " + std::to_string(j) +
                               "] outside its " + std::to_string(m) + " sememes");
          }
          sense.graph.edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        }
      }
      sense.graph.normalize();
      senses.push_back(std::move(sense));
    }
    lex.max_word_length_ = std::max(lex.max_word_length_, word.size());
    lex.words_.emplace(word, std::move(senses));
  }
  return lex;
}

SememeLexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LexiconError("cannot open lexicon " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return SememeLexicon::parse(buf.str());
}

std::vector<std::vector<WordMatch>> match_words(std::u32string_view paragraph,
                                                const SememeLexicon& lexicon,
                                                std::size_t max_word_len) {
  if (max_word_len == 0) throw std::invalid_argument("match_words: max_word_len must be >= 1");
  const std::size_t n = paragraph.size();
  std::vector<std::vector<WordMatch>> out(n);
  const std::size_t longest = std::min(max_word_len, lexicon.max_word_length());
  for (std::size_t start = 0; start < n; ++start) {
    for (std::size_t len = 1; len <= longest && start + len <= n; ++len) {
      const std::u32string_view word = paragraph.substr(start, len);
      std::span<const Sense> senses = lexicon.senses(word);
      if (senses.empty()) continue;
      for (std::size_t pos = start; pos < start + len; ++pos) {
        out[pos].push_back(WordMatch{std::u32string(word), senses,
                                     static_cast<int>(start) - static_cast<int>(pos),
                                     static_cast<int>(start + len - 1) - static_cast<int>(pos)});
      }
    }
  }
  return out;
}

}  // namespace lexfusion
