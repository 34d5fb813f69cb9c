#pragma once

// Sememe lexicon: words -> senses -> sememe graphs, and the matcher that
// finds every lexicon word covering each character of a paragraph.
//
// File format (JSON, UTF-8):
//   {"sememes": [name...],
//    "words": {word: [{"sense": id, "sememes": [index|name...], "edges": [[i,j]...]}...]}}
// Sense "sememes" entries name the global vocabulary (by index or by name);
// edge endpoints index the sense-local "sememes" list.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lexfusion/tensor.hpp"

namespace lexfusion {

class LexiconError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SememeGraph {
  std::vector<std::size_t> nodes;                               // global sememe ids
  std::vector<std::pair<std::size_t, std::size_t>> edges;       // local node indices

  /// Undirected with self-loops: adds reverse edges and (i,i) for every node,
  /// drops duplicates, sorts.
  void normalize();
  /// Every pair of nodes connected (the pseudo-graph ablation).
  SememeGraph fully_connected() const;
  /// M x M 0/1 matrix.
  Tensor adjacency() const;
};

struct Sense {
  std::string id;
  std::u32string word;
  SememeGraph graph;
};

class SememeLexicon {
 public:
  static SememeLexicon parse(std::string_view json_text);

  std::size_t word_count() const { return words_.size(); }
  std::size_t sememe_count() const { return sememes_.size(); }
  const std::string& sememe_name(std::size_t index) const { return sememes_.at(index); }
  std::optional<std::size_t> sememe_index(std::string_view name) const;

  bool contains(std::u32string_view word) const;
  /// Empty when the word is not in the lexicon.
  std::span<const Sense> senses(std::u32string_view word) const;
  /// Union of sememe ids over all senses of `word`.
  std::set<std::size_t> sememes_of(std::u32string_view word) const;
  std::size_t max_word_length() const { return max_word_length_; }
  /// All words, sorted by code point.
  std::vector<std::u32string> words() const;

 private:
  std::vector<std::string> sememes_;
  std::unordered_map<std::string, std::size_t> sememe_ids_;
  std::unordered_map<std::u32string, std::vector<Sense>> words_;
  std::size_t max_word_length_ = 0;
};

SememeLexicon load_lexicon(const std::filesystem::path& path);

/// A lexicon word covering the current character. Offsets are relative to
/// that character: start_offset <= 0 <= end_offset.
struct WordMatch {
  std::u32string word;
  std::span<const Sense> senses;
  int start_offset = 0;
  int end_offset = 0;
};

/// For each character position, all lexicon words of length <= max_word_len
/// whose span covers it, ordered by word start then length.
std::vector<std::vector<WordMatch>> match_words(std::u32string_view paragraph,
                                                const SememeLexicon& lexicon,
                                                std::size_t max_word_len = 4);

}  // namespace lexfusion
