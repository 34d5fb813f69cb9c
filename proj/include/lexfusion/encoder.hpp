#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lexfusion/random.hpp"
#include "lexfusion/tape.hpp"

namespace lexfusion {

/// Character vocabulary; id 0 is reserved for unknown characters.
class CharVocab {
 public:
  static constexpr std::size_t kUnknown = 0;

  CharVocab() = default;
  /// Every distinct character of `texts`, ordered by code point.
  static CharVocab build(std::span<const std::u32string> texts);
  static CharVocab from_chars(std::u32string chars);

  std::size_t id(char32_t c) const;
  std::vector<std::size_t> ids(std::u32string_view text) const;
  std::size_t size() const { return chars_.size() + 1; }
  /// Known characters in id order (id = position + 1).
  const std::u32string& chars() const { return chars_; }

 private:
  std::u32string chars_;
  std::map<char32_t, std::size_t> index_;
};

struct ToyEncoderConfig {
  std::size_t d_emb = 64;
  std::size_t d_h = 64;
  std::size_t max_len = 512;
};

class EncoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Small trainable stand-in for a pretrained contextual encoder:
/// character + position embeddings, a +/-1 character window mixer, one
/// single-head self-attention layer with a residual connection, and a tanh
/// output projection to d_h.
class ToyEncoder {
 public:
  ToyEncoder(std::size_t vocab_size, ToyEncoderConfig config, Rng& rng,
             const std::string& prefix = "encoder");

  /// n x d_h representations. Deterministic (no randomness used).
  Var encode(Tape& tape, std::span<const std::size_t> char_ids);

  const ToyEncoderConfig& config() const { return config_; }
  std::vector<Parameter*> parameters();

  Parameter char_embedding;
  Parameter position_embedding;
  Parameter window_weight;
  Parameter window_bias;
  Parameter query;
  Parameter key;
  Parameter value;
  Parameter output;
  Parameter projection;
  Parameter projection_bias;

 private:
  ToyEncoderConfig config_;
};

// LFEMB1 embedding files: magic "LFEMB1", u32 count, u32 dim; then per
// paragraph u32 id length, UTF-8 id, u32 n, n*dim f32 values row-major.

struct EmbeddingRecord {
  std::string id;
  Tensor values;  // n x dim
};

void write_embedding_file(const std::filesystem::path& path, std::size_t dim,
                          std::span<const EmbeddingRecord> records);

class EmbeddingFile {
 public:
  static EmbeddingFile read(const std::filesystem::path& path);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool contains(std::string_view id) const;
  std::vector<std::string> ids() const;
  /// Throws EncoderError for an unknown id or when the stored length is not
  /// `expected_len` (a tokenisation disagreement with the corpus).
  const Tensor& get(std::string_view id, std::size_t expected_len) const;

 private:
  std::size_t dim_ = 0;
  std::map<std::string, Tensor, std::less<>> records_;
};

Tensor load_external(const std::filesystem::path& path, std::string_view paragraph_id,
                     std::size_t expected_len);

}  // namespace lexfusion
