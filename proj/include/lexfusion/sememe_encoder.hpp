#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "lexfusion/lexicon.hpp"
#include "lexfusion/random.hpp"
#include "lexfusion/tape.hpp"

namespace lexfusion {

enum class SememeMode { kOff, kChar, kWord };
enum class GraphMode { kReal, kPseudo };

struct SememeEncoderConfig {
  std::size_t sememe_dim = 200;
  std::size_t heads = 3;
  std::size_t head_dim = 32;
  std::size_t offset_dim = 12;
  std::size_t input_dim = 64;   // width of the base encoder output h_i
  std::size_t output_dim = 64;  // width handed to the decoders
  std::size_t max_word_len = 4;
  SememeMode mode = SememeMode::kWord;
  GraphMode graph = GraphMode::kReal;
  bool concat_base = false;     // concatenate [h ; h_sem] instead of replacing h
};

/// Encodes sememe graphs with a multi-head graph attention layer, turns each
/// matched sense into a vector (mean node state plus a word-offset
/// embedding), and attends over the senses of each character, guided by the
/// base encoder output.
class SememeEncoder {
 public:
  static constexpr int kMaxOffset = 3;
  static constexpr std::size_t kOffsetVocab = (kMaxOffset + 1) * (kMaxOffset + 1);

  SememeEncoder(std::size_t sememe_vocab, SememeEncoderConfig config, Rng& rng,
                const std::string& prefix = "sememe");

  struct GatResult {
    Var nodes;                   // M x (heads * head_dim)
    std::vector<Var> attention;  // per head, M x M, rows sum to 1
  };
  struct Aggregation {
    Var output;   // 1 x sense_width
    Var weights;  // 1 x N
  };

  /// One GAT layer: per head, LeakyReLU(a_src.Wh_i + a_dst.Wh_j) logits,
  /// softmax over the neighbours of i, weighted sum of Wh_j; heads concatenated.
  GatResult gat_layer(Tape& tape, Var node_embeddings, const Tensor& adjacency);
  /// Mean of the GAT node outputs over the sense's sememe graph.
  Var sense_graph_mean(Tape& tape, const Sense& sense);
  /// [graph mean ; offset embedding], 1 x sense_width.
  Var sense_repr(Tape& tape, const Sense& sense, int start_offset, int end_offset);
  Aggregation aggregate(Tape& tape, Var h_i, Var sense_reprs);
  /// Sememe-enhanced sequence replacing (or concatenated to) `base`.
  Var enhance(Tape& tape, std::u32string_view paragraph, Var base, const SememeLexicon& lexicon);

  /// Clamped (start, end) offset pair as a single embedding id.
  static std::size_t offset_id(int start_offset, int end_offset);

  std::size_t gat_width() const { return config_.heads * config_.head_dim; }
  std::size_t sense_width() const { return gat_width() + config_.offset_dim; }
  std::size_t output_width() const {
    return config_.concat_base ? config_.input_dim + config_.output_dim : config_.output_dim;
  }
  const SememeEncoderConfig& config() const { return config_; }
  std::vector<Parameter*> parameters();

  Parameter sememe_embedding;
  std::vector<Parameter> head_weight;
  std::vector<Parameter> head_source;
  std::vector<Parameter> head_target;
  Parameter offset_embedding;
  Parameter attention_vector;  // [input_dim + sense_width, 1]
  Parameter fallback_weight;
  Parameter fallback_bias;
  Parameter output_weight;
  Parameter output_bias;

 private:
  SememeEncoderConfig config_;
};

}  // namespace lexfusion
