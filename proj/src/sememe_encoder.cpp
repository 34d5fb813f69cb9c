#include "lexfusion/sememe_encoder.hpp"

#include <algorithm>
#include <unordered_map>

#include "lexfusion/ops.hpp"

namespace lexfusion {

SememeEncoder::SememeEncoder(std::size_t sememe_vocab, SememeEncoderConfig config, Rng& rng,
                             const std::string& prefix)
    : config_(config) {
  if (sememe_vocab == 0) throw std::invalid_argument("sememe encoder needs a non-empty sememe vocabulary");
  sememe_embedding = Parameter(prefix + ".sememe_embedding",
                               uniform_tensor({sememe_vocab, config.sememe_dim}, -0.5, 0.5, rng));
  for (std::size_t k = 0; k < config.heads; ++k) {
    const std::string head = prefix + ".gat.head" + std::to_string(k);
    head_weight.emplace_back(head + ".weight", glorot(config.sememe_dim, config.head_dim, rng));
    head_source.emplace_back(head + ".source", glorot(config.head_dim, 1, rng));
    head_target.emplace_back(head + ".target", glorot(config.head_dim, 1, rng));
  }
  offset_embedding = Parameter(prefix + ".offset_embedding",
                               uniform_tensor({kOffsetVocab, config.offset_dim}, -0.5, 0.5, rng));
  attention_vector = Parameter(prefix + ".attention_vector", glorot(config.input_dim + sense_width(), 1, rng));
  fallback_weight = Parameter(prefix + ".fallback.weight", glorot(config.input_dim, sense_width(), rng));
  fallback_bias = Parameter(prefix + ".fallback.bias", Tensor({sense_width()}));
  output_weight = Parameter(prefix + ".output.weight", glorot(sense_width(), config.output_dim, rng));
  output_bias = Parameter(prefix + ".output.bias", Tensor({config.output_dim}));
}

std::vector<Parameter*> SememeEncoder::parameters() {
  std::vector<Parameter*> out{&sememe_embedding};
  for (std::size_t k = 0; k < head_weight.size(); ++k) {
    out.push_back(&head_weight[k]);
    out.push_back(&head_source[k]);
    out.push_back(&head_target[k]);
  }
  for (Parameter* p : {&offset_embedding, &attention_vector, &fallback_weight, &fallback_bias,
                       &output_weight, &output_bias}) {
    out.push_back(p);
  }
  return out;
}

std::size_t SememeEncoder::offset_id(int start_offset, int end_offset) {
  const int s = std::clamp(-start_offset, 0, kMaxOffset);
  const int e = std::clamp(end_offset, 0, kMaxOffset);
  return static_cast<std::size_t>(s * (kMaxOffset + 1) + e);
}

SememeEncoder::GatResult SememeEncoder::gat_layer(Tape& tape, Var node_embeddings, const Tensor& adjacency) {
  const std::size_t m = node_embeddings.rows();
  if (m == 0) throw ShapeError("gat_layer: graph has no nodes");
  if (adjacency.rank() != 2 || adjacency.rows() != m || adjacency.cols() != m) {
    throw ShapeError("gat_layer: adjacency " + shape_string(adjacency.shape()) + " does not match " +
                     std::to_string(m) + " nodes");
  }
  Var ones_col = tape.constant(Tensor({m, 1}, 1.0));
  Var ones_row = tape.constant(Tensor({1, m}, 1.0));
  GatResult result;
  std::vector<Var> heads;
  for (std::size_t k = 0; k < config_.heads; ++k) {
    Var wh = ops::matmul(node_embeddings, tape.param(head_weight[k]));
    Var src = ops::matmul(wh, tape.param(head_source[k]));
    Var dst = ops::matmul(wh, tape.param(head_target[k]));
    Var logits = ops::leaky_relu(
        ops::add(ops::matmul(src, ones_row), ops::matmul(ones_col, ops::transpose(dst))), 0.2);
    Var alpha = ops::masked_softmax(logits, adjacency);
    heads.push_back(ops::matmul(alpha, wh));
    result.attention.push_back(alpha);
  }
  result.nodes = heads.size() == 1 ? heads.front() : ops::concat(heads, 1);
  return result;
}

Var SememeEncoder::sense_graph_mean(Tape& tape, const Sense& sense) {
  const std::size_t vocab = sememe_embedding.value.rows();
  for (std::size_t id : sense.graph.nodes) {
    if (id >= vocab) {
      throw std::out_of_range("sense '" + sense.id + "' references unknown sememe id " + std::to_string(id));
    }
  }
  Var emb = ops::embedding_lookup(tape.param(sememe_embedding), sense.graph.nodes);
  const SememeGraph graph = config_.graph == GraphMode::kPseudo ? sense.graph.fully_connected() : sense.graph;
  Var nodes = gat_layer(tape, emb, graph.adjacency()).nodes;
  const std::size_t m = sense.graph.nodes.size();
  return ops::matmul(tape.constant(Tensor({1, m}, 1.0 / static_cast<double>(m))), nodes);
}

Var SememeEncoder::sense_repr(Tape& tape, const Sense& sense, int start_offset, int end_offset) {
  const std::size_t id = offset_id(start_offset, end_offset);
  Var offset = ops::embedding_lookup(tape.param(offset_embedding), std::span<const std::size_t>(&id, 1));
  return ops::concat({sense_graph_mean(tape, sense), offset}, 1);
}

SememeEncoder::Aggregation SememeEncoder::aggregate(Tape& tape, Var h_i, Var sense_reprs) {
  const std::size_t d = config_.input_dim;
  if (h_i.cols() != d || sense_reprs.cols() != sense_width()) {
    throw ShapeError("aggregate: expected h_i width " + std::to_string(d) + " and sense width " +
                     std::to_string(sense_width()) + ", got " + shape_string(h_i.shape()) + " and " +
                     shape_string(sense_reprs.shape()));
  }
  Var v = tape.param(attention_vector);
  Var guide = ops::matmul(h_i, ops::slice_rows(v, 0, d));                         // 1 x 1
  Var own = ops::matmul(sense_reprs, ops::slice_rows(v, d, sense_width()));      // N x 1
  Var scores = ops::tanh(ops::add(own, ops::reshape(guide, {1})));
  Var weights = ops::softmax(ops::transpose(scores));                            // 1 x N
  return {ops::matmul(weights, sense_reprs), weights};
}

Var SememeEncoder::enhance(Tape& tape, std::u32string_view paragraph, Var base, const SememeLexicon& lexicon) {
  const std::size_t n = paragraph.size();
  if (base.rows() != n || base.cols() != config_.input_dim) {
    throw ShapeError("enhance: base output " + shape_string(base.shape()) + " does not match paragraph of " +
                     std::to_string(n) + " characters and width " + std::to_string(config_.input_dim));
  }
  const std::size_t max_len = config_.mode == SememeMode::kChar
                                  ? 1
                                  : std::min<std::size_t>(config_.max_word_len, kMaxOffset + 1);
  const auto matches = match_words(paragraph, lexicon, max_len);

  std::unordered_map<const Sense*, Var> graph_means;
  Var fallback;
  std::vector<Var> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Var h_i = ops::slice_rows(base, i, 1);
    if (matches[i].empty()) {
      if (!fallback.valid()) {
        fallback = ops::add(ops::matmul(base, tape.param(fallback_weight)), tape.param(fallback_bias));
      }
      rows.push_back(ops::slice_rows(fallback, i, 1));
      continue;
    }
    std::vector<Var> means;
    std::vector<std::size_t> offsets;
    for (const WordMatch& match : matches[i]) {
      for (const Sense& sense : match.senses) {
        auto it = graph_means.find(&sense);
        if (it == graph_means.end()) {
          it = graph_means.emplace(&sense, sense_graph_mean(tape, sense)).first;
        }
        means.push_back(it->second);
        offsets.push_back(offset_id(match.start_offset, match.end_offset));
      }
    }
    Var reprs = ops::concat({ops::concat(means, 0), ops::embedding_lookup(tape.param(offset_embedding), offsets)}, 1);
    rows.push_back(aggregate(tape, h_i, reprs).output);
  }
  Var sem = ops::concat(rows, 0);
  Var projected = ops::add(ops::matmul(sem, tape.param(output_weight)), tape.param(output_bias));
  return config_.concat_base ? ops::concat({base, projected}, 1) : projected;
}

}  // namespace lexfusion
