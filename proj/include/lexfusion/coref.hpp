#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "lexfusion/random.hpp"
#include "lexfusion/tape.hpp"
#include "lexfusion/types.hpp"

namespace lexfusion::coref {

/// Class 0 = not coreferent, class 1 = coreferent.
inline constexpr std::size_t kClasses = 2;

struct CorefParams {
  CorefParams() = default;
  CorefParams(std::size_t input_dim, std::size_t tag_dim, Rng& rng, const std::string& prefix = "coref");

  Parameter tag_embedding;  // 5 x tag_dim
  Parameter bilinear;       // 2 x d_z x d_z
  Parameter linear;         // 2 d_z x 2, applied to [z_i ; z_j]
  Parameter bias;           // 2

  std::size_t fused_dim() const { return bilinear.value.shape()[1]; }
  std::vector<Parameter*> parameters() { return {&tag_embedding, &bilinear, &linear, &bias}; }
};

/// z_i = [h_i ; E[tag_i]], n x (d_h + tag_dim).
Var fuse(Tape& tape, Var encoded, std::span<const std::size_t> tags, CorefParams& params);

/// s = z_i' U z_j + W [z_i ; z_j] + b for a single ordered pair.
std::array<double, kClasses> biaffine(std::span<const double> z_i, std::span<const double> z_j,
                                      const CorefParams& params);

/// Scores of every ordered pair, one n x n matrix per class. Diagonal
/// entries are computed but never read.
struct PairScores {
  Var not_coref;
  Var coref;
};
PairScores pair_scores(Tape& tape, Var fused, CorefParams& params);

/// n x n gold relations: 1 for every (fusion character, character of its
/// linked separation word) pair in both orders, 0 elsewhere and on the diagonal.
Tensor build_pair_labels(std::size_t length, std::span<const Mention> mentions, std::span<const Link> links);

enum class LossForm {
  kCrossEntropy,  // mean of -log p(r_ij)
  kLiteral,       // mean of p(r_ij), the objective exactly as printed
};

/// Averaged loss over the n(n-1) ordered pairs i != j. Positive pairs are
/// weighted by `positive_weight`. Zero for a single character.
Var pair_loss(const PairScores& scores, const Tensor& labels, double positive_weight = 1.0,
              LossForm form = LossForm::kCrossEntropy);

/// p(coref) for every ordered pair; diagonal set to 0.
Tensor pair_probabilities(const PairScores& scores);

}  // namespace lexfusion::coref
