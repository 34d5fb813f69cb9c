#pragma once

// Linear-chain CRF over BIO tags with mention types. Transition scores are
// indexed T[current][previous]; there are no start/stop transitions, so the
// first position contributes its emission only.

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "lexfusion/random.hpp"
#include "lexfusion/tape.hpp"
#include "lexfusion/types.hpp"

namespace lexfusion::crf {

enum Tag : std::size_t { kO = 0, kBeginFusion = 1, kInsideFusion = 2, kBeginSep = 3, kInsideSep = 4 };
inline constexpr std::size_t kNumTags = 5;

std::string_view tag_name(std::size_t tag);

struct CrfParams {
  CrfParams() = default;
  CrfParams(std::size_t input_dim, Rng& rng, const std::string& prefix = "crf");

  Parameter weight;       // input_dim x 5
  Parameter bias;         // 5
  Parameter transitions;  // 5 x 5, [current][previous]

  std::vector<Parameter*> parameters() { return {&weight, &bias, &transitions}; }
};

/// o_i = W h_i + b for every position: n x 5.
Var emissions(Tape& tape, Var encoded, CrfParams& params);

/// log of the sum over all 5^n tag sequences (forward algorithm).
double log_partition(const Tensor& emissions, const Tensor& transitions);
double sequence_score(const Tensor& emissions, const Tensor& transitions, std::span<const std::size_t> tags);
double sequence_log_prob(const Tensor& emissions, const Tensor& transitions, std::span<const std::size_t> tags);
/// Highest-scoring sequence; ties go to the lowest tag id.
std::vector<std::size_t> viterbi(const Tensor& emissions, const Tensor& transitions);
/// Per-position tag marginals, n x 5.
Tensor marginals(const Tensor& emissions, const Tensor& transitions);

/// -log p(gold) as a differentiable scalar of emissions and transitions.
Var mention_loss(Var emissions, Var transitions, std::span<const std::size_t> gold);

/// Large negative scores on transitions into I-x from anything but B-x/I-x.
Tensor transition_mask();

/// Maximal B-x I-x* runs; an I-x that does not continue an x mention opens one.
std::vector<Mention> decode_mentions(std::span<const std::size_t> tags);
std::vector<std::size_t> encode_tags(std::size_t length, std::span<const Mention> mentions);

}  // namespace lexfusion::crf
