#include "lexfusion/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "lexfusion/ops.hpp"

namespace lexfusion::crf {
namespace {

constexpr std::size_t T = kNumTags;

double lse(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  double total = 0.0;
  for (double x : xs) total += std::exp(x - mx);
  return mx + std::log(total);
}

void check_shapes(const Tensor& em, const Tensor& trans) {
  if (em.rank() != 2 || em.cols() != T || em.rows() == 0) {
    throw ShapeError("crf: emissions must be n x 5 with n >= 1, got " + shape_string(em.shape()));
  }
  if (trans.rank() != 2 || trans.rows() != T || trans.cols() != T) {
    throw ShapeError("crf: transitions must be 5 x 5, got " + shape_string(trans.shape()));
  }
}

void check_tags(const Tensor& em, std::span<const std::size_t> tags) {
  if (tags.size() != em.rows()) {
    throw std::invalid_argument("crf: " + std::to_string(tags.size()) + " tags for " +
                                std::to_string(em.rows()) + " positions");
  }
  for (std::size_t t : tags) {
    if (t >= T) throw std::out_of_range("crf: tag id " + std::to_string(t) + " out of range");
  }
}

// alpha[i][y]: log-sum of all prefixes ending in y at position i.
std::vector<std::array<double, T>> forward_scores(const Tensor& em, const Tensor& trans) {
  const std::size_t n = em.rows();
  std::vector<std::array<double, T>> alpha(n);
  for (std::size_t y = 0; y < T; ++y) alpha[0][y] = em.at(0, y);
  std::array<double, T> terms{};
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < T; ++y) {
      for (std::size_t p = 0; p < T; ++p) terms[p] = alpha[i - 1][p] + trans.at(y, p);
      alpha[i][y] = em.at(i, y) + lse(terms);
    }
  }
  return alpha;
}

// beta[i][y]: log-sum of all suffixes after position i given y at i.
std::vector<std::array<double, T>> backward_scores(const Tensor& em, const Tensor& trans) {
  const std::size_t n = em.rows();
  std::vector<std::array<double, T>> beta(n);
  beta[n - 1].fill(0.0);
  std::array<double, T> terms{};
  for (std::size_t i = n - 1; i-- > 0;) {
    for (std::size_t p = 0; p < T; ++p) {
      for (std::size_t y = 0; y < T; ++y) terms[y] = trans.at(y, p) + em.at(i + 1, y) + beta[i + 1][y];
      beta[i][p] = lse(terms);
    }
  }
  return beta;
}

}  // namespace

std::string_view tag_name(std::size_t tag) {
  static constexpr std::string_view kNames[] = {"O", "B-F", "I-F", "B-S", "I-S"};
  if (tag >= T) throw std::out_of_range("tag id " + std::to_string(tag) + " out of range");
  return kNames[tag];
}

CrfParams::CrfParams(std::size_t input_dim, Rng& rng, const std::string& prefix)
    : weight(prefix + ".emission.weight", glorot(input_dim, T, rng)),
      bias(prefix + ".emission.bias", Tensor({T})),
      transitions(prefix + ".transitions", Tensor({T, T})) {}

Var emissions(Tape& tape, Var encoded, CrfParams& params) {
  if (encoded.cols() != params.weight.value.rows()) {
    throw ShapeError("emissions: encoder width " + std::to_string(encoded.cols()) + " vs projection " +
                     shape_string(params.weight.value.shape()));
  }
  return ops::add(ops::matmul(encoded, tape.param(params.weight)), tape.param(params.bias));
}

double log_partition(const Tensor& em, const Tensor& trans) {
  check_shapes(em, trans);
  const auto alpha = forward_scores(em, trans);
  return lse(alpha.back());
}

double sequence_score(const Tensor& em, const Tensor& trans, std::span<const std::size_t> tags) {
  check_shapes(em, trans);
  check_tags(em, tags);
  double score = 0.0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    score += em.at(i, tags[i]);
    if (i > 0) score += trans.at(tags[i], tags[i - 1]);
  }
  return score;
}

double sequence_log_prob(const Tensor& em, const Tensor& trans, std::span<const std::size_t> tags) {
  return sequence_score(em, trans, tags) - log_partition(em, trans);
}

std::vector<std::size_t> viterbi(const Tensor& em, const Tensor& trans) {
  check_shapes(em, trans);
  const std::size_t n = em.rows();
  std::vector<std::array<double, T>> delta(n);
  std::vector<std::array<std::size_t, T>> back(n);
  for (std::size_t y = 0; y < T; ++y) delta[0][y] = em.at(0, y);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < T; ++y) {
      std::size_t best = 0;
      double best_score = delta[i - 1][0] + trans.at(y, 0);
      for (std::size_t p = 1; p < T; ++p) {
        const double s = delta[i - 1][p] + trans.at(y, p);
        if (s > best_score) {
          best_score = s;
          best = p;
        }
      }
      delta[i][y] = em.at(i, y) + best_score;
      back[i][y] = best;
    }
  }
  std::vector<std::size_t> tags(n);
  std::size_t last = 0;
  for (std::size_t y = 1; y < T; ++y) {
    if (delta[n - 1][y] > delta[n - 1][last]) last = y;
  }
  tags[n - 1] = last;
  for (std::size_t i = n - 1; i > 0; --i) tags[i - 1] = back[i][tags[i]];
  return tags;
}

Tensor marginals(const Tensor& em, const Tensor& trans) {
  check_shapes(em, trans);
  const auto alpha = forward_scores(em, trans);
  const auto beta = backward_scores(em, trans);
  const double z = lse(alpha.back());
  Tensor out({em.rows(), T});
  for (std::size_t i = 0; i < em.rows(); ++i) {
    for (std::size_t y = 0; y < T; ++y) out.at(i, y) = std::exp(alpha[i][y] + beta[i][y] - z);
  }
  return out;
}

Var mention_loss(Var emission_var, Var transition_var, std::span<const std::size_t> gold) {
  const Tensor& em = emission_var.value();
  const Tensor& trans = transition_var.value();
  check_shapes(em, trans);
  check_tags(em, gold);
  const double loss = log_partition(em, trans) - sequence_score(em, trans, gold);
  const std::size_t ie = emission_var.id();
  const std::size_t it = transition_var.id();
  std::vector<std::size_t> tags(gold.begin(), gold.end());
  return emission_var.tape().record(
      "crf_nll", Tensor::scalar(loss), {emission_var, transition_var},
      [ie, it, tags = std::move(tags)](Tape& tape, std::size_t self) {
        const double g = tape.out_grad(self)[0];
        const Tensor& em = tape.value(ie);
        const Tensor& trans = tape.value(it);
        const std::size_t n = em.rows();
        const auto alpha = forward_scores(em, trans);
        const auto beta = backward_scores(em, trans);
        const double z = lse(alpha.back());
        if (tape.requires_grad(ie)) {
          Tensor& ge = tape.grad_buffer(ie);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t y = 0; y < T; ++y) {
              const double marginal = std::exp(alpha[i][y] + beta[i][y] - z);
              ge.at(i, y) += g * (marginal - (tags[i] == y ? 1.0 : 0.0));
            }
          }
        }
        if (tape.requires_grad(it)) {
          Tensor& gt = tape.grad_buffer(it);
          for (std::size_t i = 1; i < n; ++i) {
            for (std::size_t y = 0; y < T; ++y) {
              for (std::size_t p = 0; p < T; ++p) {
                const double pair = std::exp(alpha[i - 1][p] + trans.at(y, p) + em.at(i, y) + beta[i][y] - z);
                gt.at(y, p) += g * pair;
              }
            }
            gt.at(tags[i], tags[i - 1]) -= g;
          }
        }
      });
}

Tensor transition_mask() {
  constexpr double kBlocked = -1e4;
  Tensor mask({T, T});
  for (std::size_t prev = 0; prev < T; ++prev) {
    if (prev != kBeginFusion && prev != kInsideFusion) mask.at(kInsideFusion, prev) = kBlocked;
    if (prev != kBeginSep && prev != kInsideSep) mask.at(kInsideSep, prev) = kBlocked;
  }
  return mask;
}

std::vector<Mention> decode_mentions(std::span<const std::size_t> tags) {
  std::vector<Mention> out;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::size_t tag = tags[i];
    if (tag >= T) throw std::out_of_range("decode_mentions: tag id " + std::to_string(tag));
    if (tag == kO) {
      open = false;
      continue;
    }
    const MentionType type =
        (tag == kBeginFusion || tag == kInsideFusion) ? MentionType::kFusion : MentionType::kSeparation;
    const bool inside = tag == kInsideFusion || tag == kInsideSep;
    if (inside && open && out.back().type == type) {
      out.back().span.end = i;
    } else {
      out.push_back(Mention{Span{i, i}, type});
      open = true;
    }
  }
  return out;
}

std::vector<std::size_t> encode_tags(std::size_t length, std::span<const Mention> mentions) {
  std::vector<std::size_t> tags(length, kO);
  for (const Mention& m : mentions) {
    if (m.span.end >= length || m.span.start > m.span.end) {
      throw std::out_of_range("encode_tags: mention " + to_string(m.span) + " outside " +
                              std::to_string(length) + " characters");
    }
    const bool fusion = m.type == MentionType::kFusion;
    tags[m.span.start] = fusion ? kBeginFusion : kBeginSep;
    for (std::size_t i = m.span.start + 1; i <= m.span.end; ++i) tags[i] = fusion ? kInsideFusion : kInsideSep;
  }
  return tags;
}

}  // namespace lexfusion::crf
