#include "lexfusion/coref.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lexfusion/crf.hpp"
#include "lexfusion/ops.hpp"

namespace lexfusion::coref {
namespace {

// p(class 1) from the two logits, overflow safe.
double coref_probability(double s0, double s1) {
  const double d = s1 - s0;
  return d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
}

}  // namespace

CorefParams::CorefParams(std::size_t input_dim, std::size_t tag_dim, Rng& rng, const std::string& prefix) {
  const std::size_t dz = input_dim + tag_dim;
  tag_embedding = Parameter(prefix + ".tag_embedding", uniform_tensor({crf::kNumTags, tag_dim}, -0.5, 0.5, rng));
  const double limit = 1.0 / static_cast<double>(dz);
  bilinear = Parameter(prefix + ".bilinear", uniform_tensor({kClasses, dz, dz}, -limit, limit, rng));
  linear = Parameter(prefix + ".linear", glorot(2 * dz, kClasses, rng));
  bias = Parameter(prefix + ".bias", Tensor({kClasses}));
}

Var fuse(Tape& tape, Var encoded, std::span<const std::size_t> tags, CorefParams& params) {
  if (tags.size() != encoded.rows()) {
    throw std::invalid_argument("fuse: " + std::to_string(tags.size()) + " tags for " +
                                std::to_string(encoded.rows()) + " encoded positions");
  }
  if (encoded.cols() + params.tag_embedding.value.cols() != params.fused_dim()) {
    throw ShapeError("fuse: encoder width " + std::to_string(encoded.cols()) + " plus tag width " +
                     std::to_string(params.tag_embedding.value.cols()) + " does not match biaffine width " +
                     std::to_string(params.fused_dim()));
  }
  return ops::concat({encoded, ops::embedding_lookup(tape.param(params.tag_embedding), tags)}, 1);
}

std::array<double, kClasses> biaffine(std::span<const double> z_i, std::span<const double> z_j,
                                      const CorefParams& params) {
  const std::size_t dz = params.fused_dim();
  if (z_i.size() != dz || z_j.size() != dz) {
    throw ShapeError("biaffine: inputs of width " + std::to_string(z_i.size()) + " and " +
                     std::to_string(z_j.size()) + ", expected " + std::to_string(dz));
  }
  const Tensor& u = params.bilinear.value;
  const Tensor& w = params.linear.value;
  std::array<double, kClasses> out{};
  for (std::size_t c = 0; c < kClasses; ++c) {
    double s = params.bias.value[c];
    for (std::size_t a = 0; a < dz; ++a) {
      double row = 0.0;
      for (std::size_t b = 0; b < dz; ++b) row += u[(c * dz + a) * dz + b] * z_j[b];
      s += z_i[a] * row;
      s += w.at(a, c) * z_i[a] + w.at(dz + a, c) * z_j[a];
    }
    out[c] = s;
  }
  return out;
}

PairScores pair_scores(Tape& tape, Var fused, CorefParams& params) {
  const std::size_t n = fused.rows();
  const std::size_t dz = params.fused_dim();
  if (fused.cols() != dz) {
    throw ShapeError("pair_scores: fused width " + std::to_string(fused.cols()) + ", expected " + std::to_string(dz));
  }
  Var u = tape.param(params.bilinear);
  Var w = tape.param(params.linear);
  Var head = ops::add(ops::matmul(fused, ops::slice_rows(w, 0, dz)), tape.param(params.bias));  // n x 2
  Var tail = ops::matmul(fused, ops::slice_rows(w, dz, dz));                                    // n x 2
  Var fused_t = ops::transpose(fused);
  Var ones_col = tape.constant(Tensor({n, 1}, 1.0));
  Var ones_row = tape.constant(Tensor({1, n}, 1.0));
  Var out[kClasses];
  for (std::size_t c = 0; c < kClasses; ++c) {
    Var bilinear = ops::matmul(ops::matmul(fused, ops::select(u, c)), fused_t);
    Var rows = ops::matmul(ops::slice_cols(head, c, 1), ones_row);
    Var cols = ops::matmul(ones_col, ops::transpose(ops::slice_cols(tail, c, 1)));
    out[c] = ops::add(ops::add(bilinear, rows), cols);
  }
  return PairScores{out[0], out[1]};
}

Tensor build_pair_labels(std::size_t length, std::span<const Mention> mentions, std::span<const Link> links) {
  Tensor labels({length, length});
  for (const Link& l : links) {
    if (l.fusion_mention >= mentions.size() || l.sep_mention >= mentions.size()) {
      throw std::out_of_range("build_pair_labels: link refers to a missing mention");
    }
    const Span& fusion = mentions[l.fusion_mention].span;
    const Span& sep = mentions[l.sep_mention].span;
    const std::size_t c = fusion.start + l.char_index;
    if (c > fusion.end || sep.end >= length || fusion.end >= length) {
      throw std::out_of_range("build_pair_labels: link outside its mention spans");
    }
    for (std::size_t k = sep.start; k <= sep.end; ++k) {
      if (k == c) continue;
      labels.at(c, k) = 1.0;
      labels.at(k, c) = 1.0;
    }
  }
  return labels;
}

Var pair_loss(const PairScores& scores, const Tensor& labels, double positive_weight, LossForm form) {
  const Tensor& s0 = scores.not_coref.value();
  const Tensor& s1 = scores.coref.value();
  const std::size_t n = s0.rows();
  if (!s0.same_shape(s1) || s0.rank() != 2 || s0.cols() != n || !labels.same_shape(s0)) {
    throw ShapeError("pair_loss: scores " + shape_string(s0.shape()) + " / " + shape_string(s1.shape()) +
                     " and labels " + shape_string(labels.shape()) + " must all be n x n");
  }
  Tape& tape = scores.coref.tape();
  if (n < 2) return tape.constant(Tensor::scalar(0.0));
  const double pairs = static_cast<double>(n * (n - 1));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool positive = labels.at(i, j) != 0.0;
      const double weight = positive ? positive_weight : 1.0;
      const double p1 = coref_probability(s0.at(i, j), s1.at(i, j));
      const double p_gold = positive ? p1 : 1.0 - p1;
      if (form == LossForm::kLiteral) {
        total += weight * p_gold;
      } else {
        // -log p via log1p keeps precision when p is near 1
        const double margin = positive ? s1.at(i, j) - s0.at(i, j) : s0.at(i, j) - s1.at(i, j);
        total += weight * (margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin)));
      }
    }
  }
  const std::size_t i0 = scores.not_coref.id();
  const std::size_t i1 = scores.coref.id();
  return tape.record(
      "pair_loss", Tensor::scalar(total / pairs), {scores.not_coref, scores.coref},
      [i0, i1, n, pairs, labels, positive_weight, form](Tape& t, std::size_t self) {
        const double g = t.out_grad(self)[0] / pairs;
        const Tensor& s0 = t.value(i0);
        const Tensor& s1 = t.value(i1);
        Tensor d0(s0.shape());
        Tensor d1(s1.shape());
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const bool positive = labels.at(i, j) != 0.0;
            const double weight = positive ? positive_weight : 1.0;
            const double p1 = coref_probability(s0.at(i, j), s1.at(i, j));
            const double p_gold = positive ? p1 : 1.0 - p1;
            // derivative with respect to the gold logit; the other logit gets the negation
            const double d_gold =
                form == LossForm::kLiteral ? p_gold * (1.0 - p_gold) : -(1.0 - p_gold);
            const double dg = g * weight * d_gold;
            if (positive) {
              d1.at(i, j) += dg;
              d0.at(i, j) -= dg;
            } else {
              d0.at(i, j) += dg;
              d1.at(i, j) -= dg;
            }
          }
        }
        if (t.requires_grad(i0)) {
          Tensor& b0 = t.grad_buffer(i0);
          for (std::size_t k = 0; k < d0.size(); ++k) b0[k] += d0[k];
        }
        if (t.requires_grad(i1)) {
          Tensor& b1 = t.grad_buffer(i1);
          for (std::size_t k = 0; k < d1.size(); ++k) b1[k] += d1[k];
        }
      });
}

Tensor pair_probabilities(const PairScores& scores) {
  const Tensor& s0 = scores.not_coref.value();
  const Tensor& s1 = scores.coref.value();
  const std::size_t n = s0.rows();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) out.at(i, j) = coref_probability(s0.at(i, j), s1.at(i, j));
    }
  }
  return out;
}

}  // namespace lexfusion::coref
