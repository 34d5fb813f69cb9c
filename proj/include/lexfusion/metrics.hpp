#pragma once

// Exact-span evaluation at mention, fine-grained link and triple level, and
// the analysis breakdowns (IV/OOV x link types, order, distance).

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "lexfusion/corpus.hpp"

namespace lexfusion {

class EvalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Prf {
  std::size_t correct = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;

  /// 0 when nothing was predicted.
  double precision() const;
  double recall() const;
  /// 2PR / (P + R), or 0 when P + R = 0.
  double f1() const;
};

struct EvalReport {
  Prf fusion_mentions;
  Prf separation_mentions;
  Prf mentions;  // both types pooled
  Prf fine_grained;
  Prf triples;
};

/// Micro-averaged scores. Both sides must hold the same set of instance ids
/// (in any order); throws EvalError otherwise.
EvalReport evaluate(std::span<const Instance> predicted, std::span<const Instance> gold);

/// 'A' when the fusion character occurs in the separation word, else 'B'.
char link_type(char32_t fusion_char, std::u32string_view separation_word);

/// "backward" when the fusion word precedes both separation words,
/// "forward" when it follows both, "mixed" otherwise.
std::string order_bucket(const Triple& triple);

/// Distance between the two separation words (later start minus earlier end),
/// bucketed as "1-10", "11-20", "21-40" or "41+".
std::string distance_bucket(const Triple& triple);

struct Breakdown {
  std::map<std::string, Prf> vocabulary;    // "IV-AA", "IV-AB", "IV-BB", "OOV-AA", ...
  std::map<std::string, Prf> fine_grained;  // "A", "B"
  std::map<std::string, Prf> order;         // "forward", "backward", "mixed"
  std::map<std::string, Prf> distance;      // see distance_bucket
};

/// Triples and links are bucketed by their own properties on each side, so
/// a bucket's precision counts only predictions falling into it.
Breakdown breakdown(std::span<const Instance> predicted, std::span<const Instance> gold,
                    const std::set<std::u32string>& train_vocab);

/// Fusion words of every fusion mention in `corpus`.
std::set<std::u32string> fusion_vocabulary(std::span<const Instance> corpus);

/// JSON report; the breakdown section is omitted when `tables` is null.
std::string report_json(const EvalReport& report, const Breakdown* tables = nullptr);

}  // namespace lexfusion
