#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <vector>

namespace lexfusion {

/// Inclusive character span [start, end].
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  bool contains(std::size_t pos) const { return start <= pos && pos <= end; }
  bool overlaps(const Span& other) const { return start <= other.end && other.start <= end; }

  friend auto operator<=>(const Span&, const Span&) = default;
};

std::string to_string(const Span& span);

enum class MentionType { kFusion, kSeparation };

struct Mention {
  Span span;
  MentionType type = MentionType::kSeparation;

  friend auto operator<=>(const Mention&, const Mention&) = default;
};

/// Fine-grained coreference: character `char_index` of fusion mention
/// `fusion_mention` refers to separation mention `sep_mention`.
struct Link {
  std::size_t fusion_mention = 0;
  std::size_t char_index = 0;
  std::size_t sep_mention = 0;

  friend auto operator<=>(const Link&, const Link&) = default;
};

/// <fusion word, separation word 1, separation word 2>: the i-th fusion
/// character refers to the i-th separation word.
struct Triple {
  Span fusion;
  Span first;
  Span second;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

}  // namespace lexfusion
