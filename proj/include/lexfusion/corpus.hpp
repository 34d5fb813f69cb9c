#pragma once

// Corpus files, instance validation and the distant-supervision builder.
//
// Corpus JSONL, one object per line:
//   {"id": str, "text": str,
//    "mentions": [{"start": int, "end": int, "type": "F"|"S"}],
//    "links": [{"fusion_mention": int, "char": 0|1, "sep_mention": int}]}
// Spans are inclusive character (not byte) indices.
// Seed files: "fusion\tsep1\tsep2" per line. Raw paragraphs: "id\ttext".

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lexfusion/lexicon.hpp"
#include "lexfusion/types.hpp"

namespace lexfusion {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Instance {
  std::string id;
  std::u32string text;
  std::vector<Mention> mentions;
  std::vector<Link> links;

  /// One triple per fusion mention that has links for both characters.
  std::vector<Triple> triples() const;

  friend bool operator==(const Instance&, const Instance&) = default;
};

/// kStrict is the training/gold contract: every fusion mention is two
/// characters long and linked from both characters. kPrediction accepts
/// model output, where fusion mentions may be unlinked or of other lengths.
enum class Validation { kStrict, kPrediction };

/// Throws CorpusError naming the instance id and the offending spans.
void validate_instance(const Instance& instance, Validation mode = Validation::kStrict);

/// Builds an instance from mentions and the triples over them; link
/// indices refer to the mentions after sorting by start.
Instance make_instance(std::string id, std::u32string text, std::vector<Mention> mentions,
                       const std::vector<Triple>& triples);

Instance parse_instance(std::string_view json_line, Validation mode = Validation::kStrict);
std::string serialize_instance(const Instance& instance);
std::vector<Instance> parse_corpus_text(std::string_view text, Validation mode = Validation::kStrict);
std::vector<Instance> parse_corpus(const std::filesystem::path& path, Validation mode = Validation::kStrict);
void write_corpus(const std::filesystem::path& path, const std::vector<Instance>& instances);

struct Violation {
  std::string rule;
  std::string detail;
};

/// Checks the lexical fusion rules for one triple of `instance`: two-character
/// fusion word; one-one links to distinct, non-overlapping separation words;
/// each fusion character either borrowed verbatim from its separation word or
/// sharing a sememe with it in `lexicon`; and the separation words not forming
/// one inseparable lexicon entry. Forward and backward order are both valid.
/// Without a lexicon only borrowed characters can be confirmed.
std::vector<Violation> validate_lexical_fusion(const Triple& triple, const Instance& instance,
                                               const SememeLexicon* lexicon = nullptr);

struct SeedTriple {
  std::u32string fusion;
  std::u32string first;
  std::u32string second;
};

/// The position-free subset of validate_lexical_fusion.
std::vector<Violation> validate_seed(const SeedTriple& seed, const SememeLexicon* lexicon = nullptr);

std::vector<SeedTriple> parse_seeds_text(std::string_view text);
std::vector<SeedTriple> parse_seeds(const std::filesystem::path& path);

struct RawParagraph {
  std::string id;
  std::u32string text;
};

std::vector<RawParagraph> parse_raw_text(std::string_view text);
std::vector<RawParagraph> parse_raw(const std::filesystem::path& path);

/// Labels every paragraph that contains all three words of at least one seed,
/// anchoring each word at its first occurrence. Paragraphs whose matches
/// overlap inconsistently are dropped. Output follows input order.
std::vector<Instance> build_pseudo_corpus(const std::vector<SeedTriple>& seeds,
                                          const std::vector<RawParagraph>& paragraphs);

/// Deterministic shuffled (train, dev) split; ratios must sum to 1.
std::pair<std::vector<Instance>, std::vector<Instance>> split_corpus(std::vector<Instance> instances,
                                                                     double train_ratio, double dev_ratio,
                                                                     std::uint64_t seed);

}  // namespace lexfusion
