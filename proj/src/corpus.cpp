#include "lexfusion/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lexfusion/random.hpp"
#include "lexfusion/unicode.hpp"

namespace lexfusion {

using nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t next = text.find('\n', pos);
    if (next == std::string_view::npos) next = text.size();
    std::string_view line = text.substr(pos, next - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (next == text.size()) break;
    pos = next + 1;
  }
  return lines;
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t'; });
}

std::u32string word_at(const std::u32string& text, const Span& s) {
  return text.substr(s.start, s.length());
}

// Fusion character `c` refers to `word` either verbatim or through a shared
// sememe (of the word itself or of one of its characters).
bool corresponds(char32_t c, const std::u32string& word, const SememeLexicon* lexicon) {
  if (word.find(c) != std::u32string::npos) return true;
  if (lexicon == nullptr) return false;
  const auto own = lexicon->sememes_of(std::u32string(1, c));
  if (own.empty()) return false;
  auto shares = [&](const std::set<std::size_t>& other) {
    return std::any_of(other.begin(), other.end(), [&](std::size_t s) { return own.count(s) != 0; });
  };
  if (shares(lexicon->sememes_of(word))) return true;
  return std::any_of(word.begin(), word.end(),
                     [&](char32_t wc) { return shares(lexicon->sememes_of(std::u32string(1, wc))); });
}

void check_words(const std::u32string& fusion, const std::u32string& first, const std::u32string& second,
                 const SememeLexicon* lexicon, std::vector<Violation>& out) {
  if (fusion.size() != 2) {
    out.push_back({"fusion-length", "fusion word '" + utf8_encode(fusion) + "' has " +
                                        std::to_string(fusion.size()) + " characters, expected 2"});
    return;
  }
  if (first == second) {
    out.push_back({"distinct", "both separation words are '" + utf8_encode(first) + "'"});
  }
  const std::u32string* words[] = {&first, &second};
  for (std::size_t i = 0; i < 2; ++i) {
    if (!corresponds(fusion[i], *words[i], lexicon)) {
      out.push_back({"correspondence", "character '" + utf8_encode(fusion[i]) +
                                           "' neither appears in nor shares a sememe with '" +
                                           utf8_encode(*words[i]) + "'"});
    }
  }
  if (lexicon != nullptr && lexicon->contains(first + second)) {
    out.push_back({"inseparable", "'" + utf8_encode(first) + "' and '" + utf8_encode(second) +
                                      "' together form the single lexicon entry '" +
                                      utf8_encode(first + second) + "'"});
  }
}

MentionType parse_type(const ordered_json& v, const std::string& ctx) {
  if (v == "F") return MentionType::kFusion;
  if (v == "S") return MentionType::kSeparation;
  throw CorpusError(ctx + ": mention type must be \"F\" or \"S\"");
}

std::size_t as_index(const ordered_json& obj, const char* key, const std::string& ctx) {
  if (!obj.contains(key) || !obj[key].is_number_integer() || obj[key].get<long long>() < 0) {
    throw CorpusError(ctx + ": field \"" + key + "\" must be a non-negative integer");
  }
  return obj[key].get<std::size_t>();
}

}  // namespace

std::vector<Triple> Instance::triples() const {
  std::vector<Triple> out;
  for (std::size_t f = 0; f < mentions.size(); ++f) {
    if (mentions[f].type != MentionType::kFusion) continue;
    const Link* parts[2] = {nullptr, nullptr};
    for (const Link& l : links) {
      if (l.fusion_mention == f && l.char_index < 2) parts[l.char_index] = &l;
    }
    if (parts[0] == nullptr || parts[1] == nullptr) continue;
    out.push_back(Triple{mentions[f].span, mentions.at(parts[0]->sep_mention).span,
                         mentions.at(parts[1]->sep_mention).span});
  }
  return out;
}

void validate_instance(const Instance& inst, Validation mode) {
  const std::string ctx = "instance '" + inst.id + "'";
  if (inst.text.empty()) throw CorpusError(ctx + ": empty text");
  const std::size_t n = inst.text.size();
  for (std::size_t i = 0; i < inst.mentions.size(); ++i) {
    const Span& s = inst.mentions[i].span;
    if (s.start > s.end || s.end >= n) {
      throw CorpusError(ctx + ": mention " + to_string(s) + " outside text of " + std::to_string(n) +
                        " characters");
    }
    if (mode == Validation::kStrict && inst.mentions[i].type == MentionType::kFusion && s.length() != 2) {
      throw CorpusError(ctx + ": fusion mention " + to_string(s) + " must span 2 characters");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (s.overlaps(inst.mentions[j].span)) {
        throw CorpusError(ctx + ": mentions " + to_string(inst.mentions[j].span) + " and " + to_string(s) +
                          " overlap");
      }
    }
  }
  std::map<std::size_t, std::set<std::size_t>> linked_chars;
  for (const Link& l : inst.links) {
    if (l.fusion_mention >= inst.mentions.size() || l.sep_mention >= inst.mentions.size()) {
      throw CorpusError(ctx + ": link refers to a mention index outside the " +
                        std::to_string(inst.mentions.size()) + " mentions");
    }
    const Mention& f = inst.mentions[l.fusion_mention];
    const Mention& s = inst.mentions[l.sep_mention];
    if (f.type != MentionType::kFusion) {
      throw CorpusError(ctx + ": link source " + to_string(f.span) + " is not a fusion mention");
    }
    if (s.type != MentionType::kSeparation) {
      throw CorpusError(ctx + ": link target " + to_string(s.span) + " is not a separation mention");
    }
    if (l.char_index >= 2 || l.char_index >= f.span.length()) {
      throw CorpusError(ctx + ": link character " + std::to_string(l.char_index) + " invalid for fusion " +
                        to_string(f.span));
    }
    if (!linked_chars[l.fusion_mention].insert(l.char_index).second) {
      throw CorpusError(ctx + ": fusion " + to_string(f.span) + " character " + std::to_string(l.char_index) +
                        " is linked twice");
    }
  }
  if (mode == Validation::kStrict) {
    for (std::size_t i = 0; i < inst.mentions.size(); ++i) {
      if (inst.mentions[i].type == MentionType::kFusion && linked_chars[i].size() != 2) {
        throw CorpusError(ctx + ": fusion " + to_string(inst.mentions[i].span) +
                          " needs links from both characters");
      }
    }
  }
}

Instance make_instance(std::string id, std::u32string text, std::vector<Mention> mentions,
                       const std::vector<Triple>& triples) {
  std::sort(mentions.begin(), mentions.end());
  Instance inst{std::move(id), std::move(text), std::move(mentions), {}};
  auto index_of = [&](const Span& span, MentionType type) {
    for (std::size_t i = 0; i < inst.mentions.size(); ++i) {
      if (inst.mentions[i].span == span && inst.mentions[i].type == type) return i;
    }
    throw CorpusError("instance '" + inst.id + "': triple span " + to_string(span) + " is not a mention");
  };
  for (const Triple& t : triples) {
    const std::size_t f = index_of(t.fusion, MentionType::kFusion);
    inst.links.push_back(Link{f, 0, index_of(t.first, MentionType::kSeparation)});
    inst.links.push_back(Link{f, 1, index_of(t.second, MentionType::kSeparation)});
  }
  std::sort(inst.links.begin(), inst.links.end());
  return inst;
}

Instance parse_instance(std::string_view line, Validation mode) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(line);
  } catch (const ordered_json::parse_error& e) {
    throw CorpusError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("id") || !doc["id"].is_string() || !doc.contains("text") ||
      !doc["text"].is_string()) {
    throw CorpusError("instance needs string fields \"id\" and \"text\"");
  }
  Instance inst;
  inst.id = doc["id"].get<std::string>();
  const std::string ctx = "instance '" + inst.id + "'";
  try {
    inst.text = utf8_decode(doc["text"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw CorpusError(ctx + ": " + e.what());
  }
  if (doc.contains("mentions")) {
    for (const auto& m : doc["mentions"]) {
      if (!m.is_object() || !m.contains("type")) throw CorpusError(ctx + ": malformed mention");
      inst.mentions.push_back(
          Mention{Span{as_index(m, "start", ctx), as_index(m, "end", ctx)}, parse_type(m["type"], ctx)});
    }
  }
  if (doc.contains("links")) {
    for (const auto& l : doc["links"]) {
      if (!l.is_object()) throw CorpusError(ctx + ": malformed link");
      inst.links.push_back(
          Link{as_index(l, "fusion_mention", ctx), as_index(l, "char", ctx), as_index(l, "sep_mention", ctx)});
    }
  }
  validate_instance(inst, mode);
  return inst;
}

std::string serialize_instance(const Instance& inst) {
  ordered_json doc;
  doc["id"] = inst.id;
  doc["text"] = utf8_encode(inst.text);
  doc["mentions"] = ordered_json::array();
  for (const Mention& m : inst.mentions) {
    ordered_json jm;
    jm["start"] = m.span.start;
    jm["end"] = m.span.end;
    jm["type"] = m.type == MentionType::kFusion ? "F" : "S";
    doc["mentions"].push_back(std::move(jm));
  }
  doc["links"] = ordered_json::array();
  for (const Link& l : inst.links) {
    ordered_json jl;
    jl["fusion_mention"] = l.fusion_mention;
    jl["char"] = l.char_index;
    jl["sep_mention"] = l.sep_mention;
    doc["links"].push_back(std::move(jl));
  }
  return doc.dump();
}

std::vector<Instance> parse_corpus_text(std::string_view text, Validation mode) {
  std::vector<Instance> out;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      out.push_back(parse_instance(line, mode));
    } catch (const CorpusError& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Instance> parse_corpus(const std::filesystem::path& path, Validation mode) {
  try {
    return parse_corpus_text(read_file(path), mode);
  } catch (const CorpusError& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
}

void write_corpus(const std::filesystem::path& path, const std::vector<Instance>& instances) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot open " + path.string() + " for writing");
  for (const Instance& inst : instances) out << serialize_instance(inst) << '\n';
}

std::vector<Violation> validate_lexical_fusion(const Triple& triple, const Instance& instance,
                                               const SememeLexicon* lexicon) {
  std::vector<Violation> out;
  const std::size_t n = instance.text.size();
  for (const Span* s : {&triple.fusion, &triple.first, &triple.second}) {
    if (s->start > s->end || s->end >= n) {
      out.push_back({"span", "span " + to_string(*s) + " outside the paragraph"});
    }
  }
  if (!out.empty()) return out;
  if (triple.first == triple.second) {
    out.push_back({"one-one", "both fusion characters link to separation word " + to_string(triple.first)});
  } else if (triple.first.overlaps(triple.second)) {
    out.push_back({"overlap", "separation words " + to_string(triple.first) + " and " +
                                  to_string(triple.second) + " overlap"});
  }
  for (const Span* s : {&triple.first, &triple.second}) {
    if (s->overlaps(triple.fusion)) {
      out.push_back({"overlap", "separation word " + to_string(*s) + " overlaps the fusion word"});
    }
  }
  const std::u32string& text = instance.text;
  const std::u32string first = word_at(text, triple.first);
  const std::u32string second = word_at(text, triple.second);
  std::vector<Violation> word_level;
  check_words(word_at(text, triple.fusion), first, second, lexicon, word_level);
  for (Violation& v : word_level) {
    // identical spans are already reported as a one-one violation
    if (v.rule == "distinct" && triple.first == triple.second) continue;
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Violation> validate_seed(const SeedTriple& seed, const SememeLexicon* lexicon) {
  std::vector<Violation> out;
  check_words(seed.fusion, seed.first, seed.second, lexicon, out);
  return out;
}

std::vector<SeedTriple> parse_seeds_text(std::string_view text) {
  std::vector<SeedTriple> out;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (blank(line)) continue;
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
      const std::size_t tab = line.find('\t', pos);
      fields.push_back(line.substr(pos, tab == std::string_view::npos ? std::string_view::npos : tab - pos));
      if (tab == std::string_view::npos) break;
      pos = tab + 1;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw CorpusError("seed line " + std::to_string(line_no) + ": expected fusion<TAB>sep1<TAB>sep2");
    }
    try {
      out.push_back(SeedTriple{utf8_decode(fields[0]), utf8_decode(fields[1]), utf8_decode(fields[2])});
    } catch (const std::invalid_argument& e) {
      throw CorpusError("seed line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<SeedTriple> parse_seeds(const std::filesystem::path& path) {
  return parse_seeds_text(read_file(path));
}

std::vector<RawParagraph> parse_raw_text(std::string_view text) {
  std::vector<RawParagraph> out;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (blank(line)) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw CorpusError("raw paragraph line " + std::to_string(line_no) + ": expected id<TAB>text");
    }
    try {
      out.push_back(RawParagraph{std::string(line.substr(0, tab)), utf8_decode(line.substr(tab + 1))});
    } catch (const std::invalid_argument& e) {
      throw CorpusError("raw paragraph line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RawParagraph> parse_raw(const std::filesystem::path& path) { return parse_raw_text(read_file(path)); }

std::vector<Instance> build_pseudo_corpus(const std::vector<SeedTriple>& seeds,
                                          const std::vector<RawParagraph>& paragraphs) {
  std::vector<Instance> out;
  for (const RawParagraph& para : paragraphs) {
    std::vector<Mention> mentions;
    std::vector<Triple> triples;
    bool conflict = false;

    auto place = [&](const Mention& m) {
      for (const Mention& other : mentions) {
        if (other == m) return;
        if (other.span.overlaps(m.span)) {
          conflict = true;
          return;
        }
      }
      mentions.push_back(m);
    };

    for (const SeedTriple& seed : seeds) {
      const std::u32string* words[] = {&seed.fusion, &seed.first, &seed.second};
      Span spans[3];
      bool all = true;
      for (int k = 0; k < 3 && all; ++k) {
        const std::size_t at = words[k]->empty() ? std::u32string::npos : para.text.find(*words[k]);
        all = at != std::u32string::npos;
        if (all) spans[k] = Span{at, at + words[k]->size() - 1};
      }
      if (!all) continue;
      const Triple triple{spans[0], spans[1], spans[2]};
      if (std::find(triples.begin(), triples.end(), triple) != triples.end()) continue;
      if (triple.first.overlaps(triple.second)) {
        conflict = true;
        break;
      }
      for (const Triple& t : triples) {
        if (t.fusion == triple.fusion) conflict = true;
      }
      place(Mention{triple.fusion, MentionType::kFusion});
      place(Mention{triple.first, MentionType::kSeparation});
      place(Mention{triple.second, MentionType::kSeparation});
      if (conflict) break;
      triples.push_back(triple);
    }
    if (conflict || triples.empty()) continue;
    out.push_back(make_instance(para.id, para.text, std::move(mentions), triples));
  }
  return out;
}

std::pair<std::vector<Instance>, std::vector<Instance>> split_corpus(std::vector<Instance> instances,
                                                                     double train_ratio, double dev_ratio,
                                                                     std::uint64_t seed) {
  if (train_ratio < 0.0 || dev_ratio < 0.0 || std::abs(train_ratio + dev_ratio - 1.0) > 1e-9) {
    throw std::invalid_argument("split_corpus: ratios must be non-negative and sum to 1");
  }
  Rng rng(seed);
  shuffle(instances, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(instances.size())));
  std::vector<Instance> dev(std::make_move_iterator(instances.begin() + static_cast<std::ptrdiff_t>(n_train)),
                            std::make_move_iterator(instances.end()));
  instances.resize(n_train);
  return {std::move(instances), std::move(dev)};
}

}  // namespace lexfusion
