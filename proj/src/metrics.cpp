#include "lexfusion/metrics.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <tuple>

#include <json.hpp>


namespace lexfusion {
namespace {

using MentionKey = std::tuple<std::string, Span, MentionType>;
using LinkKey = std::tuple<std::string, Span, std::size_t, Span>;
using TripleKey = std::pair<std::string, Triple>;

std::map<std::string, const Instance*> index_by_id(std::span<const Instance> instances, const char* side) {
  std::map<std::string, const Instance*> out;
  for (const Instance& inst : instances) {
    if (!out.emplace(inst.id, &inst).second) {
      throw EvalError(std::string(side) + " contains instance id '" + inst.id + "' twice");
    }
  }
  return out;
}

template <typename Key>
void count(Prf& prf, const std::set<Key>& predicted, const std::set<Key>& gold) {
  prf.predicted += predicted.size();
  prf.gold += gold.size();
  for (const Key& k : predicted) prf.correct += gold.count(k);
}

std::u32string_view slice(const Instance& inst, const Span& span) {
  return std::u32string_view(inst.text).substr(span.start, span.length());
}

std::string triple_link_types(const Instance& inst, const Triple& t) {
  const char a = link_type(inst.text[t.fusion.start], slice(inst, t.first));
  const char b = link_type(inst.text[t.fusion.start + 1], slice(inst, t.second));
  if (a == 'A' && b == 'A') return "AA";
  if (a == 'B' && b == 'B') return "BB";
  return "AB";
}

// One side's bucketed items; a key from the predicted side is correct when
// the same key appears on the gold side.
struct Buckets {
  std::map<std::string, std::set<TripleKey>> vocabulary, order, distance;
  std::map<std::string, std::set<LinkKey>> fine_grained;
};

Buckets bucket(std::span<const Instance> instances, const std::set<std::u32string>& train_vocab) {
  Buckets b;
  for (const Instance& inst : instances) {
    for (const Triple& t : inst.triples()) {
      const std::u32string word(slice(inst, t.fusion));
      const std::string vocab = train_vocab.count(word) ? "IV" : "OOV";
      b.vocabulary[vocab + "-" + triple_link_types(inst, t)].insert({inst.id, t});
      b.order[order_bucket(t)].insert({inst.id, t});
      b.distance[distance_bucket(t)].insert({inst.id, t});
    }
    for (const Link& l : inst.links) {
      const Span& f = inst.mentions[l.fusion_mention].span;
      const Span& s = inst.mentions[l.sep_mention].span;
      const std::string type(1, link_type(inst.text[f.start + l.char_index], slice(inst, s)));
      b.fine_grained[type].insert({inst.id, f, l.char_index, s});
    }
  }
  return b;
}

template <typename Key>
std::map<std::string, Prf> score_buckets(const std::map<std::string, std::set<Key>>& predicted,
                                         const std::map<std::string, std::set<Key>>& gold,
                                         std::initializer_list<const char*> names) {
  std::map<std::string, Prf> out;
  static const std::set<Key> kEmpty;
  for (const char* name : names) {
    auto p = predicted.find(name);
    auto g = gold.find(name);
    count(out[name], p == predicted.end() ? kEmpty : p->second, g == gold.end() ? kEmpty : g->second);
  }
  return out;
}

nlohmann::ordered_json prf_json(const Prf& prf) {
  return {{"precision", prf.precision()}, {"recall", prf.recall()}, {"f1", prf.f1()},
          {"correct", prf.correct}, {"predicted", prf.predicted}, {"gold", prf.gold}};
}

nlohmann::ordered_json table_json(const std::map<std::string, Prf>& table) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [name, prf] : table) out[name] = prf_json(prf);
  return out;
}

}  // namespace

double Prf::precision() const { return predicted == 0 ? 0.0 : static_cast<double>(correct) / predicted; }
double Prf::recall() const { return gold == 0 ? 0.0 : static_cast<double>(correct) / gold; }
double Prf::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

EvalReport evaluate(std::span<const Instance> predicted, std::span<const Instance> gold) {
  const auto pred_by_id = index_by_id(predicted, "predictions");
  const auto gold_by_id = index_by_id(gold, "gold");
  for (const auto& [id, inst] : pred_by_id) {
    if (!gold_by_id.count(id)) throw EvalError("prediction for unknown instance id '" + id + "'");
  }
  for (const auto& [id, inst] : gold_by_id) {
    if (!pred_by_id.count(id)) throw EvalError("no prediction for gold instance id '" + id + "'");
  }

  EvalReport report;
  for (const auto& [id, g] : gold_by_id) {
    const Instance& p = *pred_by_id.at(id);
    if (p.text != g->text) throw EvalError("instance '" + id + "': predicted and gold text differ");
    auto mentions = [&id](const Instance& inst, std::optional<MentionType> type) {
      std::set<MentionKey> out;
      for (const Mention& m : inst.mentions) {
        if (!type || m.type == *type) out.insert({id, m.span, m.type});
      }
      return out;
    };
    auto links = [&id](const Instance& inst) {
      std::set<LinkKey> out;
      for (const Link& l : inst.links) {
        out.insert({id, inst.mentions[l.fusion_mention].span, l.char_index, inst.mentions[l.sep_mention].span});
      }
      return out;
    };
    auto triples = [&id](const Instance& inst) {
      std::set<TripleKey> out;
      for (const Triple& t : inst.triples()) out.insert({id, t});
      return out;
    };
    count(report.fusion_mentions, mentions(p, MentionType::kFusion), mentions(*g, MentionType::kFusion));
    count(report.separation_mentions, mentions(p, MentionType::kSeparation), mentions(*g, MentionType::kSeparation));
    count(report.mentions, mentions(p, std::nullopt), mentions(*g, std::nullopt));
    count(report.fine_grained, links(p), links(*g));
    count(report.triples, triples(p), triples(*g));
  }
  return report;
}

char link_type(char32_t fusion_char, std::u32string_view separation_word) {
  return separation_word.find(fusion_char) == std::u32string_view::npos ? 'B' : 'A';
}

std::string order_bucket(const Triple& t) {
  const bool before_first = t.fusion.end < t.first.start;
  const bool before_second = t.fusion.end < t.second.start;
  if (before_first && before_second) return "backward";
  if (!before_first && !before_second) return "forward";
  return "mixed";
}

std::string distance_bucket(const Triple& t) {
  const Span& earlier = t.first.start < t.second.start ? t.first : t.second;
  const Span& later = t.first.start < t.second.start ? t.second : t.first;
  const std::size_t d = later.start > earlier.end ? later.start - earlier.end : 0;
  if (d <= 10) return "1-10";
  if (d <= 20) return "11-20";
  if (d <= 40) return "21-40";
  return "41+";
}

Breakdown breakdown(std::span<const Instance> predicted, std::span<const Instance> gold,
                    const std::set<std::u32string>& train_vocab) {
  evaluate(predicted, gold);  // same id and text checks
  const Buckets p = bucket(predicted, train_vocab);
  const Buckets g = bucket(gold, train_vocab);
  Breakdown out;
  out.vocabulary = score_buckets(p.vocabulary, g.vocabulary,
                                 {"IV-AA", "IV-AB", "IV-BB", "OOV-AA", "OOV-AB", "OOV-BB"});
  out.fine_grained = score_buckets(p.fine_grained, g.fine_grained, {"A", "B"});
  out.order = score_buckets(p.order, g.order, {"forward", "backward", "mixed"});
  out.distance = score_buckets(p.distance, g.distance, {"1-10", "11-20", "21-40", "41+"});
  return out;
}

std::set<std::u32string> fusion_vocabulary(std::span<const Instance> corpus) {
  std::set<std::u32string> out;
  for (const Instance& inst : corpus) {
    for (const Mention& m : inst.mentions) {
      if (m.type == MentionType::kFusion) out.emplace(slice(inst, m.span));
    }
  }
  return out;
}

std::string report_json(const EvalReport& report, const Breakdown* tables) {
  nlohmann::ordered_json j;
  j["mention"] = {{"fusion", prf_json(report.fusion_mentions)},
                  {"separation", prf_json(report.separation_mentions)},
                  {"all", prf_json(report.mentions)}};
  j["fine_grained"] = prf_json(report.fine_grained);
  j["triple"] = prf_json(report.triples);
  if (tables != nullptr) {
    j["breakdown"] = {{"vocabulary", table_json(tables->vocabulary)},
                      {"fine_grained", table_json(tables->fine_grained)},
                      {"order", table_json(tables->order)},
                      {"distance", table_json(tables->distance)}};
  }
  return j.dump(2) + "\n";
}

}  // namespace lexfusion
