#include "synthetic.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "lexfusion/unicode.hpp"

namespace lexfusion::testdata {

std::vector<SeedTriple> fusion_seeds() {
  const char* rows[][3] = {
      {"停车", "停放", "车辆"}, {"受访", "接受", "采访"}, {"返杭", "回到", "杭州"}, {"降息", "下调", "利率"},
      {"调价", "调整", "价格"}, {"减税", "减少", "税收"}, {"增产", "增加", "产量"}, {"提速", "提高", "速度"},
      {"扩招", "扩大", "招生"}, {"赴京", "前往", "北京"}, {"入学", "进入", "学校"}, {"离职", "离开", "职位"},
      {"访华", "访问", "中国"}, {"涨薪", "上涨", "薪水"}, {"修路", "修建", "道路"}, {"购房", "购买", "房屋"},
      {"植树", "种植", "树木"}, {"维权", "维护", "权益"}, {"节水", "节约", "用水"}, {"护林", "保护", "林木"},
      {"治污", "治理", "污染"}, {"停产", "停止", "生产"}, {"限行", "限制", "通行"}, {"降价", "降低", "物价"},
  };
  std::vector<SeedTriple> out;
  for (const auto& r : rows) out.push_back({utf8_decode(r[0]), utf8_decode(r[1]), utf8_decode(r[2])});
  return out;
}

std::u32string filler_alphabet(const std::vector<SeedTriple>& seeds) {
  std::set<char32_t> used;
  for (const SeedTriple& s : seeds) {
    for (const auto* w : {&s.fusion, &s.first, &s.second}) used.insert(w->begin(), w->end());
  }
  const std::u32string candidates =
      utf8_decode("的了在是有和也就都而及与这那个们说要会可以后年月日人为来天时里去看得着过还没很把被让从向给"
                  "再又才只更最已经正将其此该些每各某它她他我你您自己大小多少新旧好坏长短高低前左右东西南"
                  "春夏秋冬山水风雨花草鸟鱼牛羊马狗猫红黄蓝白黑");
  std::u32string out;
  for (char32_t c : candidates) {
    if (!used.count(c) && out.find(c) == std::u32string::npos) out.push_back(c);
  }
  return out;
}

namespace {

std::u32string filler(const std::u32string& alphabet, Rng& rng, std::size_t min_len, std::size_t max_len) {
  const std::size_t len = min_len + uniform_index(rng, max_len - min_len + 1);
  std::u32string out;
  for (std::size_t i = 0; i < len; ++i) out.push_back(alphabet[uniform_index(rng, alphabet.size())]);
  return out;
}

std::u32string place(const SeedTriple& s, const std::u32string& alphabet, Rng& rng) {
  std::u32string words[3];
  switch (uniform_index(rng, 3)) {
    case 0:  // fusion first
      words[0] = s.fusion, words[1] = s.first, words[2] = s.second;
      break;
    case 1:  // fusion last
      words[0] = s.first, words[1] = s.second, words[2] = s.fusion;
      break;
    default:
      words[0] = s.first, words[1] = s.fusion, words[2] = s.second;
      break;
  }
  std::u32string out = filler(alphabet, rng, 0, 3);
  for (const auto& w : words) out += w + filler(alphabet, rng, 1, 5);
  return out;
}

}  // namespace

std::vector<RawParagraph> templated_paragraphs(const std::vector<SeedTriple>& seeds, std::size_t per_seed,
                                               Rng& rng, std::size_t two_seed_every) {
  const std::u32string alphabet = filler_alphabet(seeds);
  std::vector<RawParagraph> out;
  std::size_t counter = 0;
  for (std::size_t k = 0; k < per_seed; ++k) {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      std::u32string text = place(seeds[i], alphabet, rng);
      if (two_seed_every != 0 && ++counter % two_seed_every == 0) {
        text += place(seeds[(i + 1) % seeds.size()], alphabet, rng);
      }
      out.push_back({"s" + std::to_string(i) + "-" + std::to_string(k), std::move(text)});
    }
  }
  return out;
}

std::vector<Instance> overfit_corpus(std::size_t per_seed, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<SeedTriple> seeds = fusion_seeds();
  return build_pseudo_corpus(seeds, templated_paragraphs(seeds, per_seed, rng));
}

std::string data_path(const std::string& name) { return std::string(LEXFUSION_DATA_DIR) + "/" + name; }

}  // namespace lexfusion::testdata

namespace lexfusion::testdata {
namespace {

constexpr std::size_t kConcepts = 8;
constexpr std::size_t kWordsPerConcept = 3;
constexpr std::size_t kTrainFusionChars = 3;
constexpr std::size_t kTestFusionChars = 2;

struct Concept {
  std::vector<std::u32string> words;
  std::u32string train_chars;
  std::u32string test_chars;
};

}  // namespace

SememeTask make_sememe_task(std::uint64_t seed, std::size_t train_size, std::size_t test_size) {
  // Disjoint character blocks drawn from the CJK range.
  char32_t next = 0x5000;
  auto take = [&next]() { return next++; };
  const char32_t fusion_cue = take();
  const char32_t separation_cue = take();
  std::u32string filler;
  for (int i = 0; i < 16; ++i) filler.push_back(take());
  std::vector<Concept> concepts(kConcepts);
  for (Concept& c : concepts) {
    for (std::size_t w = 0; w < kWordsPerConcept; ++w) c.words.push_back({take(), take()});
    for (std::size_t k = 0; k < kTrainFusionChars; ++k) c.train_chars.push_back(take());
    for (std::size_t k = 0; k < kTestFusionChars; ++k) c.test_chars.push_back(take());
  }

  nlohmann::json lex;
  lex["sememes"] = nlohmann::json::array({"act", "thing"});
  for (std::size_t k = 0; k < kConcepts; ++k) lex["sememes"].push_back("concept" + std::to_string(k));
  lex["words"] = nlohmann::json::object();
  auto add_char = [&lex](char32_t c, std::size_t concept_id, const char* role) {
    lex["words"][utf8_encode(c)] = nlohmann::json::array(
        {{{"sememes", {"concept" + std::to_string(concept_id), role}}, {"edges", {{0, 1}}}}});
  };
  for (std::size_t k = 0; k < kConcepts; ++k) {
    for (const auto& w : concepts[k].words) {
      for (char32_t c : w) add_char(c, k, "thing");
    }
    for (char32_t c : concepts[k].train_chars + concepts[k].test_chars) add_char(c, k, "act");
  }

  Rng rng(seed);
  auto pad = [&](std::u32string& text, std::size_t lo, std::size_t hi) {
    const std::size_t len = lo + uniform_index(rng, hi - lo + 1);
    for (std::size_t i = 0; i < len; ++i) text.push_back(filler[uniform_index(rng, filler.size())]);
  };
  auto make = [&](const std::string& id, bool held_out) {
    const std::size_t a = uniform_index(rng, kConcepts);
    std::size_t b = uniform_index(rng, kConcepts - 1);
    if (b >= a) ++b;
    const std::u32string& pool_a = held_out ? concepts[a].test_chars : concepts[a].train_chars;
    const std::u32string& pool_b = held_out ? concepts[b].test_chars : concepts[b].train_chars;
    const std::u32string fusion{pool_a[uniform_index(rng, pool_a.size())], pool_b[uniform_index(rng, pool_b.size())]};
    const std::u32string word_a = concepts[a].words[uniform_index(rng, kWordsPerConcept)];
    const std::u32string word_b = concepts[b].words[uniform_index(rng, kWordsPerConcept)];
    const bool swap_words = uniform_index(rng, 2) == 1;
    const bool fusion_last = uniform_index(rng, 2) == 1;

    std::u32string text;
    std::vector<Mention> mentions;
    Span fusion_span, span_a, span_b;
    auto put = [&](const std::u32string& word, char32_t cue, MentionType type) {
      pad(text, 1, 4);
      text.push_back(cue);
      const Span span{text.size(), text.size() + word.size() - 1};
      text += word;
      mentions.push_back({span, type});
      return span;
    };
    auto put_separations = [&] {
      if (swap_words) {
        span_b = put(word_b, separation_cue, MentionType::kSeparation);
        span_a = put(word_a, separation_cue, MentionType::kSeparation);
      } else {
        span_a = put(word_a, separation_cue, MentionType::kSeparation);
        span_b = put(word_b, separation_cue, MentionType::kSeparation);
      }
    };
    if (fusion_last) {
      put_separations();
      fusion_span = put(fusion, fusion_cue, MentionType::kFusion);
    } else {
      fusion_span = put(fusion, fusion_cue, MentionType::kFusion);
      put_separations();
    }
    pad(text, 1, 4);
    return make_instance(id, text, mentions, {Triple{fusion_span, span_a, span_b}});
  };

  SememeTask task;
  task.lexicon_json = lex.dump();
  std::u32string known{fusion_cue, separation_cue};
  known += filler;
  for (const Concept& c : concepts) {
    for (const auto& w : c.words) known += w;
  }
  task.vocab = CharVocab::from_chars(known);
  for (std::size_t i = 0; i < train_size; ++i) task.train.push_back(make("train-" + std::to_string(i), false));
  for (std::size_t i = 0; i < test_size; ++i) task.test.push_back(make("test-" + std::to_string(i), true));
  return task;
}

}  // namespace lexfusion::testdata
