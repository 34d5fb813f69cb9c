#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "synthetic.hpp"
#include "lexfusion/metrics.hpp"
#include "lexfusion/pipeline.hpp"
#include "lexfusion/unicode.hpp"

using namespace lexfusion;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config(std::size_t epochs = 3) {
  TrainConfig c;
  c.d_emb = 16;
  c.d_h = 16;
  c.epochs = epochs;
  c.lr = 0.01;
  c.dropout = 0.0;
  c.sememe_dim = 8;
  c.gat_head_dim = 4;
  return c;
}

// Symmetric probabilities: fusion [0,1], separation mentions A [3,4], B [6,7].
Tensor probs(double c0_a, double c0_b, double c1_a, double c1_b) {
  Tensor p({8, 8});
  auto set = [&p](std::size_t c, std::size_t start, double v) {
    for (std::size_t k = start; k < start + 2; ++k) p.at(c, k) = p.at(k, c) = v;
  };
  set(0, 3, c0_a);
  set(0, 6, c0_b);
  set(1, 3, c1_a);
  set(1, 6, c1_b);
  return p;
}

const std::vector<Mention> kMentions{{{0, 1}, MentionType::kFusion},
                                     {{3, 4}, MentionType::kSeparation},
                                     {{6, 7}, MentionType::kSeparation}};

std::vector<double> flat_parameters(Model& m) {
  std::vector<double> out;
  for (Parameter* p : m.parameters()) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  return out;
}

}  // namespace

TEST_CASE("config parsing and validation") {
  const TrainConfig d;
  CHECK(d.alpha == 1.0);
  CHECK(d.lr == 0.001);
  CHECK(d.dropout == 0.2);
  CHECK(d.epochs == 30);
  CHECK(d.threshold == 0.5);
  CHECK(d.sememe_mode == SememeMode::kOff);

  const TrainConfig c = parse_config(R"({"alpha": 0.5, "sememe_mode": "word", "graph_mode": "pseudo",
                                         "encoder_mode": "external", "coref_loss": "literal", "epochs": 7})");
  CHECK(c.alpha == 0.5);
  CHECK(c.sememe_mode == SememeMode::kWord);
  CHECK(c.graph_mode == GraphMode::kPseudo);
  CHECK(c.encoder_mode == EncoderMode::kExternal);
  CHECK(c.coref_loss == coref::LossForm::kLiteral);
  CHECK(c.epochs == 7);
  CHECK(c.lr == 0.001);
  CHECK(serialize_config(parse_config(serialize_config(c))) == serialize_config(c));

  CHECK_THROWS_AS(parse_config(R"({"alpah": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"sememe_mode": "sentence"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"epochs": "ten"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dropout": 1.0})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"alpha": 0})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"threshold": 1.5})"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(parse_config("{oops"), ConfigError);
  CHECK_NOTHROW(parse_config(R"({"dropout": 0.0})"));
}

TEST_CASE("joint loss") {
  CHECK(joint_loss(2.0, 3.0, 1.0) == 5.0);
  CHECK(joint_loss(2.0, 3.0, 0.5) == 3.5);
  CHECK_THROWS_AS(joint_loss(2.0, 3.0, 0.0), ConfigError);
  CHECK_THROWS_AS(joint_loss(2.0, 3.0, -1.0), ConfigError);
  Tape tape;
  const Var v = joint_loss(tape.constant(Tensor::scalar(2.0)), tape.constant(Tensor::scalar(3.0)), 2.0);
  CHECK(v.value()[0] == 8.0);
}

TEST_CASE("triple assembly") {
  SUBCASE("each character takes its best mention") {
    const auto t = assemble_triples(kMentions, probs(0.9, 0.1, 0.2, 0.8));
    CHECK(t == std::vector<Triple>{{{0, 1}, {3, 4}, {6, 7}}});
    const auto swapped = assemble_triples(kMentions, probs(0.1, 0.9, 0.8, 0.2));
    CHECK(swapped == std::vector<Triple>{{{0, 1}, {6, 7}, {3, 4}}});
  }
  SUBCASE("the two characters need distinct mentions") {
    // both prefer A; the stronger (char 0) keeps it, char 1 falls back to B
    CHECK(assemble_triples(kMentions, probs(0.9, 0.1, 0.85, 0.6)) == std::vector<Triple>{{{0, 1}, {3, 4}, {6, 7}}});
    const std::vector<Mention> one_sep{kMentions[0], kMentions[1]};
    CHECK(assemble_triples(one_sep, probs(0.9, 0.1, 0.85, 0.6)).empty());
  }
  SUBCASE("both characters must clear the threshold") {
    CHECK(assemble_triples(kMentions, probs(0.9, 0.1, 0.2, 0.4)).empty());
    CHECK(assemble_triples(kMentions, probs(0.9, 0.1, 0.2, 0.5)).empty());  // strictly above
    CHECK(assemble_triples(kMentions, probs(0.9, 0.1, 0.2, 0.4), 0.3).size() == 1);
  }
  SUBCASE("score is the mean over the mention's characters") {
    Tensor p = probs(0.9, 0.1, 0.2, 0.8);
    p.at(1, 7) = p.at(7, 1) = 0.1;  // (0.8 + 0.1) / 2 = 0.45
    CHECK(assemble_triples(kMentions, p).empty());
    p.at(1, 6) = 0.9;  // one direction only: ((0.9 + 0.8) / 2 + 0.1) / 2 = 0.475
    CHECK(assemble_triples(kMentions, p).empty());
  }
  SUBCASE("ties go to the earlier mention") {
    const std::vector<Mention> three{kMentions[0], kMentions[1], kMentions[2], {{9, 10}, MentionType::kSeparation}};
    Tensor p({11, 11});
    for (std::size_t k : {3, 4, 6, 7, 9, 10}) {
      p.at(0, k) = p.at(k, 0) = 0.7;
      p.at(1, k) = p.at(k, 1) = 0.7;
    }
    CHECK(assemble_triples(three, p) == std::vector<Triple>{{{0, 1}, {3, 4}, {6, 7}}});
  }
  SUBCASE("fusion mentions of other lengths are skipped") {
    const std::vector<Mention> odd{{{0, 2}, MentionType::kFusion}, kMentions[1], kMentions[2]};
    CHECK(assemble_triples(odd, probs(0.9, 0.1, 0.2, 0.8)).empty());
  }
}

TEST_CASE("training reduces the loss and is deterministic") {
  const auto corpus = testdata::overfit_corpus(1, 3);
  Model a = create_model(small_config(10), corpus, nullptr);
  const auto reports = train(a, corpus);
  REQUIRE(reports.size() == 10);
  CHECK(reports.back().loss < reports.front().loss);
  for (const EpochReport& r : reports) {
    CHECK(r.loss == doctest::Approx(r.mention_loss + r.coref_loss).epsilon(1e-9));
    CHECK_FALSE(r.dev_triple_f.has_value());
  }

  Model b = create_model(small_config(10), corpus, nullptr);
  train(b, corpus);
  CHECK(flat_parameters(a) == flat_parameters(b));

  TrainConfig other = small_config(10);
  other.seed = 2;
  Model c = create_model(other, corpus, nullptr);
  train(c, corpus);
  CHECK(flat_parameters(a) != flat_parameters(c));
}

TEST_CASE("training options") {
  const auto corpus = testdata::overfit_corpus(1, 4);
  Model m = create_model(small_config(5), corpus, nullptr);
  TrainOptions options;
  options.dev = &corpus;
  std::size_t calls = 0;
  options.on_epoch = [&calls](const EpochReport& r) {
    ++calls;
    CHECK(r.dev_triple_f.has_value());
    return r.epoch < 2;
  };
  CHECK(train(m, corpus, options).size() == 2);
  CHECK(calls == 2);
  CHECK_THROWS_AS(train(m, std::vector<Instance>{}), TrainingError);
}

TEST_CASE("prediction") {
  const auto corpus = testdata::overfit_corpus(1, 5);
  Model m = create_model(small_config(2), corpus, nullptr);
  train(m, corpus);
  const Instance& inst = corpus.front();

  const Prediction p = predict(m, inst.id, inst.text);
  CHECK(p.tags.size() == inst.text.size());
  CHECK(p.pair_probs.shape() == Shape{inst.text.size(), inst.text.size()});
  CHECK(p.mentions == crf::decode_mentions(p.tags));
  const Instance as_instance = prediction_instance(inst.id, inst.text, p);
  CHECK_NOTHROW(validate_instance(as_instance, Validation::kPrediction));

  // forced gold tags fix the mentions
  const auto gold_tags = crf::encode_tags(inst.text.size(), inst.mentions);
  const Prediction forced = predict(m, inst.id, inst.text, std::span<const std::size_t>(gold_tags));
  CHECK(forced.tags == gold_tags);
  CHECK(forced.mentions == inst.mentions);
  CHECK_THROWS(predict(m, inst.id, inst.text, std::span<const std::size_t>(gold_tags.data(), 1)));

  const Prediction empty = predict(m, "e", U"");
  CHECK(empty.tags.empty());
  CHECK(empty.triples.empty());

  // prediction does not use dropout: two calls agree exactly
  CHECK(predict(m, inst.id, inst.text).pair_probs == p.pair_probs);
}

TEST_CASE("save and load") {
  const auto corpus = testdata::overfit_corpus(1, 6);
  Model m = create_model(small_config(2), corpus, nullptr);
  train(m, corpus);
  const fs::path dir = fs::temp_directory_path() / "lexfusion_model_roundtrip";
  fs::remove_all(dir);
  save_model(dir, m);
  CHECK(fs::exists(dir / "model.ckpt"));
  CHECK(fs::exists(dir / "model.json"));
  Model back = load_model(dir);
  CHECK(flat_parameters(back) == flat_parameters(m));
  CHECK(serialize_config(back.config()) == serialize_config(m.config()));
  for (const Instance& inst : corpus) {
    const Prediction a = predict(m, inst.id, inst.text);
    const Prediction b = predict(back, inst.id, inst.text);
    CHECK(a.tags == b.tags);
    CHECK(a.pair_probs == b.pair_probs);
  }
  fs::remove_all(dir);
  CHECK_THROWS(load_model(dir));
}

TEST_CASE("variants train without errors") {
  const auto corpus = testdata::overfit_corpus(1, 7);
  auto lexicon = std::make_shared<const SememeLexicon>(load_lexicon(testdata::data_path("lexicon_mini.json")));

  SUBCASE("sememe word mode, pseudo graphs, concat") {
    TrainConfig c = small_config(1);
    c.sememe_mode = SememeMode::kWord;
    c.graph_mode = GraphMode::kPseudo;
    c.sememe_concat = true;
    Model m = create_model(c, corpus, lexicon);
    CHECK(std::isfinite(train(m, corpus).back().loss));
    CHECK_THROWS_AS(create_model(c, corpus, nullptr), ConfigError);
  }
  SUBCASE("pipeline mode, mask, predicted tags, literal loss, batches") {
    TrainConfig c = small_config(2);
    c.pipeline = true;
    c.transition_mask = true;
    c.train_with_predicted_tags = true;
    c.coref_loss = coref::LossForm::kLiteral;
    c.batch_size = 4;
    c.positive_weight = 5.0;
    Model m = create_model(c, corpus, nullptr);
    CHECK(std::isfinite(train(m, corpus).back().loss));
  }
  SUBCASE("external features") {
    std::vector<EmbeddingRecord> records;
    Rng rng(1);
    for (const Instance& inst : corpus) records.push_back({inst.id, uniform_tensor({inst.text.size(), 6}, -1, 1, rng)});
    const fs::path path = fs::temp_directory_path() / "lexfusion_pipeline_features.bin";
    write_embedding_file(path, 6, records);
    auto features = std::make_shared<const EmbeddingFile>(EmbeddingFile::read(path));
    TrainConfig c = small_config(1);
    c.encoder_mode = EncoderMode::kExternal;
    Model m = create_model(c, corpus, nullptr, features);
    CHECK(m.external_dim() == 6);
    CHECK(std::isfinite(train(m, corpus).back().loss));
    CHECK(predict(m, corpus[0].id, corpus[0].text).tags.size() == corpus[0].text.size());
    CHECK_THROWS(predict(m, "not-in-file", U"abc"));
    CHECK_THROWS(create_model(c, corpus, nullptr));
    fs::remove(path);
  }
}
