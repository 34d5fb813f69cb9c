#include "lexfusion/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lexfusion/checkpoint.hpp"
#include "lexfusion/metrics.hpp"
#include "lexfusion/ops.hpp"
#include "lexfusion/optim.hpp"
#include "lexfusion/unicode.hpp"

namespace lexfusion {
namespace {

using nlohmann::ordered_json;

constexpr std::size_t kTagEmbeddingDim = 25;

template <typename Enum>
struct EnumName {
  Enum value;
  const char* name;
};

constexpr EnumName<EncoderMode> kEncoderModes[] = {{EncoderMode::kToy, "toy"}, {EncoderMode::kExternal, "external"}};
constexpr EnumName<SememeMode> kSememeModes[] = {
    {SememeMode::kOff, "off"}, {SememeMode::kChar, "char"}, {SememeMode::kWord, "word"}};
constexpr EnumName<GraphMode> kGraphModes[] = {{GraphMode::kReal, "real"}, {GraphMode::kPseudo, "pseudo"}};
constexpr EnumName<coref::LossForm> kLossForms[] = {{coref::LossForm::kCrossEntropy, "cross_entropy"},
                                                    {coref::LossForm::kLiteral, "literal"}};

template <typename Enum, std::size_t N>
const char* enum_name(const EnumName<Enum> (&table)[N], Enum value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  return "?";
}

template <typename Enum, std::size_t N>
Enum enum_value(const EnumName<Enum> (&table)[N], const std::string& key, const std::string& name) {
  std::string allowed;
  for (const auto& e : table) {
    if (name == e.name) return e.value;
    allowed += allowed.empty() ? e.name : std::string(", ") + e.name;
  }
  throw ConfigError("config key '" + key + "': '" + name + "' is not one of " + allowed);
}

ordered_json config_json(const TrainConfig& c) {
  ordered_json j;
  j["alpha"] = c.alpha;
  j["lr"] = c.lr;
  j["dropout"] = c.dropout;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["encoder_mode"] = enum_name(kEncoderModes, c.encoder_mode);
  j["sememe_mode"] = enum_name(kSememeModes, c.sememe_mode);
  j["graph_mode"] = enum_name(kGraphModes, c.graph_mode);
  j["d_emb"] = c.d_emb;
  j["d_h"] = c.d_h;
  j["threshold"] = c.threshold;
  j["max_len"] = c.max_len;
  j["max_word_len"] = c.max_word_len;
  j["sememe_dim"] = c.sememe_dim;
  j["gat_head_dim"] = c.gat_head_dim;
  j["sememe_concat"] = c.sememe_concat;
  j["transition_mask"] = c.transition_mask;
  j["train_with_predicted_tags"] = c.train_with_predicted_tags;
  j["pipeline"] = c.pipeline;
  j["positive_weight"] = c.positive_weight;
  j["coref_loss"] = enum_name(kLossForms, c.coref_loss);
  j["batch_size"] = c.batch_size;
  return j;
}

TrainConfig config_from_json(const ordered_json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "encoder_mode") c.encoder_mode = enum_value(kEncoderModes, key, value.get<std::string>());
      else if (key == "sememe_mode") c.sememe_mode = enum_value(kSememeModes, key, value.get<std::string>());
      else if (key == "graph_mode") c.graph_mode = enum_value(kGraphModes, key, value.get<std::string>());
      else if (key == "d_emb") c.d_emb = value.get<std::size_t>();
      else if (key == "d_h") c.d_h = value.get<std::size_t>();
      else if (key == "threshold") c.threshold = value.get<double>();
      else if (key == "max_len") c.max_len = value.get<std::size_t>();
      else if (key == "max_word_len") c.max_word_len = value.get<std::size_t>();
      else if (key == "sememe_dim") c.sememe_dim = value.get<std::size_t>();
      else if (key == "gat_head_dim") c.gat_head_dim = value.get<std::size_t>();
      else if (key == "sememe_concat") c.sememe_concat = value.get<bool>();
      else if (key == "transition_mask") c.transition_mask = value.get<bool>();
      else if (key == "train_with_predicted_tags") c.train_with_predicted_tags = value.get<bool>();
      else if (key == "pipeline") c.pipeline = value.get<bool>();
      else if (key == "positive_weight") c.positive_weight = value.get<double>();
      else if (key == "coref_loss") c.coref_loss = enum_value(kLossForms, key, value.get<std::string>());
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  validate_config(c);
  return c;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace

void validate_config(const TrainConfig& c) {
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
  };
  require(std::isfinite(c.alpha) && c.alpha > 0.0, "alpha must be > 0");
  require(c.lr > 0.0 && c.lr < 1.0, "lr must be in (0, 1)");
  require(c.dropout >= 0.0 && c.dropout < 1.0, "dropout must be in [0, 1)");
  require(c.epochs >= 1, "epochs must be >= 1");
  require(c.d_emb >= 1 && c.d_h >= 1, "d_emb and d_h must be >= 1");
  require(c.threshold >= 0.0 && c.threshold <= 1.0, "threshold must be in [0, 1]");
  require(c.max_len >= 1, "max_len must be >= 1");
  require(c.max_word_len >= 1, "max_word_len must be >= 1");
  require(c.sememe_dim >= 1 && c.gat_head_dim >= 1, "sememe_dim and gat_head_dim must be >= 1");
  require(std::isfinite(c.positive_weight) && c.positive_weight > 0.0, "positive_weight must be > 0");
  require(c.batch_size >= 1, "batch_size must be >= 1");
}

TrainConfig parse_config(std::string_view json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

TrainConfig load_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }

std::string serialize_config(const TrainConfig& config) { return config_json(config).dump(2) + "\n"; }

EncoderStack::EncoderStack(const TrainConfig& config, std::size_t vocab_size, std::size_t sememe_vocab,
                           std::size_t external_dim, Rng& rng, const std::string& prefix)
    : d_h_(config.d_h) {
  if (config.encoder_mode == EncoderMode::kToy) {
    toy_.emplace(vocab_size, ToyEncoderConfig{config.d_emb, config.d_h, config.max_len}, rng,
                 join(prefix, "encoder"));
  } else {
    if (external_dim == 0) throw ConfigError("external encoder mode needs an embedding file");
    external_weight_ = Parameter(join(prefix, "external.weight"), glorot(external_dim, config.d_h, rng));
    external_bias_ = Parameter(join(prefix, "external.bias"), Tensor({config.d_h}));
  }
  if (config.sememe_mode != SememeMode::kOff) {
    SememeEncoderConfig sc;
    sc.sememe_dim = config.sememe_dim;
    sc.head_dim = config.gat_head_dim;
    sc.input_dim = config.d_h;
    sc.output_dim = config.d_h;
    sc.max_word_len = config.max_word_len;
    sc.mode = config.sememe_mode;
    sc.graph = config.graph_mode;
    sc.concat_base = config.sememe_concat;
    sememe_.emplace(sememe_vocab, sc, rng, join(prefix, "sememe"));
  }
}

Var EncoderStack::encode(Tape& tape, std::span<const std::size_t> char_ids, std::u32string_view text,
                         const Tensor* external, const SememeLexicon* lexicon) {
  Var h;
  if (toy_) {
    h = toy_->encode(tape, char_ids);
  } else {
    if (external == nullptr) throw EncoderError("external encoder mode: no features for this paragraph");
    if (external->rows() != text.size()) {
      throw EncoderError("external features have " + std::to_string(external->rows()) + " rows for " +
                         std::to_string(text.size()) + " characters");
    }
    Var x = tape.constant(*external);
    h = ops::tanh(ops::add(ops::matmul(x, tape.param(external_weight_)), tape.param(external_bias_)));
  }
  if (sememe_) {
    if (lexicon == nullptr) throw ConfigError("sememe encoder enabled but no lexicon loaded");
    h = sememe_->enhance(tape, text, h, *lexicon);
  }
  return h;
}

std::size_t EncoderStack::output_width() const { return sememe_ ? sememe_->output_width() : d_h_; }

std::vector<Parameter*> EncoderStack::parameters() {
  std::vector<Parameter*> out;
  if (toy_) {
    out = toy_->parameters();
  } else {
    out = {&external_weight_, &external_bias_};
  }
  if (sememe_) {
    for (Parameter* p : sememe_->parameters()) out.push_back(p);
  }
  return out;
}

Model::Model(TrainConfig config, CharVocab vocab, std::shared_ptr<const SememeLexicon> lexicon,
             std::size_t external_dim)
    : config_(std::move(config)),
      vocab_(std::move(vocab)),
      lexicon_(std::move(lexicon)),
      external_dim_(config_.encoder_mode == EncoderMode::kExternal ? external_dim : 0) {
  validate_config(config_);
  if (config_.sememe_mode != SememeMode::kOff && !lexicon_) {
    throw ConfigError("sememe_mode '" + std::string(enum_name(kSememeModes, config_.sememe_mode)) +
                      "' needs a lexicon");
  }
  const std::size_t sememes = lexicon_ ? lexicon_->sememe_count() : 0;
  Rng rng(config_.seed);
  if (config_.pipeline) {
    tagger_stack_ = std::make_unique<EncoderStack>(config_, vocab_.size(), sememes, external_dim_, rng, "tagger");
    scorer_stack_ = std::make_unique<EncoderStack>(config_, vocab_.size(), sememes, external_dim_, rng, "scorer");
  } else {
    tagger_stack_ = std::make_unique<EncoderStack>(config_, vocab_.size(), sememes, external_dim_, rng, "");
  }
  crf = crf::CrfParams(tagger_stack_->output_width(), rng);
  const EncoderStack& scorer = scorer_stack_ ? *scorer_stack_ : *tagger_stack_;
  coref = coref::CorefParams(scorer.output_width(), kTagEmbeddingDim, rng);
}

void Model::set_embeddings(std::shared_ptr<const EmbeddingFile> embeddings) {
  if (embeddings && config_.encoder_mode == EncoderMode::kExternal && embeddings->dim() != external_dim_) {
    throw EncoderError("embedding file has dim " + std::to_string(embeddings->dim()) + ", model expects " +
                       std::to_string(external_dim_));
  }
  embeddings_ = std::move(embeddings);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = tagger_stack_->parameters();
  if (scorer_stack_) {
    for (Parameter* p : scorer_stack_->parameters()) out.push_back(p);
  }
  for (Parameter* p : crf.parameters()) out.push_back(p);
  for (Parameter* p : coref.parameters()) out.push_back(p);
  return out;
}

Model::Encoded Model::encode(Tape& tape, std::string_view id, std::u32string_view text, bool train, Rng& rng) {
  const std::vector<std::size_t> ids = vocab_.ids(text);
  const Tensor* external = nullptr;
  if (config_.encoder_mode == EncoderMode::kExternal) {
    if (!embeddings_) throw EncoderError("external encoder mode: no embedding file loaded");
    external = &embeddings_->get(id, text.size());
  }
  Encoded out;
  out.tagger = ops::dropout(tagger_stack_->encode(tape, ids, text, external, lexicon_.get()), config_.dropout,
                            train, rng);
  out.scorer = scorer_stack_ ? ops::dropout(scorer_stack_->encode(tape, ids, text, external, lexicon_.get()),
                                            config_.dropout, train, rng)
                             : out.tagger;
  return out;
}

Var Model::transitions(Tape& tape) {
  Var t = tape.param(crf.transitions);
  if (config_.transition_mask) t = ops::add(t, tape.constant(crf::transition_mask()));
  return t;
}

double joint_loss(double mention_loss, double coref_loss, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("joint_loss: alpha must be > 0");
  return mention_loss + alpha * coref_loss;
}

Var joint_loss(Var mention_loss, Var coref_loss, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("joint_loss: alpha must be > 0");
  return ops::add(mention_loss, ops::scale(coref_loss, alpha));
}

InstanceLoss instance_loss(Model& model, Tape& tape, const Instance& instance, bool train, Rng& rng) {
  const std::size_t n = instance.text.size();
  const Model::Encoded enc = model.encode(tape, instance.id, instance.text, train, rng);
  Var emissions = crf::emissions(tape, enc.tagger, model.crf);
  Var transitions = model.transitions(tape);
  const std::vector<std::size_t> gold = crf::encode_tags(n, instance.mentions);
  InstanceLoss out;
  out.mention = crf::mention_loss(emissions, transitions, gold);
  std::vector<std::size_t> tags = gold;
  if (train && model.config().train_with_predicted_tags) tags = crf::viterbi(emissions.value(), transitions.value());
  Var fused = coref::fuse(tape, enc.scorer, tags, model.coref);
  const coref::PairScores scores = coref::pair_scores(tape, fused, model.coref);
  const Tensor labels = coref::build_pair_labels(n, instance.mentions, instance.links);
  out.coref = coref::pair_loss(scores, labels, model.config().positive_weight, model.config().coref_loss);
  out.total = joint_loss(out.mention, out.coref, model.config().alpha);
  return out;
}

Model create_model(const TrainConfig& config, const std::vector<Instance>& corpus,
                   std::shared_ptr<const SememeLexicon> lexicon, std::shared_ptr<const EmbeddingFile> embeddings) {
  std::vector<std::u32string> texts;
  texts.reserve(corpus.size());
  for (const Instance& inst : corpus) texts.push_back(inst.text);
  const std::size_t external_dim = embeddings ? embeddings->dim() : 0;
  Model model(config, CharVocab::build(texts), std::move(lexicon), external_dim);
  model.set_embeddings(std::move(embeddings));
  return model;
}

std::vector<EpochReport> train(Model& model, const std::vector<Instance>& corpus, const TrainOptions& options) {
  if (corpus.empty()) throw TrainingError("training corpus is empty");
  const TrainConfig& config = model.config();
  Rng rng(config.seed + 1);
  std::vector<Parameter*> params = model.parameters();
  Adam adam(params, AdamConfig{config.lr});
  adam.zero_grad();
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochReport> reports;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    EpochReport report;
    report.epoch = epoch;
    std::size_t in_batch = 0;
    auto flush = [&] {
      if (in_batch == 0) return;
      if (in_batch > 1) {
        for (Parameter* p : params) {
          for (double& g : p->grad.values()) g /= static_cast<double>(in_batch);
        }
      }
      adam.step();
      in_batch = 0;
    };
    for (std::size_t k : order) {
      const Instance& inst = corpus[k];
      try {
        Tape tape;
        const InstanceLoss loss = instance_loss(model, tape, inst, true, rng);
        tape.backward(loss.total);
        report.loss += loss.total.value().item();
        report.mention_loss += loss.mention.value().item();
        report.coref_loss += loss.coref.value().item();
      } catch (const NumericError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", instance '" + inst.id +
                            "': non-finite value (" + e.what() + "); try a lower lr");
      }
      for (Parameter* p : params) {
        if (!p->grad.all_finite()) {
          throw TrainingError("epoch " + std::to_string(epoch) + ", instance '" + inst.id +
                              "': non-finite gradient in " + p->name);
        }
      }
      if (++in_batch == config.batch_size) flush();
    }
    flush();
    const double count = static_cast<double>(corpus.size());
    report.loss /= count;
    report.mention_loss /= count;
    report.coref_loss /= count;
    if (options.dev != nullptr && !options.dev->empty()) {
      std::vector<Instance> predicted;
      predicted.reserve(options.dev->size());
      for (const Instance& inst : *options.dev) {
        predicted.push_back(prediction_instance(inst.id, inst.text, predict(model, inst.id, inst.text)));
      }
      report.dev_triple_f = evaluate(predicted, *options.dev).triples.f1();
    }
    reports.push_back(report);
    if (options.on_epoch && !options.on_epoch(report)) break;
  }
  return reports;
}

Prediction predict(Model& model, std::string_view id, std::u32string_view text,
                   std::optional<std::span<const std::size_t>> forced_tags) {
  Prediction out;
  const std::size_t n = text.size();
  if (n == 0) return out;
  Rng unused(0);
  Tape tape;
  const Model::Encoded enc = model.encode(tape, id, text, false, unused);
  Var emissions = crf::emissions(tape, enc.tagger, model.crf);
  Var transitions = model.transitions(tape);
  if (forced_tags) {
    if (forced_tags->size() != n) {
      throw std::invalid_argument("predict: " + std::to_string(forced_tags->size()) + " forced tags for " +
                                  std::to_string(n) + " characters");
    }
    out.tags.assign(forced_tags->begin(), forced_tags->end());
  } else {
    out.tags = crf::viterbi(emissions.value(), transitions.value());
  }
  out.mentions = crf::decode_mentions(out.tags);
  Var fused = coref::fuse(tape, enc.scorer, out.tags, model.coref);
  out.pair_probs = coref::pair_probabilities(coref::pair_scores(tape, fused, model.coref));
  out.triples = assemble_triples(out.mentions, out.pair_probs, model.config().threshold);
  return out;
}

Instance prediction_instance(std::string id, std::u32string text, const Prediction& prediction) {
  return make_instance(std::move(id), std::move(text), prediction.mentions, prediction.triples);
}

std::vector<Triple> assemble_triples(std::span<const Mention> mentions, const Tensor& pair_probs,
                                     double threshold) {
  const std::size_t n = pair_probs.rank() == 2 ? pair_probs.rows() : 0;
  std::vector<std::size_t> separations;
  for (std::size_t m = 0; m < mentions.size(); ++m) {
    if (mentions[m].type == MentionType::kSeparation) separations.push_back(m);
  }
  std::vector<Triple> out;
  for (const Mention& fusion : mentions) {
    if (fusion.type != MentionType::kFusion || fusion.span.length() != 2 || fusion.span.end >= n) continue;
    struct Candidate {
      double score;
      std::size_t character;
      std::size_t rank;  // position in `separations`
    };
    std::vector<Candidate> candidates;
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t c = fusion.span.start + k;
      for (std::size_t r = 0; r < separations.size(); ++r) {
        const Span& s = mentions[separations[r]].span;
        if (s.end >= n) continue;
        double total = 0.0;
        for (std::size_t p = s.start; p <= s.end; ++p) total += 0.5 * (pair_probs.at(c, p) + pair_probs.at(p, c));
        candidates.push_back({total / static_cast<double>(s.length()), k, r});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::optional<Candidate> chosen[2];
    for (const Candidate& cand : candidates) {
      if (chosen[cand.character]) continue;
      const std::size_t other = 1 - cand.character;
      if (chosen[other] && chosen[other]->rank == cand.rank) continue;
      chosen[cand.character] = cand;
    }
    if (!chosen[0] || !chosen[1]) continue;
    if (!(chosen[0]->score > threshold) || !(chosen[1]->score > threshold)) continue;
    out.push_back(Triple{fusion.span, mentions[separations[chosen[0]->rank]].span,
                         mentions[separations[chosen[1]->rank]].span});
  }
  return out;
}

void save_model(const std::filesystem::path& dir, Model& model,
                const std::optional<std::filesystem::path>& lexicon_source) {
  std::filesystem::create_directories(dir);
  const std::vector<Parameter*> params = model.parameters();
  const std::vector<const Parameter*> view(params.begin(), params.end());
  save_checkpoint(dir / "model.ckpt", view);
  ordered_json meta;
  meta["format"] = "lexfusion-model-1";
  meta["config"] = config_json(model.config());
  meta["vocab"] = utf8_encode(model.vocab().chars());
  meta["external_dim"] = model.external_dim();
  std::ofstream out(dir / "model.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "model.json").string());
  out << meta.dump(2) << "\n";
  if (model.config().sememe_mode != SememeMode::kOff) {
    if (!lexicon_source) throw ConfigError("save_model: sememe model needs the lexicon file to copy");
    const std::filesystem::path target = dir / "lexicon.json";
    if (!std::filesystem::exists(target) || !std::filesystem::equivalent(*lexicon_source, target)) {
      std::filesystem::copy_file(*lexicon_source, target, std::filesystem::copy_options::overwrite_existing);
    }
  }
}

Model load_model(const std::filesystem::path& dir) {
  ordered_json meta;
  try {
    meta = ordered_json::parse(read_text(dir / "model.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error((dir / "model.json").string() + ": " + e.what());
  }
  if (meta.value("format", "") != "lexfusion-model-1") {
    throw std::runtime_error((dir / "model.json").string() + ": not a lexfusion model description");
  }
  const TrainConfig config = config_from_json(meta.at("config"));
  std::shared_ptr<const SememeLexicon> lexicon;
  if (config.sememe_mode != SememeMode::kOff) {
    lexicon = std::make_shared<const SememeLexicon>(load_lexicon(dir / "lexicon.json"));
  }
  Model model(config, CharVocab::from_chars(utf8_decode(meta.at("vocab").get<std::string>())), std::move(lexicon),
              meta.at("external_dim").get<std::size_t>());
  const std::vector<Parameter*> params = model.parameters();
  restore_checkpoint(dir / "model.ckpt", params);
  return model;
}

}  // namespace lexfusion
