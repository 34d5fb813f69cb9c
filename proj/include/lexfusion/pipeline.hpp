#pragma once

// Joint model: base encoder (+ optional sememe encoder) feeding a CRF mention
// tagger and a biaffine character-pair scorer; training, prediction and
// model persistence.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lexfusion/coref.hpp"
#include "lexfusion/corpus.hpp"
#include "lexfusion/crf.hpp"
#include "lexfusion/encoder.hpp"
#include "lexfusion/lexicon.hpp"
#include "lexfusion/sememe_encoder.hpp"

namespace lexfusion {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EncoderMode { kToy, kExternal };

struct TrainConfig {
  double alpha = 1.0;
  double lr = 0.001;
  double dropout = 0.2;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  EncoderMode encoder_mode = EncoderMode::kToy;
  SememeMode sememe_mode = SememeMode::kOff;
  GraphMode graph_mode = GraphMode::kReal;
  std::size_t d_emb = 64;
  std::size_t d_h = 64;
  double threshold = 0.5;

  std::size_t max_len = 512;
  std::size_t max_word_len = 4;
  std::size_t sememe_dim = 200;
  std::size_t gat_head_dim = 32;
  bool sememe_concat = false;
  bool transition_mask = false;
  bool train_with_predicted_tags = false;
  bool pipeline = false;  // separate encoders for tagger and scorer
  double positive_weight = 1.0;
  coref::LossForm coref_loss = coref::LossForm::kCrossEntropy;
  std::size_t batch_size = 1;
};

/// Throws ConfigError on out-of-range values.
void validate_config(const TrainConfig& config);
/// Unknown keys are rejected; missing keys keep their defaults.
TrainConfig parse_config(std::string_view json_text);
TrainConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const TrainConfig& config);

/// Base encoder (toy, or a projection of frozen external features) with an
/// optional sememe encoder on top.
class EncoderStack {
 public:
  EncoderStack(const TrainConfig& config, std::size_t vocab_size, std::size_t sememe_vocab,
               std::size_t external_dim, Rng& rng, const std::string& prefix);

  /// `external` must hold the paragraph's features in external mode;
  /// `lexicon` must be set when the sememe encoder is enabled.
  Var encode(Tape& tape, std::span<const std::size_t> char_ids, std::u32string_view text,
             const Tensor* external, const SememeLexicon* lexicon);

  std::size_t output_width() const;
  std::vector<Parameter*> parameters();

 private:
  std::optional<ToyEncoder> toy_;
  Parameter external_weight_;
  Parameter external_bias_;
  std::optional<SememeEncoder> sememe_;
  std::size_t d_h_ = 0;
};

class Model {
 public:
  /// `lexicon` is required when config.sememe_mode is not off; `external_dim`
  /// is the LFEMB1 width in external mode and ignored otherwise.
  Model(TrainConfig config, CharVocab vocab, std::shared_ptr<const SememeLexicon> lexicon,
        std::size_t external_dim = 0);

  const TrainConfig& config() const { return config_; }
  const CharVocab& vocab() const { return vocab_; }
  const SememeLexicon* lexicon() const { return lexicon_.get(); }
  std::size_t external_dim() const { return external_dim_; }

  /// External features for prediction/training in external mode.
  void set_embeddings(std::shared_ptr<const EmbeddingFile> embeddings);
  const EmbeddingFile* embeddings() const { return embeddings_.get(); }

  std::vector<Parameter*> parameters();

  struct Encoded {
    Var tagger;
    Var scorer;  // same Var as `tagger` unless pipeline mode
  };
  Encoded encode(Tape& tape, std::string_view id, std::u32string_view text, bool train, Rng& rng);
  /// Transition scores with the optional BIO mask added.
  Var transitions(Tape& tape);

  crf::CrfParams crf;
  coref::CorefParams coref;

 private:
  TrainConfig config_;
  CharVocab vocab_;
  std::shared_ptr<const SememeLexicon> lexicon_;
  std::shared_ptr<const EmbeddingFile> embeddings_;
  std::size_t external_dim_ = 0;
  std::unique_ptr<EncoderStack> tagger_stack_;
  std::unique_ptr<EncoderStack> scorer_stack_;
};

/// L = L_mention + alpha * L_coref. Throws ConfigError when alpha <= 0.
double joint_loss(double mention_loss, double coref_loss, double alpha);
Var joint_loss(Var mention_loss, Var coref_loss, double alpha);

struct InstanceLoss {
  Var mention;
  Var coref;
  Var total;
};
/// Losses of one gold instance on `tape`.
InstanceLoss instance_loss(Model& model, Tape& tape, const Instance& instance, bool train, Rng& rng);

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean joint loss over the epoch's instances
  double mention_loss = 0.0;
  double coref_loss = 0.0;
  std::optional<double> dev_triple_f;
};

struct TrainOptions {
  const std::vector<Instance>* dev = nullptr;
  /// Called after every epoch; returning false stops training.
  std::function<bool(const EpochReport&)> on_epoch;
};

/// Builds the vocabulary from `corpus` and initialises a model from config.seed.
Model create_model(const TrainConfig& config, const std::vector<Instance>& corpus,
                   std::shared_ptr<const SememeLexicon> lexicon,
                   std::shared_ptr<const EmbeddingFile> embeddings = nullptr);

/// Adam over shuffled instances. Deterministic for a fixed seed. Throws
/// TrainingError on an empty corpus or a non-finite loss.
std::vector<EpochReport> train(Model& model, const std::vector<Instance>& corpus, const TrainOptions& options = {});

struct Prediction {
  std::vector<std::size_t> tags;
  std::vector<Mention> mentions;
  Tensor pair_probs;  // n x n
  std::vector<Triple> triples;
};

/// Viterbi tags (or `forced_tags`), biaffine pair probabilities and
/// assembled triples. An empty paragraph gives empty outputs.
Prediction predict(Model& model, std::string_view id, std::u32string_view text,
                   std::optional<std::span<const std::size_t>> forced_tags = std::nullopt);

/// Prediction as a corpus instance (mentions plus the links of its triples).
Instance prediction_instance(std::string id, std::u32string text, const Prediction& prediction);

/// Greedy one-one matching of the two characters of every 2-character fusion
/// mention to distinct separation mentions. A character's score for a mention
/// is the mean over the mention's characters of (p(c,k) + p(k,c)) / 2. Ties go
/// to the lower character, then the earlier mention.
std::vector<Triple> assemble_triples(std::span<const Mention> mentions, const Tensor& pair_probs,
                                     double threshold = 0.5);

// Model directories hold model.ckpt, model.json and, with a sememe encoder,
// lexicon.json.
void save_model(const std::filesystem::path& dir, Model& model,
                const std::optional<std::filesystem::path>& lexicon_source = std::nullopt);
Model load_model(const std::filesystem::path& dir);

}  // namespace lexfusion
