// lexfusion: train / predict / eval / build-corpus.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lexfusion/corpus.hpp"
#include "lexfusion/metrics.hpp"
#include "lexfusion/pipeline.hpp"
#include "lexfusion/unicode.hpp"

namespace fs = std::filesystem;
using namespace lexfusion;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Prediction input is either corpus JSONL (gold annotations ignored) or raw
// "id<TAB>text" lines.
std::vector<RawParagraph> read_paragraphs(const fs::path& path) {
  const std::string text = slurp(path);
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    std::vector<RawParagraph> out;
    for (Instance& inst : parse_corpus_text(text, Validation::kPrediction)) {
      out.push_back({std::move(inst.id), std::move(inst.text)});
    }
    return out;
  }
  return parse_raw_text(text);
}

int run_train(const fs::path& corpus_path, const fs::path& dev_path, const fs::path& lexicon_path,
              const fs::path& config_path, const fs::path& out_dir, const fs::path& embeddings_path) {
  const TrainConfig config = config_path.empty() ? TrainConfig{} : load_config(config_path);
  const std::vector<Instance> corpus = parse_corpus(corpus_path);
  std::vector<Instance> dev;
  if (!dev_path.empty()) dev = parse_corpus(dev_path);
  std::shared_ptr<const SememeLexicon> lexicon;
  if (!lexicon_path.empty()) lexicon = std::make_shared<const SememeLexicon>(load_lexicon(lexicon_path));
  std::shared_ptr<const EmbeddingFile> embeddings;
  if (!embeddings_path.empty()) embeddings = std::make_shared<const EmbeddingFile>(EmbeddingFile::read(embeddings_path));

  Model model = create_model(config, corpus, lexicon, embeddings);
  nlohmann::ordered_json log = nlohmann::ordered_json::array();
  TrainOptions options;
  if (!dev.empty()) options.dev = &dev;
  options.on_epoch = [&log](const EpochReport& r) {
    std::fprintf(stderr, "epoch %zu loss %.6f mention %.6f coref %.6f", r.epoch, r.loss, r.mention_loss,
                 r.coref_loss);
    nlohmann::ordered_json entry = {
        {"epoch", r.epoch}, {"loss", r.loss}, {"mention_loss", r.mention_loss}, {"coref_loss", r.coref_loss}};
    if (r.dev_triple_f) {
      std::fprintf(stderr, " dev_triple_f %.4f", *r.dev_triple_f);
      entry["dev_triple_f"] = *r.dev_triple_f;
    }
    std::fprintf(stderr, "\n");
    log.push_back(entry);
    return true;
  };
  train(model, corpus, options);
  std::optional<fs::path> lexicon_copy;
  if (!lexicon_path.empty()) lexicon_copy = lexicon_path;
  save_model(out_dir, model, lexicon_copy);
  write_text(out_dir / "train_log.json", log.dump(2) + "\n");
  return 0;
}

int run_predict(const fs::path& model_dir, const fs::path& input, const fs::path& out_path,
                const fs::path& embeddings_path) {
  Model model = load_model(model_dir);
  if (!embeddings_path.empty()) {
    model.set_embeddings(std::make_shared<const EmbeddingFile>(EmbeddingFile::read(embeddings_path)));
  }
  std::vector<Instance> predicted;
  for (RawParagraph& p : read_paragraphs(input)) {
    const Prediction pred = predict(model, p.id, p.text);
    predicted.push_back(prediction_instance(std::move(p.id), std::move(p.text), pred));
  }
  write_corpus(out_path, predicted);
  return 0;
}

int run_eval(const fs::path& pred_path, const fs::path& gold_path, const fs::path& vocab_path,
             const fs::path& report_path) {
  const std::vector<Instance> predicted = parse_corpus(pred_path, Validation::kPrediction);
  const std::vector<Instance> gold = parse_corpus(gold_path);
  const EvalReport report = evaluate(predicted, gold);
  std::string json;
  if (!vocab_path.empty()) {
    const Breakdown tables = breakdown(predicted, gold, fusion_vocabulary(parse_corpus(vocab_path)));
    json = report_json(report, &tables);
  } else {
    json = report_json(report);
  }
  write_text(report_path, json);
  std::fprintf(stderr, "triple P %.4f R %.4f F %.4f\n", report.triples.precision(), report.triples.recall(),
               report.triples.f1());
  return 0;
}

int run_build_corpus(const fs::path& seeds_path, const fs::path& raw_path, const fs::path& out_path,
                     const fs::path& dev_out, double dev_ratio, std::uint64_t seed, const fs::path& lexicon_path) {
  const std::vector<SeedTriple> seeds = parse_seeds(seeds_path);
  std::unique_ptr<SememeLexicon> lexicon;
  if (!lexicon_path.empty()) lexicon = std::make_unique<SememeLexicon>(load_lexicon(lexicon_path));
  std::vector<SeedTriple> kept;
  for (const SeedTriple& s : seeds) {
    const std::vector<Violation> problems = validate_seed(s, lexicon.get());
    if (problems.empty()) {
      kept.push_back(s);
      continue;
    }
    std::fprintf(stderr, "skipping seed %s/%s/%s: %s (%s)\n", utf8_encode(s.fusion).c_str(),
                 utf8_encode(s.first).c_str(), utf8_encode(s.second).c_str(), problems.front().rule.c_str(),
                 problems.front().detail.c_str());
  }
  std::vector<Instance> instances = build_pseudo_corpus(kept, parse_raw(raw_path));
  std::fprintf(stderr, "%zu instances from %zu seeds\n", instances.size(), kept.size());
  if (dev_out.empty()) {
    write_corpus(out_path, instances);
    return 0;
  }
  auto [train_part, dev_part] = split_corpus(std::move(instances), 1.0 - dev_ratio, dev_ratio, seed);
  write_corpus(out_path, train_part);
  write_corpus(dev_out, dev_part);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chinese lexical fusion recognition"};
  app.require_subcommand(1);

  fs::path corpus, dev, lexicon, config, out_dir, embeddings;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--corpus", corpus, "training corpus (JSONL)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", dev, "development corpus (JSONL)")->check(CLI::ExistingFile);
  train_cmd->add_option("--lexicon", lexicon, "sememe lexicon (JSON)")->check(CLI::ExistingFile);
  train_cmd->add_option("--config", config, "training config (JSON)")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_dir, "model directory")->required();
  train_cmd->add_option("--embeddings", embeddings, "LFEMB1 features for external encoder mode")
      ->check(CLI::ExistingFile);

  fs::path model_dir, input, pred_out;
  CLI::App* predict_cmd = app.add_subcommand("predict", "recognise lexical fusions");
  predict_cmd->add_option("--model", model_dir, "model directory")->required()->check(CLI::ExistingDirectory);
  predict_cmd->add_option("--input", input, "raw paragraphs or corpus JSONL")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", pred_out, "predicted corpus (JSONL)")->required();
  predict_cmd->add_option("--embeddings", embeddings, "LFEMB1 features for external encoder mode")
      ->check(CLI::ExistingFile);

  fs::path pred, gold, train_vocab, report;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against gold");
  eval_cmd->add_option("--pred", pred, "predicted corpus")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--gold", gold, "gold corpus")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--train-vocab", train_vocab, "training corpus; enables the breakdown tables")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--report", report, "report (JSON)")->required();

  fs::path seeds, raw, corpus_out, dev_out, seed_lexicon;
  double dev_ratio = 0.1;
  std::uint64_t split_seed = 1;
  CLI::App* build_cmd = app.add_subcommand("build-corpus", "distant-supervision corpus from seed triples");
  build_cmd->add_option("--seeds", seeds, "seed triples (TSV)")->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--raw", raw, "raw paragraphs (id<TAB>text)")->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--out", corpus_out, "corpus (JSONL)")->required();
  build_cmd->add_option("--dev-out", dev_out, "also split off a development corpus");
  build_cmd->add_option("--dev-ratio", dev_ratio, "development share")->check(CLI::Range(0.0, 1.0));
  build_cmd->add_option("--seed", split_seed, "split seed");
  build_cmd->add_option("--lexicon", seed_lexicon, "lexicon for seed validation")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(corpus, dev, lexicon, config, out_dir, embeddings);
    if (*predict_cmd) return run_predict(model_dir, input, pred_out, embeddings);
    if (*eval_cmd) return run_eval(pred, gold, train_vocab, report);
    if (*build_cmd) return run_build_corpus(seeds, raw, corpus_out, dev_out, dev_ratio, split_seed, seed_lexicon);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
