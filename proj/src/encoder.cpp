#include "lexfusion/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "lexfusion/binary_io.hpp"
#include "lexfusion/ops.hpp"

namespace lexfusion {

CharVocab CharVocab::build(std::span<const std::u32string> texts) {
  std::set<char32_t> seen;
  for (const auto& t : texts) seen.insert(t.begin(), t.end());
  return from_chars(std::u32string(seen.begin(), seen.end()));
}

CharVocab CharVocab::from_chars(std::u32string chars) {
  CharVocab v;
  v.chars_ = std::move(chars);
  for (std::size_t i = 0; i < v.chars_.size(); ++i) v.index_.emplace(v.chars_[i], i + 1);
  return v;
}

std::size_t CharVocab::id(char32_t c) const {
  auto it = index_.find(c);
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<std::size_t> CharVocab::ids(std::u32string_view text) const {
  std::vector<std::size_t> out;
  out.reserve(text.size());
  for (char32_t c : text) out.push_back(id(c));
  return out;
}

ToyEncoder::ToyEncoder(std::size_t vocab_size, ToyEncoderConfig config, Rng& rng,
                       const std::string& prefix)
    : config_(config) {
  const std::size_t d = config.d_emb;
  char_embedding = Parameter(prefix + ".char_embedding", uniform_tensor({vocab_size, d}, -0.5, 0.5, rng));
  position_embedding =
      Parameter(prefix + ".position_embedding", uniform_tensor({config.max_len, d}, -0.1, 0.1, rng));
  window_weight = Parameter(prefix + ".window.weight", glorot(3 * d, d, rng));
  window_bias = Parameter(prefix + ".window.bias", Tensor({d}));
  query = Parameter(prefix + ".attention.query", glorot(d, d, rng));
  key = Parameter(prefix + ".attention.key", glorot(d, d, rng));
  value = Parameter(prefix + ".attention.value", glorot(d, d, rng));
  output = Parameter(prefix + ".attention.output", glorot(d, d, rng));
  projection = Parameter(prefix + ".projection.weight", glorot(d, config.d_h, rng));
  projection_bias = Parameter(prefix + ".projection.bias", Tensor({config.d_h}));
}

std::vector<Parameter*> ToyEncoder::parameters() {
  return {&char_embedding, &position_embedding, &window_weight, &window_bias, &query,
          &key,            &value,              &output,        &projection,  &projection_bias};
}

Var ToyEncoder::encode(Tape& tape, std::span<const std::size_t> char_ids) {
  const std::size_t n = char_ids.size();
  if (n == 0) throw EncoderError("cannot encode an empty paragraph");
  if (n > config_.max_len) {
    throw EncoderError("paragraph of " + std::to_string(n) + " characters exceeds the encoder limit of " +
                       std::to_string(config_.max_len) + "; truncate or split it before encoding");
  }
  const std::size_t d = config_.d_emb;
  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = i;

  Var x = ops::add(ops::embedding_lookup(tape.param(char_embedding), char_ids),
                   ops::embedding_lookup(tape.param(position_embedding), positions));

  Var pad = tape.constant(Tensor({1, d}));
  Var prev = ops::concat({pad, ops::slice_rows(x, 0, n - 1)}, 0);
  Var next = ops::concat({ops::slice_rows(x, 1, n - 1), pad}, 0);
  Var window = ops::concat({prev, x, next}, 1);
  Var ctx = ops::tanh(ops::add(ops::matmul(window, tape.param(window_weight)), tape.param(window_bias)));

  Var q = ops::matmul(ctx, tape.param(query));
  Var k = ops::matmul(ctx, tape.param(key));
  Var v = ops::matmul(ctx, tape.param(value));
  Var scores = ops::scale(ops::matmul(q, ops::transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  Var attended = ops::matmul(ops::matmul(ops::softmax(scores), v), tape.param(output));
  Var mixed = ops::add(ctx, attended);

  return ops::tanh(ops::add(ops::matmul(mixed, tape.param(projection)), tape.param(projection_bias)));
}

namespace {
constexpr char kEmbMagic[] = "LFEMB1";
constexpr std::size_t kEmbMagicLen = sizeof(kEmbMagic) - 1;
}  // namespace

void write_embedding_file(const std::filesystem::path& path, std::size_t dim,
                          std::span<const EmbeddingRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw EncoderError("cannot open embedding file for writing: " + path.string());
  out.write(kEmbMagic, kEmbMagicLen);
  binary::write_u32(out, static_cast<std::uint32_t>(records.size()));
  binary::write_u32(out, static_cast<std::uint32_t>(dim));
  for (const EmbeddingRecord& r : records) {
    if (r.values.cols() != dim || r.values.rank() != 2) {
      throw ShapeError("embedding record '" + r.id + "' has shape " + shape_string(r.values.shape()) +
                       ", expected [n, " + std::to_string(dim) + "]");
    }
    binary::write_u32(out, static_cast<std::uint32_t>(r.id.size()));
    binary::write_bytes(out, r.id);
    binary::write_u32(out, static_cast<std::uint32_t>(r.values.rows()));
    for (double v : r.values.values()) binary::write_f32(out, static_cast<float>(v));
  }
  if (!out) throw EncoderError("failed writing embedding file " + path.string());
}

EmbeddingFile EmbeddingFile::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EncoderError("cannot open embedding file " + path.string());
  if (binary::read_bytes(in, kEmbMagicLen, "magic") != kEmbMagic) {
    throw binary::FormatError(path.string() + " is not an LFEMB1 file");
  }
  EmbeddingFile file;
  const std::uint32_t count = binary::read_u32(in, "paragraph count");
  file.dim_ = binary::read_u32(in, "dimension");
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t id_len = binary::read_u32(in, "id length");
    std::string id = binary::read_bytes(in, id_len, "id");
    const std::uint32_t n = binary::read_u32(in, "paragraph length");
    Tensor values({n, file.dim_});
    for (double& v : values.values()) v = binary::read_f32(in, "embedding value");
    if (!file.records_.emplace(std::move(id), std::move(values)).second) {
      throw binary::FormatError("duplicate paragraph id in " + path.string());
    }
  }
  return file;
}

bool EmbeddingFile::contains(std::string_view id) const { return records_.find(id) != records_.end(); }

std::vector<std::string> EmbeddingFile::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : records_) out.push_back(id);
  return out;
}

const Tensor& EmbeddingFile::get(std::string_view id, std::size_t expected_len) const {
  auto it = records_.find(id);
  if (it == records_.end()) throw EncoderError("paragraph id '" + std::string(id) + "' not in embedding file");
  if (it->second.rows() != expected_len) {
    throw EncoderError("paragraph '" + std::string(id) + "' has " + std::to_string(it->second.rows()) +
                       " embedding rows but " + std::to_string(expected_len) +
                       " characters; exporter and corpus disagree on tokenisation");
  }
  return it->second;
}

Tensor load_external(const std::filesystem::path& path, std::string_view paragraph_id,
                     std::size_t expected_len) {
  return EmbeddingFile::read(path).get(paragraph_id, expected_len);
}

}  // namespace lexfusion
