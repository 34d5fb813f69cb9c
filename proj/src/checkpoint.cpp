#include "lexfusion/checkpoint.hpp"

#include <fstream>
#include <unordered_map>

namespace lexfusion {
namespace {
constexpr char kMagic[] = "LFCKPT1";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, kMagicLen);
  for (const Parameter* p : params) {
    binary::write_u32(out, static_cast<std::uint32_t>(p->name.size()));
    binary::write_bytes(out, p->name);
    binary::write_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) binary::write_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p->value.values()) binary::write_f64(out, v);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  if (binary::read_bytes(in, kMagicLen, "magic") != kMagic) {
    throw binary::FormatError(path.string() + " is not an LFCKPT1 checkpoint");
  }
  std::vector<NamedTensor> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    NamedTensor entry;
    const std::uint32_t name_len = binary::read_u32(in, "parameter name length");
    entry.name = binary::read_bytes(in, name_len, "parameter name");
    const std::uint32_t rank = binary::read_u32(in, "parameter rank");
    Shape shape(rank);
    for (auto& d : shape) d = binary::read_u32(in, "parameter dimension");
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = binary::read_f64(in, "parameter value");
    entry.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(entry));
  }
  return out;
}

void restore_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params) {
  std::vector<NamedTensor> entries = load_checkpoint(path);
  std::unordered_map<std::string, Tensor*> by_name;
  for (NamedTensor& e : entries) {
    if (!by_name.emplace(e.name, &e.value).second) {
      throw binary::FormatError("duplicate parameter '" + e.name + "' in " + path.string());
    }
  }
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw binary::FormatError("checkpoint " + path.string() + " lacks parameter '" + p->name + "'");
    }
    if (!it->second->same_shape(p->value)) {
      throw ShapeError("parameter '" + p->name + "' expects " + shape_string(p->value.shape()) +
                       ", checkpoint has " + shape_string(it->second->shape()));
    }
    p->value = std::move(*it->second);
    p->zero_grad();
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw binary::FormatError("checkpoint " + path.string() + " has unknown parameter '" +
                              by_name.begin()->first + "'");
  }
}

}  // namespace lexfusion
