#include "spgraph/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "spgraph/errors.hpp"

namespace spgraph::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter>& params,
                     const nlohmann::json& meta) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::set<std::string> names;
  uint64_t offset = 0;
  for (const auto& p : params) {
    if (!names.insert(p.name).second) throw InvalidArgument("duplicate parameter name " + p.name);
    header["tensors"].push_back({{"name", p.name},
                                 {"shape", p.tensor.shape()},
                                 {"dtype", "float32"},
                                 {"byte_offset", offset}});
    offset += static_cast<uint64_t>(p.tensor.numel()) * sizeof(float);
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingFile("cannot write checkpoint " + path.string());
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    auto d = p.tensor.data();
    out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(float)));
  }
  if (!out) throw FormatError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("checkpoint not found: " + path.string());
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (64u << 20)) throw FormatError("bad checkpoint header in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("truncated checkpoint header in " + path.string());
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.meta = header.value("meta", nlohmann::json::object());
    for (const auto& t : header.at("tensors")) {
      if (t.at("dtype") != "float32") throw FormatError("unsupported dtype in checkpoint");
      StoredTensor st;
      st.shape = t.at("shape").get<Shape>();
      const uint64_t off = t.at("byte_offset").get<uint64_t>();
      const uint64_t count = static_cast<uint64_t>(numel_of(st.shape));
      if (off + count * sizeof(float) > payload.size()) throw FormatError("checkpoint payload truncated");
      st.values.resize(count);
      std::memcpy(st.values.data(), payload.data() + off, count * sizeof(float));
      ckpt.tensors.emplace(t.at("name").get<std::string>(), std::move(st));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, std::vector<Parameter>& params) {
  for (auto& p : params) {
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end()) throw FormatError("checkpoint is missing parameter " + p.name);
    if (it->second.shape != p.tensor.shape()) {
      throw FormatError("shape mismatch for " + p.name + ": " + shape_str(it->second.shape) + " vs " +
                        shape_str(p.tensor.shape()));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), p.tensor.mutable_data().begin());
  }
}

}  // namespace spgraph::nn
