// SPDX-License-Identifier: Apache-2.0

#include "planeseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "planeseg/config.hpp"

namespace planeseg {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'L', 'S', 'E', 'G', 'C', 'K', '1'};

template <typename F>
void for_each_tensor(SegmentationModel<float>& model, F&& f) {
  auto reg = model.registry();
  for (auto* p : reg.params) f(p->name, p->value);
  for (auto* b : reg.buffers) f(b->name, b->value);
}

}  // namespace

void save_checkpoint(SegmentationModel<float>& model, const Provenance& provenance, const fs::path& path) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for_each_tensor(model, [&](const std::string& name, const nn::Matrix<float>& v) {
    tensors.push_back({{"name", name}, {"rows", v.rows()}, {"cols", v.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(v.size());
  });
  const std::string header = json{{"model_config", model.config()}, {"provenance", provenance}, {"tensors", tensors}}.dump();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    const std::uint64_t len = header.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for_each_tensor(model, [&](const std::string&, const nn::Matrix<float>& v) {
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    });
    if (!out) throw IoError("write failed for checkpoint " + path.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError(path.string() + " is not a checkpoint");
  if (len > (1u << 26)) throw IoError("corrupt checkpoint header in " + path.string());
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header in " + path.string());
  json meta;
  try {
    meta = json::parse(header);
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  Checkpoint ck{SegmentationModel<float>(meta.at("model_config").get<ModelConfig>()),
                meta.at("provenance").get<Provenance>()};
  std::map<std::string, json> records;
  for (const json& t : meta.at("tensors")) records[t.at("name").get<std::string>()] = t;
  const std::streamoff data_start = in.tellg();
  std::size_t seen = 0;
  for_each_tensor(ck.model, [&](const std::string& name, nn::Matrix<float>& v) {
    auto it = records.find(name);
    if (it == records.end()) throw IoError("checkpoint " + path.string() + " lacks tensor " + name);
    const json& t = it->second;
    if (t.at("rows").get<Eigen::Index>() != v.rows() || t.at("cols").get<Eigen::Index>() != v.cols()) {
      throw IoError("checkpoint tensor " + name + " has the wrong shape");
    }
    in.seekg(data_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>() * sizeof(float)));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint data in " + path.string());
    ++seen;
  });
  if (seen != records.size()) throw IoError("checkpoint " + path.string() + " has tensors the model does not use");
  ck.model.zero_grad();
  return ck;
}

}  // namespace planeseg
