#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "lframes/nn.hpp"

namespace lframes::nn {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void write_le(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

double read_le(std::ifstream& in) {
  std::uint64_t bits = 0;
  in.read(reinterpret_cast<char*>(&bits), sizeof bits);
  if (!in) throw std::runtime_error("checkpoint: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& bin_path, const std::string& manifest_path,
                     const std::vector<std::pair<std::string, const Matrix*>>& tensors,
                     const std::map<std::string, std::string>& meta) {
  nlohmann::json manifest;
  manifest["format"] = "lframes-checkpoint-v1";
  manifest["dtype"] = "float64-le";
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& [name, m] : tensors)
    manifest["tensors"].push_back({{"name", name}, {"shape", {m->rows(), m->cols()}}});
  manifest["meta"] = meta;

  const std::string tmp_bin = bin_path + ".tmp";
  {
    std::ofstream out(tmp_bin, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + bin_path);
    for (const auto& [name, m] : tensors)
      for (Eigen::Index i = 0; i < m->size(); ++i) write_le(out, m->data()[i]);
  }
  std::rename(tmp_bin.c_str(), bin_path.c_str());
  const std::string tmp_json = manifest_path + ".tmp";
  {
    std::ofstream out(tmp_json);
    out << manifest.dump(2) << '\n';
  }
  std::rename(tmp_json.c_str(), manifest_path.c_str());
}

CheckpointManifest load_checkpoint(const std::string& bin_path, const std::string& manifest_path,
                                   const std::vector<std::pair<std::string, Matrix*>>& tensors) {
  std::ifstream js(manifest_path);
  if (!js) throw std::runtime_error("cannot read " + manifest_path);
  const auto manifest = nlohmann::json::parse(js);
  CheckpointManifest out;
  for (const auto& t : manifest.at("tensors")) {
    out.names.push_back(t.at("name").get<std::string>());
    out.shapes.emplace_back(t.at("shape")[0].get<long>(), t.at("shape")[1].get<long>());
  }
  if (manifest.contains("meta"))
    out.meta = manifest["meta"].get<std::map<std::string, std::string>>();
  if (out.names.size() != tensors.size())
    throw std::runtime_error("checkpoint: tensor count mismatch");
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + bin_path);
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Matrix& m = *tensors[k].second;
    if (out.names[k] != tensors[k].first || out.shapes[k].first != m.rows() ||
        out.shapes[k].second != m.cols())
      throw std::runtime_error("checkpoint: tensor '" + tensors[k].first + "' does not match manifest");
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = read_le(in);
  }
  return out;
}

}  // namespace lframes::nn
