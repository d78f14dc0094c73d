#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "bmim/errors.hpp"
#include "bmim/training.hpp"

namespace bmim {

namespace fs = std::filesystem;
using nlohmann::json;

Checkpoint make_checkpoint(const Model& model, History history) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.labels = model.labels();
  ckpt.vocab = model.vocab();
  for (const auto& p : model.params()) ckpt.arrays.push_back({p.name, p.value});
  ckpt.history = std::move(history);
  return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model(ckpt.config, ckpt.labels, ckpt.vocab);
  for (auto& p : model.params()) {
    auto it = std::find_if(ckpt.arrays.begin(), ckpt.arrays.end(), [&](const NamedArray& a) { return a.name == p.name; });
    if (it == ckpt.arrays.end()) throw LoadError("checkpoint is missing array '" + p.name + "'");
    if (!it->value.same_shape(p.value))
      throw LoadError("array '" + p.name + "' has shape " + std::to_string(it->value.rows()) + "x" +
                      std::to_string(it->value.cols()) + ", expected " + std::to_string(p.value.rows()) + "x" +
                      std::to_string(p.value.cols()));
    p.value = it->value;
  }
  if (ckpt.arrays.size() != model.params().size())
    throw LoadError("checkpoint holds arrays the configured model does not use");
  return model;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void write_array(const fs::path& path, const Matrix& m) {
  std::vector<char> buf(m.size() * 8);
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(m[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

Matrix read_array(const fs::path& path, std::size_t rows, std::size_t cols, const std::string& name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("missing data file for array '" + name + "': " + path.filename().string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() != rows * cols * 8)
    throw LoadError("array '" + name + "': file holds " + std::to_string(buf.size()) + " bytes, expected " +
                    std::to_string(rows * cols * 8));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i * 8 + b])) << (8 * b);
    m[i] = std::bit_cast<double>(bits);
  }
  return m;
}

json read_json(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw LoadError(std::string("missing ") + what);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw LoadError(std::string(what) + " is corrupt (invalid JSON)");
  return j;
}

std::string array_file(const std::string& name) { return "array." + name + ".f64"; }

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  json arrays = json::array();
  for (const auto& a : ckpt.arrays) {
    const std::string file = array_file(a.name);
    write_array(tmp / file, a.value);
    arrays.push_back({{"name", a.name}, {"file", file}, {"shape", {a.value.rows(), a.value.cols()}},
                      {"dtype", "float64"}, {"byte_order", "little"}});
  }
  json manifest = {
      {"format", "bmim-checkpoint"},
      {"schema_version", kCheckpointSchemaVersion},
      {"config", ckpt.config.to_json()},
      {"labels",
       {{"sentiment", ckpt.labels.sentiment_labels}, {"act", ckpt.labels.act_labels}}},
      {"vocab", ckpt.vocab.tokens()},
      {"arrays", std::move(arrays)},
  };
  save_json_atomic(tmp / "manifest.json", manifest);
  save_json_atomic(tmp / "history.json", ckpt.history.to_json());

  if (fs::exists(dir)) fs::remove_all(dir);
  fs::rename(tmp, dir);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("checkpoint directory not found: " + dir.string());
  const json manifest = read_json(dir / "manifest.json", "manifest.json");
  if (!manifest.is_object()) throw LoadError("manifest.json is corrupt (not an object)");
  auto version = manifest.find("schema_version");
  if (version == manifest.end() || !version->is_number_integer())
    throw LoadError("manifest.json: missing field 'schema_version'");
  if (version->get<int>() != kCheckpointSchemaVersion)
    throw VersionError("checkpoint schema version " + std::to_string(version->get<int>()) +
                       " is not supported (expected " + std::to_string(kCheckpointSchemaVersion) + ")");

  Checkpoint ckpt;
  try {
    for (const char* field : {"config", "labels", "vocab", "arrays"})
      if (!manifest.contains(field)) throw LoadError(std::string("manifest.json: missing field '") + field + "'");
    ckpt.config = TrainConfig::from_json(manifest.at("config"));
    ckpt.labels = LabelSpace(manifest.at("labels").at("sentiment").get<std::vector<std::string>>(),
                             manifest.at("labels").at("act").get<std::vector<std::string>>());
    ckpt.vocab = Vocab::from_tokens(manifest.at("vocab").get<std::vector<std::string>>());
    for (const auto& a : manifest.at("arrays")) {
      const std::string name = a.at("name").get<std::string>();
      if (a.at("dtype").get<std::string>() != "float64")
        throw LoadError("array '" + name + "': unsupported dtype");
      const auto shape = a.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw LoadError("array '" + name + "': shape must have two entries");
      ckpt.arrays.push_back({name, read_array(dir / a.at("file").get<std::string>(), shape[0], shape[1], name)});
    }
    ckpt.history = History::from_json(read_json(dir / "history.json", "history.json"));
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError(std::string("manifest.json is corrupt: ") + e.what());
  }
  // Fails with a named field if arrays do not match the configured model.
  model_from_checkpoint(ckpt);
  return ckpt;
}

}  // namespace bmim
