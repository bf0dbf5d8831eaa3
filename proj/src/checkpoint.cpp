#include "dsaqc/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "dsaqc/csv.hpp"
#include "dsaqc/errors.hpp"
#include "json.hpp"

namespace dsaqc::checkpoint {

namespace {

constexpr char kModelMagic[8] = {'D', 'S', 'A', 'Q', 'C', 'M', '0', '1'};
constexpr char kWeightsMagic[8] = {'D', 'S', 'A', 'Q', 'C', 'W', '0', '1'};

struct NamedArray {
  std::string name;
  std::vector<float>* values;
};

std::vector<NamedArray> all_arrays(nn::ResNet& net) {
  std::vector<NamedArray> out;
  for (nn::Parameter* p : net.parameters()) out.push_back({p->name, &p->value});
  for (const nn::Buffer& b : net.buffers()) out.push_back({b.name, b.values});
  return out;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& origin) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw MalformedInputError(origin + ": truncated checkpoint");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

void write_arrays(std::ostream& out, const std::vector<NamedArray>& arrays) {
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put_u32(out, static_cast<std::uint32_t>(a.values->size()));
    // Little-endian hosts only; floats are written in native order.
    out.write(reinterpret_cast<const char*>(a.values->data()), static_cast<std::streamsize>(a.values->size() * 4));
  }
}

std::map<std::string, std::vector<float>> read_arrays(std::istream& in, const std::string& origin) {
  std::map<std::string, std::vector<float>> out;
  const std::uint32_t count = get_u32(in, origin);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_u32(in, origin), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) {
      throw MalformedInputError(origin + ": truncated checkpoint");
    }
    std::vector<float> values(get_u32(in, origin));
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * 4))) {
      throw MalformedInputError(origin + ": truncated checkpoint");
    }
    out.emplace(std::move(name), std::move(values));
  }
  return out;
}

void assign(const std::vector<NamedArray>& targets, std::map<std::string, std::vector<float>>& source,
            const std::string& origin, bool skip_head) {
  for (const auto& t : targets) {
    if (skip_head && t.name.starts_with("fc.")) continue;
    auto it = source.find(t.name);
    if (it == source.end()) throw MalformedInputError(origin + ": missing tensor '" + t.name + "'");
    if (it->second.size() != t.values->size()) {
      throw MalformedInputError(origin + ": tensor '" + t.name + "' has " + std::to_string(it->second.size()) +
                                " values, expected " + std::to_string(t.values->size()));
    }
    *t.values = std::move(it->second);
  }
}

std::ifstream open_in(const std::filesystem::path& path, const char (&magic)[8]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) throw NotFoundError("no such checkpoint", path.string());
    throw IoError("cannot open for reading", path.string());
  }
  char got[8];
  if (!in.read(got, 8) || std::memcmp(got, magic, 8) != 0) {
    throw MalformedInputError(path.string() + ": not a checkpoint of the expected kind");
  }
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, const char (&magic)[8]) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing", path.string());
  out.write(magic, 8);
  return out;
}

}  // namespace

std::filesystem::path registry_path(const std::filesystem::path& dir, BackboneDepth depth) {
  return dir / ("resnet" + std::to_string(static_cast<int>(depth)) + ".weights");
}

void save_model(const std::filesystem::path& path, const TrainedLabelModel& model) {
  if (!model.network) throw ValidationError("save_model: model has no network");
  nlohmann::json header;
  header["label_name"] = model.label_name;
  header["variant"] = static_cast<int>(model.variant);
  header["class_count"] = model.class_count;
  header["input_side"] = model.input_side;
  header["dropout"] = model.network->dropout();
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(model.taxonomy_hash));
  header["taxonomy_hash"] = hash;
  header["best_validation_loss"] = model.best_validation_loss;
  header["best_epoch"] = model.best_epoch;
  auto& hist = header["history"] = nlohmann::json::array();
  for (const auto& e : model.history) {
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_loss", e.validation_loss}});
  }
  const std::string text = header.dump();
  std::ofstream out = open_out(path, kModelMagic);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_arrays(out, all_arrays(*model.network));
  if (!out) throw IoError("write failed", path.string());
}

TrainedLabelModel load_model(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, kModelMagic);
  const std::string origin = path.string();
  std::string text(get_u32(in, origin), '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw MalformedInputError(origin + ": truncated header");
  }
  TrainedLabelModel m;
  try {
    const auto header = nlohmann::json::parse(text);
    m.label_name = header.at("label_name").get<std::string>();
    m.variant = nn::depth_from_int(header.at("variant").get<int>());
    m.class_count = header.at("class_count").get<int>();
    m.input_side = header.at("input_side").get<int>();
    m.taxonomy_hash = std::stoull(header.at("taxonomy_hash").get<std::string>(), nullptr, 16);
    m.best_validation_loss = header.at("best_validation_loss").get<double>();
    m.best_epoch = header.at("best_epoch").get<int>();
    for (const auto& e : header.at("history")) {
      m.history.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                           e.at("validation_loss").get<double>()});
    }
    m.network = std::make_shared<nn::ResNet>(m.variant, m.class_count, header.at("dropout").get<float>(), 0);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(origin + ": bad checkpoint header: " + e.what());
  }
  if (m.taxonomy_hash != taxonomy_hash(builtin_taxonomy())) {
    throw ValidationError(origin + ": checkpoint was trained against a different label taxonomy");
  }
  auto arrays = read_arrays(in, origin);
  assign(all_arrays(*m.network), arrays, origin, false);
  return m;
}

void save_backbone_weights(const std::filesystem::path& path, nn::ResNet& network) {
  std::ofstream out = open_out(path, kWeightsMagic);
  std::vector<NamedArray> arrays;
  for (const auto& a : all_arrays(network)) {
    if (!a.name.starts_with("fc.")) arrays.push_back(a);
  }
  write_arrays(out, arrays);
  if (!out) throw IoError("write failed", path.string());
}

void load_backbone_weights(const std::filesystem::path& path, nn::ResNet& network) {
  std::ifstream in = open_in(path, kWeightsMagic);
  auto arrays = read_arrays(in, path.string());
  assign(all_arrays(network), arrays, path.string(), true);
}

void write_loss_log(const std::filesystem::path& path, const TrainedLabelModel& model) {
  csv::Table t;
  t.header = {"epoch", "train_loss", "validation_loss"};
  for (const auto& e : model.history) {
    char a[32], b[32];
    std::snprintf(a, sizeof a, "%.9g", e.train_loss);
    std::snprintf(b, sizeof b, "%.9g", e.validation_loss);
    t.rows.push_back({std::to_string(e.epoch), a, b});
  }
  csv::write(path, t);
}

}  // namespace dsaqc::checkpoint
