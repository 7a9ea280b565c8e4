#include "mscare/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace mscare {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'S', 'C', 'A', 'R', 'E', 'C', 'K'};

json config_json(const UNetConfig& c) {
  return {{"levels", c.levels},         {"convs_per_level", c.convs_per_level},
          {"filters", c.filters},       {"kernel", c.kernel},
          {"dropout_rate", c.dropout_rate}, {"leaky_slope", c.leaky_slope},
          {"pre_convs", c.pre_convs},   {"post_convs", c.post_convs}};
}

UNetConfig config_from(const json& j) {
  UNetConfig c;
  c.levels = j.at("levels");
  c.convs_per_level = j.at("convs_per_level");
  c.filters = j.at("filters");
  c.kernel = j.at("kernel");
  c.dropout_rate = j.at("dropout_rate");
  c.leaky_slope = j.at("leaky_slope");
  c.pre_convs = j.at("pre_convs");
  c.post_convs = j.at("post_convs");
  return c;
}

struct Section {
  const char* name;
  ParameterSet<float>* set;
};

}  // namespace

void save_checkpoint(const Checkpoint& c, const fs::path& path) {
  const ParameterSet<float>* sets[4] = {&c.model, &c.ema, &c.adam.m, &c.adam.v};
  const char* names[4] = {"model", "ema", "adam_m", "adam_v"};
  for (int s = 1; s < 4; ++s) {
    if (!sets[s]->same_structure(c.model)) throw Error(std::string("checkpoint section ") + names[s] + " does not match the model");
  }
  json h;
  h["version"] = kCheckpointVersion;
  h["config"] = config_json(c.config);
  h["label_codes"] = c.schema.codes;
  h["iteration"] = c.iteration;
  h["seed"] = c.seed;
  h["fold"] = c.fold;
  h["adam_step"] = c.adam.step;
  json table = json::array();
  uint64_t offset = 0;
  for (int s = 0; s < 4; ++s) {
    for (std::size_t i = 0; i < sets[s]->size(); ++i) {
      const uint64_t bytes = sets[s]->values[i].size() * sizeof(float);
      table.push_back({{"section", names[s]}, {"name", sets[s]->names[i]}, {"shape", sets[s]->shapes[i]},
                       {"offset", offset}, {"bytes", bytes}});
      offset += bytes;
    }
  }
  h["tensors"] = std::move(table);
  const std::string header = h.dump();

  fs::path tmp = path;
  tmp += ".tmp";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint: " + tmp.string());
    const uint32_t version = kCheckpointVersion;
    const uint64_t hlen = header.size();
    f.write(kMagic, sizeof(kMagic));
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (int s = 0; s < 4; ++s) {
      for (const auto& v : sets[s]->values) {
        f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
      }
    }
    f.flush();
    if (!f) throw Error("failed writing checkpoint: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error("cannot move checkpoint into place: " + path.string() + " (" + ec.message() + ")");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint: " + path.string());
  char magic[8];
  uint32_t version = 0;
  uint64_t hlen = 0;
  f.read(magic, sizeof(magic));
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("not a checkpoint file: " + path.string());
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  if (hlen > (1u << 30)) throw Error("corrupt checkpoint header length in " + path.string());
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw Error("truncated checkpoint header in " + path.string());

  Checkpoint c;
  try {
    const json h = json::parse(header);
    c.config = config_from(h.at("config"));
    c.config.validate();
    c.schema.codes = h.at("label_codes").get<std::array<int, kStage2Classes>>();
    c.schema.validate();
    c.iteration = h.at("iteration");
    c.seed = h.at("seed");
    c.fold = h.at("fold");
    c.adam.step = h.at("adam_step");
    const ParameterSet<float> layout = build_cascade(c.config).params;
    c.model = layout;
    c.ema = layout;
    c.adam.m = layout;
    c.adam.v = layout;
    Section sections[4] = {{"model", &c.model}, {"ema", &c.ema}, {"adam_m", &c.adam.m}, {"adam_v", &c.adam.v}};
    const auto& table = h.at("tensors");
    if (table.size() != 4 * layout.size()) throw Error("checkpoint tensor table does not match its configuration");
    const std::streamoff base = f.tellg();
    std::size_t row = 0;
    for (Section& s : sections) {
      for (std::size_t i = 0; i < layout.size(); ++i, ++row) {
        const json& t = table[row];
        if (t.at("section") != s.name || t.at("name") != layout.names[i] ||
            t.at("shape").get<std::vector<int>>() != layout.shapes[i]) {
          throw Error("checkpoint tensor " + t.at("name").get<std::string>() + " does not match the model layout");
        }
        auto& v = s.set->values[i];
        if (t.at("bytes").get<uint64_t>() != v.size() * sizeof(float)) throw Error("checkpoint tensor size mismatch");
        f.seekg(base + static_cast<std::streamoff>(t.at("offset").get<uint64_t>()));
        f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
        if (!f) throw Error("truncated checkpoint data in " + path.string());
      }
    }
  } catch (const json::exception& ex) {
    throw Error("malformed checkpoint header in " + path.string() + ": " + ex.what());
  } catch (const Error& ex) {
    throw Error(std::string(ex.what()) + " (" + path.string() + ")");
  }
  return c;
}

CascadeModel<float> checkpoint_model(const Checkpoint& c, bool use_ema) {
  CascadeModel<float> m = build_cascade(c.config);
  m.params = use_ema ? c.ema : c.model;
  return m;
}

}  // namespace mscare
