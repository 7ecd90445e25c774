#include "tubeil/dataset.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "json.hpp"

namespace tubeil {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::uint32_t swap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

void write_f32_le(std::ostream& out, const float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t v;
      std::memcpy(&v, data + i, 4);
      v = swap32(v);
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
}

void read_f32_le(std::istream& in, float* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t v;
      std::memcpy(&v, data + i, 4);
      v = swap32(v);
      std::memcpy(data + i, &v, 4);
    }
  }
}

void save_dataset(const std::string& dir, const Dataset& data, const std::string& config_hash,
                  const std::string& metadata_json) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "tubeil-dataset";
  manifest["version"] = 1;
  manifest["config_hash"] = config_hash;
  manifest["count"] = data.size();
  manifest["record"] = json::array({json{{"name", "image"}, {"size", data.image_size}},
                                    json{{"name", "other"}, {"size", data.n_other}},
                                    json{{"name", "ref"}, {"size", data.n_ref}},
                                    json{{"name", "u"}, {"size", data.n_action}},
                                    json{{"name", "x"}, {"size", data.n_state}}});
  manifest["dtype"] = "f32-le";
  manifest["metadata"] = json::parse(metadata_json);

  std::ofstream bin(fs::path(dir) / "samples.bin", std::ios::binary);
  if (!bin) throw Error("save_dataset: cannot open samples.bin in " + dir);
  for (int i = 0; i < data.size(); ++i) {
    const auto row = static_cast<std::size_t>(i);
    write_f32_le(bin, data.images.data() + row * data.image_size, static_cast<std::size_t>(data.image_size));
    write_f32_le(bin, data.other.data() + row * data.n_other, static_cast<std::size_t>(data.n_other));
    write_f32_le(bin, data.ref.data() + row * data.n_ref, static_cast<std::size_t>(data.n_ref));
    write_f32_le(bin, data.u.data() + row * data.n_action, static_cast<std::size_t>(data.n_action));
    write_f32_le(bin, data.x.data() + row * data.n_state, static_cast<std::size_t>(data.n_state));
  }
  if (!bin) throw Error("save_dataset: write failed in " + dir);
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << '\n';
  if (!mf) throw Error("save_dataset: cannot write manifest.json in " + dir);
}

Dataset load_dataset(const std::string& dir, const std::string& expected_hash) {
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream mf(mpath);
  if (!mf) throw Error("load_dataset: missing " + mpath.string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw Error("load_dataset: bad manifest " + mpath.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "tubeil-dataset") throw Error("load_dataset: not a dataset: " + dir);
  const std::string hash = manifest.at("config_hash").get<std::string>();
  if (!expected_hash.empty() && hash != expected_hash) {
    throw ConfigError("load_dataset: config hash " + hash + " in " + dir + " does not match " + expected_hash);
  }
  Dataset d;
  const json& rec = manifest.at("record");
  if (rec.size() != 5) throw Error("load_dataset: unexpected record layout in " + dir);
  d.image_size = rec[0].at("size").get<int>();
  d.n_other = rec[1].at("size").get<int>();
  d.n_ref = rec[2].at("size").get<int>();
  d.n_action = rec[3].at("size").get<int>();
  d.n_state = rec[4].at("size").get<int>();
  const auto count = manifest.at("count").get<std::size_t>();
  d.images.resize(count * d.image_size);
  d.other.resize(count * d.n_other);
  d.ref.resize(count * d.n_ref);
  d.u.resize(count * d.n_action);
  d.x.resize(count * d.n_state);

  const fs::path bpath = fs::path(dir) / "samples.bin";
  std::ifstream bin(bpath, std::ios::binary);
  if (!bin) throw Error("load_dataset: missing " + bpath.string());
  const auto expected = count * static_cast<std::size_t>(d.record_floats()) * sizeof(float);
  if (fs::file_size(bpath) != expected) throw Error("load_dataset: " + bpath.string() + " has the wrong size");
  for (std::size_t i = 0; i < count; ++i) {
    read_f32_le(bin, d.images.data() + i * d.image_size, static_cast<std::size_t>(d.image_size));
    read_f32_le(bin, d.other.data() + i * d.n_other, static_cast<std::size_t>(d.n_other));
    read_f32_le(bin, d.ref.data() + i * d.n_ref, static_cast<std::size_t>(d.n_ref));
    read_f32_le(bin, d.u.data() + i * d.n_action, static_cast<std::size_t>(d.n_action));
    read_f32_le(bin, d.x.data() + i * d.n_state, static_cast<std::size_t>(d.n_state));
  }
  if (!bin) throw Error("load_dataset: truncated " + bpath.string());
  return d;
}

}  // namespace tubeil
