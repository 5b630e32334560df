#include "progrow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_io.hpp"
#include "progrow/errors.hpp"

namespace progrow {
namespace {

using detail::json;
namespace fs = std::filesystem;

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

void write_atomically(const fs::path& target, const std::string& bytes) {
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void save_checkpoint(const fs::path& dir, const TrainState& state) {
  audit_shapes(state.params, state.model);
  fs::create_directories(dir);

  std::string blob;
  blob.reserve(state.params.element_count() * sizeof(double));
  json index = json::array();
  state.params.for_each([&](const std::string& name, const Tensor& t) {
    index.push_back({{"name", name},
                     {"shape", t.shape()},
                     {"byte_offset", blob.size()},
                     {"element_count", t.size()}});
    for (double x : t.data()) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(x));
      char bytes[sizeof bits];
      std::memcpy(bytes, &bits, sizeof bits);
      blob.append(bytes, sizeof bytes);
    }
  });

  json rng = json::object();
  for (const auto& [label, s] : state.rng) rng[label] = {{"seed", s.seed}, {"counter", s.counter}};

  const json manifest{{"format_version", kCheckpointFormatVersion},
                      {"model", detail::model_to_json(state.model)},
                      {"data", detail::data_to_json(state.data)},
                      {"stage_index", state.stage_index},
                      {"global_step", state.global_step},
                      {"phase", to_string(state.phase)},
                      {"boundary_ops", to_string(state.boundary_ops)},
                      {"rng", rng},
                      {"blob", kBlobFile},
                      {"blob_bytes", blob.size()},
                      {"tensors", index}};

  write_atomically(dir / kBlobFile, blob);
  write_atomically(dir / kManifestFile, manifest.dump(2) + "\n");
}

TrainState load_checkpoint(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / kManifestFile));
  } catch (const json::exception& e) {
    throw IntegrityError("manifest " + (dir / kManifestFile).string() + " is not valid JSON: " +
                         e.what());
  }

  TrainState state;
  try {
    if (manifest.value("format_version", 0) != kCheckpointFormatVersion) {
      throw IntegrityError("unsupported checkpoint format_version");
    }
    state.model = detail::model_from_json(manifest.at("model"), "model");
    state.data = detail::data_from_json(manifest.at("data"), "data", state.model.vocab);
    state.stage_index = manifest.at("stage_index").get<std::size_t>();
    state.global_step = manifest.at("global_step").get<std::uint64_t>();
    state.phase = parse_checkpoint_phase(manifest.at("phase").get<std::string>());
    state.boundary_ops = parse_growth_ops(manifest.value("boundary_ops", std::string()));
    for (const auto& [label, s] : manifest.at("rng").items()) {
      state.rng[label] = {s.at("seed").get<std::uint64_t>(), s.at("counter").get<std::uint64_t>()};
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("manifest: ") + e.what());
  } catch (const ValidationError& e) {
    throw IntegrityError(std::string("manifest: ") + e.what());
  } catch (const UsageError& e) {
    throw IntegrityError(std::string("manifest: ") + e.what());
  }

  const std::string blob = read_file(dir / kBlobFile);
  const json& index = manifest.at("tensors");
  if (!index.is_array()) throw IntegrityError("manifest: tensors must be an array");

  state.params = shaped_params(state.model);
  std::vector<std::pair<std::string, Tensor*>> slots;
  state.params.for_each([&](const std::string& name, Tensor& t) { slots.emplace_back(name, &t); });

  std::size_t expected_offset = 0;
  std::size_t i = 0;
  for (; i < index.size(); ++i) {
    const json& entry = index[i];
    const std::string name = entry.value("name", std::string("#") + std::to_string(i));
    Shape shape;
    std::size_t offset = 0, count = 0;
    try {
      shape = entry.at("shape").get<Shape>();
      offset = entry.at("byte_offset").get<std::size_t>();
      count = entry.at("element_count").get<std::size_t>();
    } catch (const json::exception&) {
      throw IntegrityError("tensor '" + name + "': malformed index entry");
    }
    if (i >= slots.size()) {
      throw IntegrityError("tensor '" + name + "': not part of a " +
                           describe_model(state.model) + " model");
    }
    if (name != slots[i].first) {
      throw IntegrityError("tensor '" + name + "': expected '" + slots[i].first +
                           "' at this index position");
    }
    if (offset != expected_offset) {
      throw IntegrityError("tensor '" + name + "': byte_offset " + std::to_string(offset) +
                           " leaves a gap or overlap (expected " +
                           std::to_string(expected_offset) + ")");
    }
    if (count != shape_elements(shape)) {
      throw IntegrityError("tensor '" + name + "': element_count " + std::to_string(count) +
                           " does not match shape " + shape_string(shape));
    }
    if (shape != slots[i].second->shape()) {
      throw IntegrityError("tensor '" + name + "': shape " + shape_string(shape) +
                           " fails the shape audit for " + describe_model(state.model) +
                           " (expected " + shape_string(slots[i].second->shape()) + ")");
    }
    const std::size_t bytes = count * sizeof(double);
    if (offset + bytes > blob.size()) {
      throw IntegrityError("tensor '" + name + "': blob truncated (needs bytes [" +
                           std::to_string(offset) + ", " + std::to_string(offset + bytes) +
                           "), blob has " + std::to_string(blob.size()) + ")");
    }
    auto data = slots[i].second->data();
    for (std::size_t e = 0; e < count; ++e) {
      std::uint64_t bits;
      std::memcpy(&bits, blob.data() + offset + e * sizeof bits, sizeof bits);
      data[e] = std::bit_cast<double>(to_little_endian(bits));
    }
    expected_offset = offset + bytes;
  }
  if (i < slots.size()) {
    throw IntegrityError("tensor '" + slots[i].first + "': missing from the manifest index");
  }
  if (expected_offset != blob.size()) {
    throw IntegrityError("blob has " + std::to_string(blob.size() - expected_offset) +
                         " trailing bytes after tensor '" + slots.back().first + "'");
  }
  audit_shapes(state.params, state.model);
  return state;
}

}  // namespace progrow
