#include "metagnn/checkpoint.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "metagnn/binary_io.hpp"
#include "metagnn/errors.hpp"

namespace metagnn {

namespace binary {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace binary

namespace {
constexpr std::string_view kMagic = "MGNNCKPT";
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_checkpoint(const std::filesystem::path& path,
                     const ModelParams& model) {
  std::vector<std::uint8_t> out;
  binary::put_bytes(out, kMagic);
  binary::put_u32(out, kVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(model.values.size()));
  for (std::size_t i = 0; i < model.values.size(); ++i) {
    const auto& name = model.names[i];
    const auto& t = model.values[i];
    binary::put_u32(out, static_cast<std::uint32_t>(name.size()));
    binary::put_bytes(out, name);
    binary::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) binary::put_u64(out, d);
    for (double v : t.data()) binary::put_f64(out, v);
  }
  binary::write_file(path.string(), out);

  nlohmann::json manifest = {{"format", "metagnn-checkpoint"},
                             {"version", kVersion},
                             {"arch", model.arch},
                             {"parameters", model.parameter_count()}};
  std::ofstream m(manifest_path(path));
  if (!m) throw ConfigError("cannot write " + manifest_path(path).string());
  m << manifest.dump(2) << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream m(manifest_path(path));
  if (!m) throw FormatError("missing manifest " + manifest_path(path).string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(m);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint manifest: " + std::string(e.what()));
  }
  ModelParams model;
  model.arch = manifest.at("arch").get<ArchConfig>();
  const auto layout = parameter_layout(model.arch);

  const auto bytes = binary::read_file(path.string());
  binary::Reader in(bytes, "checkpoint " + path.string());
  if (in.str(kMagic.size()) != kMagic) in.fail("bad magic");
  if (in.u32() != kVersion) in.fail("unsupported version");
  const std::uint32_t count = in.u32();
  if (count != layout.size()) in.fail("array count does not match manifest");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.str(in.u32());
    const std::uint32_t rank = in.u32();
    Shape shape(rank);
    for (auto& d : shape) d = in.u64();
    if (name != layout[i].first || shape != layout[i].second) {
      in.fail("array '" + name + "' " + shape_to_string(shape) +
              " does not match expected '" + layout[i].first + "' " +
              shape_to_string(layout[i].second));
    }
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = in.f64();
    model.names.push_back(std::move(name));
    model.values.emplace_back(std::move(shape), std::move(values), true);
  }
  if (!in.at_end()) in.fail("trailing bytes");
  return model;
}

}  // namespace metagnn
