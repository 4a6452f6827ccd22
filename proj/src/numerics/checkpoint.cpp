#include "daf/numerics/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

namespace daf::num {
namespace {

constexpr const char* kMagic = "DAFCKPT";
constexpr int kVersion = 1;

void put_le64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.write(bytes.data(), 8);
}

double get_le64(const std::string& buf, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamStore& params, const nlohmann::json& metadata) {
  nlohmann::json manifest;
  manifest["format"] = "daf-checkpoint";
  manifest["version"] = kVersion;
  manifest["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
  auto entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Parameter* p : params.parameters()) {
    entries.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}, {"count", p->value.size()}});
    offset += static_cast<std::uint64_t>(p->value.size()) * 8u;
  }
  manifest["parameters"] = std::move(entries);
  const std::string text = manifest.dump(1);

  out << kMagic << ' ' << kVersion << ' ' << text.size() << '\n';
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : params.parameters()) {
    for (double v : p->value.to_row_major()) put_le64(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  std::size_t manifest_size = 0;
  in >> magic >> version >> manifest_size;
  if (!in || magic != kMagic) throw StateMismatchError("not a checkpoint file");
  if (version != kVersion) throw StateMismatchError("unsupported checkpoint version " + std::to_string(version));
  if (in.get() != '\n') throw StateMismatchError("malformed checkpoint header");

  std::string text(manifest_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(manifest_size));
  if (static_cast<std::size_t>(in.gcount()) != manifest_size) throw StateMismatchError("truncated checkpoint manifest");
  std::ostringstream rest;
  rest << in.rdbuf();
  const std::string payload = rest.str();

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw StateMismatchError(std::string("corrupt checkpoint manifest: ") + e.what());
  }

  Checkpoint ck;
  ck.metadata = manifest.value("metadata", nlohmann::json::object());
  for (const auto& entry : manifest.at("parameters")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<std::size_t>();
    if (static_cast<Index>(count) != shape_size(shape) || offset + count * 8 > payload.size()) {
      throw StateMismatchError("checkpoint entry '" + name + "' is inconsistent with its payload");
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = get_le64(payload, offset + 8 * i);
    auto& p = ck.params.add(name, shape);
    p.value = NumArray::from_row_major(shape, values);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const nlohmann::json& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params, metadata);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

void restore_into(ParamStore& target, const ParamStore& saved) {
  if (target.names() != saved.names()) {
    throw StateMismatchError("checkpoint parameters do not match the configured model (" +
                             std::to_string(saved.names().size()) + " saved vs " +
                             std::to_string(target.names().size()) + " expected)");
  }
  target.assign_values(saved);
}

}  // namespace daf::num
