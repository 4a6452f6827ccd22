#pragma once

#include <filesystem>
#include <iosfwd>

#include "json.hpp"

#include "daf/numerics/param_store.hpp"

namespace daf::num {

/// On-disk layout:
///
///   DAFCKPT 1 <manifest byte length>\n
///   <manifest: UTF-8 JSON>
///   <payload: little-endian IEEE-754 doubles>
///
/// The manifest lists every parameter as {name, shape, offset, count}, with
/// offset in bytes from the start of the payload and values in row-major
/// order. Free-form `metadata` rides along in the manifest.
struct Checkpoint {
  ParamStore params;
  nlohmann::json metadata = nlohmann::json::object();
};

void write_checkpoint(std::ostream& out, const ParamStore& params, const nlohmann::json& metadata = {});
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& metadata = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into `target`; throws StateMismatchError unless the
// names and shapes agree exactly.
void restore_into(ParamStore& target, const ParamStore& saved);

}  // namespace daf::num
