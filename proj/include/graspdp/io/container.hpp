#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace graspdp {

// Single-file model container: 8-byte magic, u32 format version, then a JSON
// metadata block and an opaque payload (a serialized torch archive), each
// prefixed by its u64 length. Readers reject truncated files with
// CheckpointError and unknown versions with VersionError.
struct Container {
  std::uint32_t version = 0;
  nlohmann::json meta;
  std::string payload;
};

void write_container(const std::filesystem::path& path, const std::string& magic, const Container& c);
Container read_container(const std::filesystem::path& path, const std::string& magic, std::uint32_t expected_version);

}  // namespace graspdp
