#include "graspdp/io/container.hpp"

#include <fstream>
#include <sstream>

#include "graspdp/core/errors.hpp"

namespace graspdp {

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

std::string padded(const std::string& magic) {
  std::string m = magic.substr(0, 8);
  m.resize(8, '\0');
  return m;
}

}  // namespace

void write_container(const std::filesystem::path& path, const std::string& magic, const Container& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write next to the target and rename so readers never see half a file.
  const auto tmp = std::filesystem::path(path.string() + ".partial");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    const std::string meta = c.meta.dump();
    out.write(padded(magic).data(), 8);
    put<std::uint32_t>(out, c.version);
    put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint64_t>(out, c.payload.size());
    out.write(c.payload.data(), static_cast<std::streamsize>(c.payload.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Container read_container(const std::filesystem::path& path, const std::string& magic, std::uint32_t expected_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const auto size = std::filesystem::file_size(path);
  std::string head(8, '\0');
  if (!in.read(head.data(), 8) || head != padded(magic))
    throw CheckpointError(path.string() + " is not a " + magic + " file");
  Container c;
  if (!get(in, c.version)) throw CheckpointError(path.string() + ": truncated header");
  if (c.version != expected_version)
    throw VersionError(path.string() + ": format version " + std::to_string(c.version) + ", this build reads " +
                       std::to_string(expected_version));
  std::uint64_t n = 0;
  if (!get(in, n) || n > size) throw CheckpointError(path.string() + ": truncated metadata");
  std::string meta(n, '\0');
  if (!in.read(meta.data(), static_cast<std::streamsize>(n))) throw CheckpointError(path.string() + ": truncated metadata");
  try {
    c.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt metadata: " + e.what());
  }
  if (!get(in, n) || n > size) throw CheckpointError(path.string() + ": truncated payload");
  c.payload.resize(n);
  if (!in.read(c.payload.data(), static_cast<std::streamsize>(n))) throw CheckpointError(path.string() + ": truncated payload");
  return c;
}

}  // namespace graspdp
