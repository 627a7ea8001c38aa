#include "graspdp/serve/codec.hpp"

#include <sodium.h>

#include "graspdp/core/errors.hpp"

namespace graspdp {

namespace {
constexpr int kVariant = sodium_base64_VARIANT_ORIGINAL;
}

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  std::string out(sodium_base64_encoded_len(size, kVariant), '\0');
  sodium_bin2base64(out.data(), out.size(), data, size, kVariant);
  out.resize(out.size() - 1);  // drop the terminator
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, nullptr, kVariant) != 0)
    throw ValidationError("data", "data: not valid base64");
  out.resize(len);
  return out;
}

nlohmann::json image_to_json(const Image& image) {
  return {{"width", image.width},
          {"height", image.height},
          {"channels", 3},
          {"format", "rgb8"},
          {"encoding", "base64"},
          {"data", base64_encode(image.pixels.data(), image.pixels.size())}};
}

Image image_from_json(const nlohmann::json& j) {
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.contains(name)) throw ValidationError(name, std::string(name) + ": missing");
    return j.at(name);
  };
  const auto& w = field("width");
  const auto& h = field("height");
  if (!w.is_number_integer() || w.get<int>() <= 0) throw ValidationError("width", "width: must be a positive integer");
  if (!h.is_number_integer() || h.get<int>() <= 0) throw ValidationError("height", "height: must be a positive integer");
  if (field("channels") != 3) throw ValidationError("channels", "channels: only 3 is supported");
  if (field("encoding") != "base64") throw ValidationError("encoding", "encoding: only base64 is supported");
  if (!field("data").is_string()) throw ValidationError("data", "data: must be a string");
  Image img(w.get<int>(), h.get<int>());
  auto bytes = base64_decode(j.at("data").get<std::string>());
  if (bytes.size() != img.pixels.size())
    throw ValidationError("data", "data: decoded " + std::to_string(bytes.size()) + " bytes, dims declare " +
                                      std::to_string(img.pixels.size()));
  img.pixels = std::move(bytes);
  return img;
}

nlohmann::json box_object(const GraspBox& b) {
  return {{"category", b.category}, {"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}, {"confidence", b.confidence}};
}

GraspBox box_from_object(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("box", "box: must be an object");
  GraspBox b;
  auto number = [&](const char* name, double& out, bool required) {
    if (!j.contains(name)) {
      if (required) throw ValidationError(name, std::string(name) + ": missing");
      return;
    }
    if (!j.at(name).is_number()) throw ValidationError(name, std::string(name) + ": must be a number");
    out = j.at(name).get<double>();
  };
  number("cx", b.cx, true);
  number("cy", b.cy, true);
  number("w", b.w, true);
  number("h", b.h, true);
  number("confidence", b.confidence, false);
  if (j.contains("category")) {
    if (!j.at("category").is_number_integer()) throw ValidationError("category", "category: must be an integer");
    b.category = j.at("category").get<int>();
  }
  return b;
}

}  // namespace graspdp
