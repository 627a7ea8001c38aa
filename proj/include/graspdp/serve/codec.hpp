#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "graspdp/core/types.hpp"
#include "graspdp/demo/episode.hpp"

namespace graspdp {

std::string base64_encode(const std::uint8_t* data, std::size_t size);
// Throws ValidationError("data") on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

// {"width", "height", "channels": 3, "format": "rgb8", "encoding": "base64", "data"}
nlohmann::json image_to_json(const Image& image);
// Throws ValidationError naming the field when dims and payload disagree.
Image image_from_json(const nlohmann::json& j);

// {"category", "cx", "cy", "w", "h", "confidence"}
nlohmann::json box_object(const GraspBox& box);
// Missing confidence defaults to 1. Throws ValidationError naming the field.
GraspBox box_from_object(const nlohmann::json& j);

}  // namespace graspdp
