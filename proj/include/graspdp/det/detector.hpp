#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graspdp/core/types.hpp"
#include "graspdp/demo/dataset.hpp"
#include "graspdp/det/map.hpp"

namespace graspdp {

inline constexpr std::uint32_t kDetectorFormatVersion = 1;

struct DetectorConfig {
  int image_width = 96;
  int image_height = 96;
  int category_count = 11;
  int channels = 32;
  int candidates = 8;  // K boxes per image
  int steps = 1500;
  int batch_size = 16;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

nlohmann::json to_json(const DetectorConfig& c);
DetectorConfig detector_config_from_json(const nlohmann::json& j);

struct LabeledFrame {
  Image image;  // view 0
  std::vector<GraspBox> boxes;
};

class DetectorNet;

// Fully convolutional detector on a stride-4 grid. Each cell predicts an
// objectness logit, category logits and (dx, dy, log w, log h); the K best
// local maxima of objectness become the candidate boxes.
class Detector {
 public:
  explicit Detector(const DetectorConfig& config);
  Detector(const Detector&);
  Detector& operator=(const Detector&);
  Detector(Detector&&) noexcept;
  Detector& operator=(Detector&&) noexcept;
  ~Detector();

  const DetectorConfig& config() const { return config_; }
  // Training record: steps, final loss, warnings (e.g. categories absent from
  // the training set), held-out mAP when evaluated.
  nlohmann::json& metadata() { return metadata_; }
  const nlohmann::json& metadata() const { return metadata_; }

  // Exactly `candidates` boxes per image, sorted by confidence, clamped to
  // the image. Throws ShapeError on wrong image dims.
  std::vector<GraspBox> detect(const Image& image) const;
  std::vector<std::vector<GraspBox>> detect_batch(const std::vector<const Image*>& images) const;

  void save(const std::filesystem::path& path) const;
  static Detector load(const std::filesystem::path& path);

  DetectorNet& net() const { return *net_; }

 private:
  DetectorConfig config_;
  nlohmann::json metadata_ = nlohmann::json::object();
  std::unique_ptr<DetectorNet> net_;
};

// Seeded and reproducible. Needs at least two frames (ConfigError otherwise).
Detector train_detector(const std::vector<LabeledFrame>& frames, const DetectorConfig& config);

MapResult evaluate_map(const Detector& detector, const std::vector<LabeledFrame>& testset, double iou_threshold = 0.5);

// Random view-0 frames (with ground-truth boxes) drawn from scripted-expert
// episodes across all task families.
std::vector<LabeledFrame> sample_labeled_frames(const Simulator& sim, int count, std::uint64_t seed);

// Replaces every frame's boxes with detector candidates and writes the
// relabeled dataset (episodes + manifest) to out_dir, which may equal the
// source directory. Provenance becomes "detector".
DatasetManifest autolabel(const Detector& detector, const Simulator& sim, const DatasetManifest& manifest,
                          const std::filesystem::path& out_dir);

}  // namespace graspdp
