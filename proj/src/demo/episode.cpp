#include "graspdp/demo/episode.hpp"

#include <H5Cpp.h>

#include <nlohmann/json.hpp>

#include "graspdp/core/errors.hpp"

namespace graspdp {

using nlohmann::json;

json box_to_json(const GraspBox& b) { return {b.category, b.cx, b.cy, b.w, b.h, b.confidence}; }
GraspBox box_from_json(const json& j) {
  return {j.at(0).get<int>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>(), j.at(4).get<double>(), j.at(5).get<double>()};
}

json task_to_json(const TaskSpec& task) {
  json j = {{"family", to_string(task.family)},
            {"placement_id", task.placement_id},
            {"target_item", task.target_item},
            {"target_zone", {task.target_zone.x_min, task.target_zone.y_min, task.target_zone.x_max,
                             task.target_zone.y_max}}};
  if (task.prompt_box) j["prompt_box"] = box_to_json(*task.prompt_box);
  return j;
}

TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  t.family = parse_family(j.at("family").get<std::string>());
  t.placement_id = j.at("placement_id");
  t.target_item = j.at("target_item");
  const auto& z = j.at("target_zone");
  t.target_zone = {z.at(0), z.at(1), z.at(2), z.at(3)};
  if (j.contains("prompt_box")) t.prompt_box = box_from_json(j.at("prompt_box"));
  return t;
}

namespace {

json events_json(const std::vector<GraspEvent>& events) {
  json arr = json::array();
  for (const auto& e : events) {
    json je = {{"step", e.step},
               {"gripper", {e.gripper.x, e.gripper.y, e.gripper.z}},
               {"commanded_width", e.commanded_width},
               {"on_target", e.on_target}};
    if (e.item_id) je["item_id"] = *e.item_id;
    arr.push_back(je);
  }
  return arr;
}

std::vector<GraspEvent> events_from(const json& arr) {
  std::vector<GraspEvent> events;
  for (const auto& je : arr) {
    GraspEvent e;
    e.step = je.at("step");
    const auto& gp = je.at("gripper");
    e.gripper = {gp.at(0), gp.at(1), gp.at(2)};
    e.commanded_width = je.at("commanded_width");
    e.on_target = je.at("on_target");
    if (je.contains("item_id")) e.item_id = je.at("item_id").get<std::string>();
    events.push_back(e);
  }
  return events;
}

json outcome_json(const EpisodeOutcome& o) {
  json j = {{"task_success", o.task_success},
            {"grasp_successes", o.grasp_successes},
            {"grasp_attempts", o.grasp_attempts}};
  if (o.first_grasped) j["first_grasped"] = *o.first_grasped;
  return j;
}

EpisodeOutcome outcome_from_json(const json& j) {
  EpisodeOutcome o;
  o.task_success = j.at("task_success");
  o.grasp_successes = j.at("grasp_successes");
  o.grasp_attempts = j.at("grasp_attempts");
  if (j.contains("first_grasped")) o.first_grasped = j.at("first_grasped").get<std::string>();
  return o;
}

const H5::StrType& string_type() {
  static const H5::StrType type(H5::PredType::C_S1, H5T_VARIABLE);
  return type;
}

void write_string_attr(H5::H5Object& obj, const std::string& name, const std::string& value) {
  H5::Attribute attr = obj.createAttribute(name, string_type(), H5::DataSpace(H5S_SCALAR));
  attr.write(string_type(), value);
}

std::string read_string_attr(const H5::H5Object& obj, const std::string& name) {
  H5::Attribute attr = obj.openAttribute(name);
  std::string value;
  attr.read(string_type(), value);
  return value;
}

template <typename T>
void write_array(H5::H5File& file, const std::string& name, const std::vector<T>& data,
                 const std::vector<hsize_t>& dims, const H5::PredType& type) {
  hsize_t total = 1;
  for (auto d : dims) total *= d;
  if (total == 0) return;  // absent dataset reads back as empty
  H5::DataSpace space(static_cast<int>(dims.size()), dims.data());
  H5::DataSet ds = file.createDataSet(name, type, space);
  ds.write(data.data(), type);
}

template <typename T>
std::vector<T> read_array(const H5::H5File& file, const std::string& name, const H5::PredType& type,
                          std::vector<hsize_t>* dims_out = nullptr) {
  if (!file.nameExists(name)) {
    if (dims_out) dims_out->clear();
    return {};
  }
  H5::DataSet ds = file.openDataSet(name);
  H5::DataSpace space = ds.getSpace();
  std::vector<hsize_t> dims(static_cast<std::size_t>(space.getSimpleExtentNdims()));
  space.getSimpleExtentDims(dims.data());
  hsize_t total = 1;
  for (auto d : dims) total *= d;
  std::vector<T> data(total);
  if (total > 0) ds.read(data.data(), type);
  if (dims_out) *dims_out = dims;
  return data;
}

}  // namespace

ObservationFrame observe(const Simulator& sim, const WorldState& state, bool render_views) {
  ObservationFrame frame;
  if (render_views) frame.views = sim.render_all(state);
  frame.eef_pose = state.gripper.position;
  frame.gripper_width = state.gripper.width;
  frame.boxes = sim.groundtruth_boxes(state, sim.camera(0));
  frame.timestep = state.step_count;
  for (std::size_t i = 0; i < state.items.size(); ++i) {
    frame.item_poses.push_back(state.items[i].pose);
    if (state.gripper.holding && state.items[i].spec.item_id == *state.gripper.holding)
      frame.held_index = static_cast<int>(i);
  }
  return frame;
}

EpisodeOutcome outcome_from(const Simulator& sim, const WorldState& final_state) {
  EpisodeOutcome o;
  o.task_success = sim.task_success(final_state);
  o.grasp_attempts = static_cast<int>(final_state.events.size());
  for (const auto& e : final_state.events) {
    if (e.on_target) ++o.grasp_successes;
    if (e.item_id && !o.first_grasped) o.first_grasped = e.item_id;
  }
  return o;
}

WorldState frame_state(const Simulator& sim, const EpisodeRecord& episode, const ObservationFrame& frame) {
  WorldState state = sim.reset(episode.task, episode.seed);
  if (frame.item_poses.size() != state.items.size())
    throw ShapeError("frame scene snapshot does not match the task's items");
  for (std::size_t i = 0; i < state.items.size(); ++i) state.items[i].pose = frame.item_poses[i];
  state.gripper.position = frame.eef_pose;
  state.gripper.width = frame.gripper_width;
  if (frame.held_index >= 0) state.gripper.holding = state.items.at(frame.held_index).spec.item_id;
  state.step_count = frame.timestep;
  return state;
}

void materialize_views(const Simulator& sim, const EpisodeRecord& episode, ObservationFrame& frame) {
  if (!frame.views.empty()) return;
  frame.views = sim.render_all(frame_state(sim, episode, frame));
}

WorldState replay(const Simulator& sim, const EpisodeRecord& episode) {
  WorldState state = sim.reset(episode.task, episode.seed);
  for (const auto& action : episode.actions) state = sim.step(state, action);
  return state;
}

void write_episode(const std::filesystem::path& path, const EpisodeRecord& episode, bool with_views) {
  if (episode.frames.size() != episode.actions.size())
    throw ShapeError("episode frames and actions must align");
  try {
    H5::Exception::dontPrint();
    H5::H5File file(path.string(), H5F_ACC_TRUNC);
    H5::Group root = file.openGroup("/");
    {
      H5::Attribute attr = root.createAttribute("format_version", H5::PredType::NATIVE_INT, H5::DataSpace(H5S_SCALAR));
      const int version = kDatasetFormatVersion;
      attr.write(H5::PredType::NATIVE_INT, &version);
    }
    {
      H5::Attribute attr = root.createAttribute("seed", H5::PredType::NATIVE_UINT64, H5::DataSpace(H5S_SCALAR));
      attr.write(H5::PredType::NATIVE_UINT64, &episode.seed);
    }
    write_string_attr(root, "episode_id", episode.episode_id);
    write_string_attr(root, "task", task_to_json(episode.task).dump());
    write_string_attr(root, "events", events_json(episode.events).dump());
    write_string_attr(root, "outcome", outcome_json(episode.outcome).dump());
    write_string_attr(root, "box_source", episode.box_source);

    const auto n = static_cast<hsize_t>(episode.frames.size());
    const hsize_t items = n ? episode.frames.front().item_poses.size() : 0;
    std::vector<double> eef, width, actions, poses, boxes, cond;
    std::vector<int> timestep, held;
    for (std::size_t i = 0; i < episode.frames.size(); ++i) {
      const auto& f = episode.frames[i];
      if (f.item_poses.size() != items) throw ShapeError("item count changes within an episode");
      eef.insert(eef.end(), {f.eef_pose.x, f.eef_pose.y, f.eef_pose.z});
      width.push_back(f.gripper_width);
      timestep.push_back(f.timestep);
      held.push_back(f.held_index);
      for (const auto& p : f.item_poses) poses.insert(poses.end(), {p.x, p.y});
      for (const auto& b : f.boxes)
        boxes.insert(boxes.end(), {static_cast<double>(i), static_cast<double>(b.category), b.cx, b.cy, b.w, b.h,
                                   b.confidence});
      if (f.conditioning) {
        const auto& b = *f.conditioning;
        cond.insert(cond.end(), {1.0, static_cast<double>(b.category), b.cx, b.cy, b.w, b.h, b.confidence});
      } else {
        cond.insert(cond.end(), {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
      }
      const auto& a = episode.actions[i];
      actions.insert(actions.end(), {a.x, a.y, a.z, a.width});
    }
    const auto& dbl = H5::PredType::NATIVE_DOUBLE;
    const auto& i32 = H5::PredType::NATIVE_INT;
    write_array(file, "eef", eef, {n, 3}, dbl);
    write_array(file, "gripper_width", width, {n}, dbl);
    write_array(file, "timestep", timestep, {n}, i32);
    write_array(file, "held_index", held, {n}, i32);
    write_array(file, "item_poses", poses, {n, items, 2}, dbl);
    write_array(file, "boxes", boxes, {boxes.size() / 7, 7}, dbl);
    write_array(file, "conditioning", cond, {n, 7}, dbl);
    write_array(file, "actions", actions, {n, 4}, dbl);

    if (with_views && n > 0) {
      const auto& first = episode.frames.front().views;
      if (first.empty()) throw ShapeError("with_views requested but frames carry no views");
      const hsize_t v = first.size();
      const auto h = static_cast<hsize_t>(first.front().height);
      const auto w = static_cast<hsize_t>(first.front().width);
      const hsize_t dims[5] = {n, v, h, w, 3};
      const hsize_t chunk[5] = {1, v, h, w, 3};
      H5::DSetCreatPropList props;
      props.setChunk(5, chunk);
      H5::DataSpace space(5, dims);
      H5::DataSet ds = file.createDataSet("views", H5::PredType::NATIVE_UINT8, space, props);
      const hsize_t frame_dims[5] = {1, v, h, w, 3};
      H5::DataSpace mem(5, frame_dims);
      std::vector<std::uint8_t> buffer(v * h * w * 3);
      for (hsize_t i = 0; i < n; ++i) {
        const auto& views = episode.frames[i].views;
        if (views.size() != v) throw ShapeError("view count changes within an episode");
        for (hsize_t k = 0; k < v; ++k) {
          if (views[k].width != static_cast<int>(w) || views[k].height != static_cast<int>(h))
            throw ShapeError("view size changes within an episode");
          std::copy(views[k].pixels.begin(), views[k].pixels.end(), buffer.begin() + k * h * w * 3);
        }
        const hsize_t start[5] = {i, 0, 0, 0, 0};
        H5::DataSpace file_space = ds.getSpace();
        file_space.selectHyperslab(H5S_SELECT_SET, frame_dims, start);
        ds.write(buffer.data(), H5::PredType::NATIVE_UINT8, mem, file_space);
      }
    }
  } catch (const H5::Exception& e) {
    throw IoError("writing " + path.string() + ": " + e.getDetailMsg());
  }
}

bool episode_has_views(const std::filesystem::path& path) {
  try {
    H5::Exception::dontPrint();
    H5::H5File file(path.string(), H5F_ACC_RDONLY);
    return file.nameExists("views");
  } catch (const H5::Exception& e) {
    throw IoError("reading " + path.string() + ": " + e.getDetailMsg());
  }
}

EpisodeRecord read_episode(const std::filesystem::path& path, bool load_views) {
  EpisodeRecord ep;
  try {
    H5::Exception::dontPrint();
    H5::H5File file(path.string(), H5F_ACC_RDONLY);
    H5::Group root = file.openGroup("/");
    int version = 0;
    root.openAttribute("format_version").read(H5::PredType::NATIVE_INT, &version);
    if (version != kDatasetFormatVersion)
      throw VersionError("episode " + path.string() + " has format version " + std::to_string(version));
    root.openAttribute("seed").read(H5::PredType::NATIVE_UINT64, &ep.seed);
    ep.episode_id = read_string_attr(root, "episode_id");
    ep.task = task_from_json(json::parse(read_string_attr(root, "task")));
    ep.events = events_from(json::parse(read_string_attr(root, "events")));
    ep.outcome = outcome_from_json(json::parse(read_string_attr(root, "outcome")));
    ep.box_source = read_string_attr(root, "box_source");

    const auto& dbl = H5::PredType::NATIVE_DOUBLE;
    const auto& i32 = H5::PredType::NATIVE_INT;
    std::vector<hsize_t> pose_dims;
    const auto eef = read_array<double>(file, "eef", dbl);
    const auto width = read_array<double>(file, "gripper_width", dbl);
    const auto timestep = read_array<int>(file, "timestep", i32);
    const auto held = read_array<int>(file, "held_index", i32);
    const auto poses = read_array<double>(file, "item_poses", dbl, &pose_dims);
    const auto boxes = read_array<double>(file, "boxes", dbl);
    const auto cond = read_array<double>(file, "conditioning", dbl);
    const auto actions = read_array<double>(file, "actions", dbl);
    const std::size_t n = width.size();
    const std::size_t items = pose_dims.size() == 3 ? pose_dims[1] : 0;
    if (eef.size() != 3 * n || actions.size() != 4 * n || timestep.size() != n || held.size() != n ||
        cond.size() != 7 * n || poses.size() != n * items * 2)
      throw IoError("episode " + path.string() + " has inconsistent array sizes");
    ep.frames.resize(n);
    ep.actions.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& f = ep.frames[i];
      f.eef_pose = {eef[3 * i], eef[3 * i + 1], eef[3 * i + 2]};
      f.gripper_width = width[i];
      f.timestep = timestep[i];
      f.held_index = held[i];
      for (std::size_t k = 0; k < items; ++k)
        f.item_poses.push_back({poses[(i * items + k) * 2], poses[(i * items + k) * 2 + 1]});
      if (cond[7 * i] != 0.0)
        f.conditioning = GraspBox{static_cast<int>(cond[7 * i + 1]), cond[7 * i + 2], cond[7 * i + 3],
                                  cond[7 * i + 4], cond[7 * i + 5], cond[7 * i + 6]};
      ep.actions[i] = {actions[4 * i], actions[4 * i + 1], actions[4 * i + 2], actions[4 * i + 3]};
    }
    for (std::size_t r = 0; r + 7 <= boxes.size(); r += 7) {
      const auto idx = static_cast<std::size_t>(boxes[r]);
      if (idx >= n) throw IoError("box row references a missing frame");
      ep.frames[idx].boxes.push_back(
          {static_cast<int>(boxes[r + 1]), boxes[r + 2], boxes[r + 3], boxes[r + 4], boxes[r + 5], boxes[r + 6]});
    }
    if (load_views && file.nameExists("views")) {
      std::vector<hsize_t> dims;
      const auto pixels = read_array<std::uint8_t>(file, "views", H5::PredType::NATIVE_UINT8, &dims);
      if (dims.size() != 5 || dims[0] != n || dims[4] != 3) throw IoError("views dataset has a bad shape");
      const auto v = dims[1], h = dims[2], w = dims[3];
      for (std::size_t i = 0; i < n; ++i) {
        for (hsize_t k = 0; k < v; ++k) {
          Image img(static_cast<int>(w), static_cast<int>(h));
          const auto offset = (i * v + k) * h * w * 3;
          std::copy(pixels.begin() + offset, pixels.begin() + offset + h * w * 3, img.pixels.begin());
          ep.frames[i].views.push_back(std::move(img));
        }
      }
    }
  } catch (const H5::Exception& e) {
    throw IoError("reading " + path.string() + ": " + e.getDetailMsg());
  } catch (const json::exception& e) {
    throw IoError("reading " + path.string() + ": " + e.what());
  }
  return ep;
}

}  // namespace graspdp
