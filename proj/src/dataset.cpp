#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "flowfuse/errors.hpp"
#include "flowfuse/flow_io.hpp"
#include "flowfuse/synth.hpp"

namespace flowfuse::synth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string numbered(const char* fmt, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, static_cast<int>(i));
  return buf;
}

json point_json(Point p) { return json::array({p.x, p.y}); }
Point point_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json motion_json(const Motion& m) {
  return {{"velocity", point_json(m.velocity)},
          {"acceleration", point_json(m.acceleration)},
          {"center", point_json(m.center)},
          {"degrees_per_frame", m.degrees_per_frame},
          {"scale_per_frame", m.scale_per_frame},
          {"change_frame", m.change_frame},
          {"velocity_after", point_json(m.velocity_after)}};
}

Motion motion_from(const json& j) {
  Motion m;
  m.velocity = point_from(j.at("velocity"));
  m.acceleration = point_from(j.at("acceleration"));
  m.center = point_from(j.at("center"));
  m.degrees_per_frame = j.at("degrees_per_frame").get<double>();
  m.scale_per_frame = j.at("scale_per_frame").get<double>();
  m.change_frame = j.at("change_frame").get<int>();
  m.velocity_after = point_from(j.at("velocity_after"));
  return m;
}

json spec_json(const SceneSpec& s) {
  json layers = json::array();
  for (const Layer& l : s.layers) {
    layers.push_back({{"texture_seed", l.texture_seed},
                      {"shape", l.shape.kind == ShapeKind::kRect ? "rect" : "disc"},
                      {"bounds", json::array({l.shape.x0, l.shape.y0, l.shape.x1, l.shape.y1})},
                      {"depth", l.depth},
                      {"motion", motion_json(l.motion)}});
  }
  return {{"width", s.width},
          {"height", s.height},
          {"frames", s.frames},
          {"channels", s.channels},
          {"background_seed", s.background_seed},
          {"background", motion_json(s.background)},
          {"texture_smoothing", s.texture_smoothing},
          {"layers", layers}};
}

SceneSpec spec_from(const json& j) {
  SceneSpec s;
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  s.frames = j.at("frames").get<int>();
  s.channels = j.at("channels").get<int>();
  s.background_seed = j.at("background_seed").get<std::uint64_t>();
  s.background = motion_from(j.at("background"));
  s.texture_smoothing = j.at("texture_smoothing").get<int>();
  for (const json& lj : j.at("layers")) {
    Layer l;
    l.texture_seed = lj.at("texture_seed").get<std::uint64_t>();
    const std::string kind = lj.at("shape").get<std::string>();
    if (kind != "rect" && kind != "disc") throw std::runtime_error("unknown layer shape '" + kind + "'");
    const json& b = lj.at("bounds");
    l.shape = {kind == "rect" ? ShapeKind::kRect : ShapeKind::kDisc, b.at(0).get<double>(),
               b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
    l.depth = lj.at("depth").get<int>();
    l.motion = motion_from(lj.at("motion"));
    s.layers.push_back(l);
  }
  return s;
}

}  // namespace

fs::path sequence_dir(const fs::path& root, std::size_t index) {
  return root / numbered("seq_%04d", index);
}

void write_sequence(const fs::path& dir, const SequenceSample& sample) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < sample.frames.size(); ++i) {
    write_png(dir / numbered("frame_%02d.png", i), sample.frames[i], 16);
  }
  for (std::size_t i = 0; i < sample.gt_fwd.size(); ++i) {
    write_flo(dir / numbered("flow_fwd_%02d.flo", i), sample.gt_fwd[i]);
    write_flo(dir / numbered("flow_bwd_%02d.flo", i), sample.gt_bwd[i]);
    write_mask_png(dir / numbered("occ_%02d.png", i), sample.occlusion[i]);
  }
}

SequenceSample read_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw FormatError(FormatError::Kind::kIo, "sequence directory not found: " + dir.string());
  }
  SequenceSample s;
  for (std::size_t i = 0;; ++i) {
    const fs::path p = dir / numbered("frame_%02d.png", i);
    if (!fs::exists(p)) break;
    s.frames.push_back(read_image(p));
  }
  if (s.frames.size() < 2) {
    throw FormatError(FormatError::Kind::kTruncated, "sequence has fewer than 2 frames: " + dir.string());
  }
  for (std::size_t i = 0; i + 1 < s.frames.size(); ++i) {
    s.gt_fwd.push_back(read_flo(dir / numbered("flow_fwd_%02d.flo", i)));
    s.gt_bwd.push_back(read_flo(dir / numbered("flow_bwd_%02d.flo", i)));
    s.occlusion.push_back(read_mask_png(dir / numbered("occ_%02d.png", i)));
  }
  return s;
}

void write_manifest(const fs::path& path, const std::vector<DatasetEntry>& entries) {
  json list = json::array();
  for (const DatasetEntry& e : entries) {
    list.push_back({{"index", e.index}, {"seed", e.seed}, {"split", e.split}, {"spec", spec_json(e.spec)}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  out << json{{"version", 1}, {"sequences", list}}.dump(2) << '\n';
}

std::vector<DatasetEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, "manifest not found: " + path.string());
  std::vector<DatasetEntry> entries;
  try {
    const json doc = json::parse(in);
    for (const json& j : doc.at("sequences")) {
      DatasetEntry e;
      e.index = j.at("index").get<std::size_t>();
      e.seed = j.at("seed").get<std::uint64_t>();
      e.split = j.at("split").get<std::string>();
      e.spec = spec_from(j.at("spec"));
      entries.push_back(std::move(e));
    }
  } catch (const json::exception& err) {
    throw FormatError(FormatError::Kind::kUnsupported,
                      "malformed manifest " + path.string() + ": " + err.what());
  }
  return entries;
}

std::vector<SequenceSample> load_split(const fs::path& root, const std::string& split) {
  std::vector<SequenceSample> out;
  for (const DatasetEntry& e : read_manifest(root / "manifest.json")) {
    if (split.empty() || e.split == split) out.push_back(read_sequence(sequence_dir(root, e.index)));
  }
  return out;
}

}  // namespace flowfuse::synth
