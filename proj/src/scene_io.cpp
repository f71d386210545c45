#include "vru/trajdata.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace vru
{

namespace
{

using nlohmann::json;

constexpr const char * kEventKeys[] = {"transition_start", "transition_end", "heel_off", "heel_down"};

std::optional<double> * event_slot(SceneEvents & ev, std::string_view key)
{
  if (key == "transition_start") return &ev.transition_start;
  if (key == "transition_end") return &ev.transition_end;
  if (key == "heel_off") return &ev.heel_off;
  if (key == "heel_down") return &ev.heel_down;
  return nullptr;
}

const std::optional<double> & event_slot(const SceneEvents & ev, std::string_view key)
{
  return *event_slot(const_cast<SceneEvents &>(ev), key);
}

std::string format_double(double v)
{
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::size_t line, const char * field)
{
  double value = 0.0;
  const auto * first = text.data();
  const auto * last = text.data() + text.size();
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ParseError(line, std::string("invalid number in field '") + field + "': '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string_view> split_csv(std::string_view line)
{
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

void strip_cr(std::string & line)
{
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
}

Scene scene_from_json(const json & j, std::size_t line)
{
  Scene scene;
  try {
    scene.id = j.at("scene_id").get<std::string>();
    scene.scene_class = parse_motion_state(j.at("scene_class").get<std::string>());
    scene.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    const auto t = j.at("t").get<std::vector<double>>();
    const auto x = j.at("x").get<std::vector<double>>();
    const auto y = j.at("y").get<std::vector<double>>();
    if (x.size() != t.size() || y.size() != t.size()) {
      throw ParseError(line, "scene '" + scene.id + "': t, x, y lengths differ");
    }
    scene.trajectory.t = t;
    scene.trajectory.position.reserve(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      scene.trajectory.position.emplace_back(x[k], y[k]);
    }
    for (const auto & s : j.at("state")) {
      scene.labels.push_back(parse_motion_state(s.get<std::string>()));
    }
    if (auto it = j.find("events"); it != j.end() && !it->is_null()) {
      for (const auto & [key, value] : it->items()) {
        auto * slot = event_slot(scene.events, key);
        if (slot == nullptr) {
          throw ParseError(line, "unknown event key '" + key + "'");
        }
        if (!value.is_null()) {
          *slot = value.get<double>();
        }
      }
    }
  } catch (const ParseError &) {
    throw;
  } catch (const ParameterError & e) {
    throw ParseError(line, e.what());
  } catch (const json::exception & e) {
    throw ParseError(line, e.what());
  }
  return scene;
}

json scene_to_json(const Scene & scene)
{
  json j;
  j["scene_id"] = scene.id;
  j["scene_class"] = std::string(to_string(scene.scene_class));
  j["sample_rate_hz"] = scene.sample_rate_hz;
  std::vector<double> x, y;
  for (const auto & p : scene.trajectory.position) {
    x.push_back(p.x());
    y.push_back(p.y());
  }
  j["t"] = scene.trajectory.t;
  j["x"] = x;
  j["y"] = y;
  std::vector<std::string> states;
  for (auto s : scene.labels) {
    states.emplace_back(to_string(s));
  }
  j["state"] = states;
  if (!scene.events.empty()) {
    json ev = json::object();
    for (const char * key : kEventKeys) {
      if (const auto & v = event_slot(scene.events, key)) {
        ev[key] = *v;
      }
    }
    j["events"] = ev;
  }
  return j;
}

}  // namespace

SceneFormat scene_format_from_path(const std::filesystem::path & path)
{
  const auto ext = path.extension().string();
  if (ext == ".csv") {
    return SceneFormat::Csv;
  }
  return SceneFormat::Jsonl;
}

std::vector<Scene> read_scenes_jsonl(std::istream & in)
{
  std::vector<Scene> scenes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error & e) {
      throw ParseError(line_no, e.what());
    }
    scenes.push_back(scene_from_json(j, line_no));
    scenes.back().validate();
  }
  return scenes;
}

void write_scenes_jsonl(std::ostream & out, std::span<const Scene> scenes)
{
  for (const auto & scene : scenes) {
    out << scene_to_json(scene).dump() << '\n';
  }
}

std::filesystem::path csv_sidecar_path(const std::filesystem::path & csv_path)
{
  auto sidecar = csv_path;
  sidecar.replace_extension();
  sidecar += ".events.csv";
  return sidecar;
}

std::vector<Scene> read_scenes_csv(std::istream & rows, std::istream & sidecar)
{
  struct Meta
  {
    MotionState scene_class;
    double sample_rate_hz;
    SceneEvents events;
  };
  std::map<std::string, Meta, std::less<>> meta;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> event_columns;
  while (std::getline(sidecar, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv(line);
    if (line_no == 1) {
      if (fields.size() < 3 || fields[0] != "scene_id" || fields[1] != "scene_class" ||
          fields[2] != "sample_rate_hz") {
        throw ParseError(line_no, "sidecar header must start with scene_id,scene_class,sample_rate_hz");
      }
      for (std::size_t i = 3; i < fields.size(); ++i) {
        SceneEvents probe;
        if (event_slot(probe, fields[i]) == nullptr) {
          throw ParseError(line_no, "unknown event column '" + std::string(fields[i]) + "'");
        }
        event_columns.emplace_back(fields[i]);
      }
      continue;
    }
    if (fields.size() != 3 + event_columns.size()) {
      throw ParseError(line_no, "sidecar row has " + std::to_string(fields.size()) + " fields");
    }
    Meta m{};
    try {
      m.scene_class = parse_motion_state(fields[1]);
    } catch (const ParameterError & e) {
      throw ParseError(line_no, e.what());
    }
    m.sample_rate_hz = parse_double(fields[2], line_no, "sample_rate_hz");
    for (std::size_t i = 0; i < event_columns.size(); ++i) {
      if (!fields[3 + i].empty()) {
        *event_slot(m.events, event_columns[i]) = parse_double(fields[3 + i], line_no, event_columns[i].c_str());
      }
    }
    meta.emplace(std::string(fields[0]), m);
  }

  std::vector<Scene> scenes;
  line_no = 0;
  while (std::getline(rows, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv(line);
    if (line_no == 1) {
      if (line != "scene_id,t,x,y,state") {
        throw ParseError(line_no, "expected header scene_id,t,x,y,state");
      }
      continue;
    }
    if (fields.size() != 5) {
      throw ParseError(line_no, "expected 5 fields, got " + std::to_string(fields.size()));
    }
    if (scenes.empty() || scenes.back().id != fields[0]) {
      for (const auto & s : scenes) {
        if (s.id == fields[0]) {
          throw ParseError(line_no, "rows of scene '" + s.id + "' are not contiguous");
        }
      }
      auto it = meta.find(fields[0]);
      if (it == meta.end()) {
        throw ParseError(line_no, "scene '" + std::string(fields[0]) + "' missing from sidecar");
      }
      Scene scene;
      scene.id = std::string(fields[0]);
      scene.scene_class = it->second.scene_class;
      scene.sample_rate_hz = it->second.sample_rate_hz;
      scene.events = it->second.events;
      scenes.push_back(std::move(scene));
    }
    auto & scene = scenes.back();
    scene.trajectory.t.push_back(parse_double(fields[1], line_no, "t"));
    scene.trajectory.position.emplace_back(
      parse_double(fields[2], line_no, "x"), parse_double(fields[3], line_no, "y"));
    try {
      scene.labels.push_back(parse_motion_state(fields[4]));
    } catch (const ParameterError & e) {
      throw ParseError(line_no, e.what());
    }
  }
  for (const auto & s : scenes) {
    s.validate();
  }
  return scenes;
}

void write_scenes_csv(std::ostream & rows, std::ostream & sidecar, std::span<const Scene> scenes)
{
  rows << "scene_id,t,x,y,state\n";
  sidecar << "scene_id,scene_class,sample_rate_hz";
  for (const char * key : kEventKeys) {
    sidecar << ',' << key;
  }
  sidecar << '\n';
  for (const auto & scene : scenes) {
    for (std::size_t k = 0; k < scene.size(); ++k) {
      rows << scene.id << ',' << format_double(scene.trajectory.t[k]) << ','
           << format_double(scene.trajectory.position[k].x()) << ','
           << format_double(scene.trajectory.position[k].y()) << ',' << to_string(scene.labels[k]) << '\n';
    }
    sidecar << scene.id << ',' << to_string(scene.scene_class) << ',' << format_double(scene.sample_rate_hz);
    for (const char * key : kEventKeys) {
      sidecar << ',';
      if (const auto & v = event_slot(scene.events, key)) {
        sidecar << format_double(*v);
      }
    }
    sidecar << '\n';
  }
}

std::vector<Scene> load_scenes(const std::filesystem::path & path, SceneFormat format)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open scene file " + path.string());
  }
  if (format == SceneFormat::Jsonl) {
    return read_scenes_jsonl(in);
  }
  const auto sidecar_path = csv_sidecar_path(path);
  std::ifstream sidecar(sidecar_path);
  if (!sidecar) {
    throw std::runtime_error("cannot open scene sidecar " + sidecar_path.string());
  }
  return read_scenes_csv(in, sidecar);
}

std::vector<Scene> load_scenes(const std::filesystem::path & path)
{
  return load_scenes(path, scene_format_from_path(path));
}

void save_scenes(const std::filesystem::path & path, std::span<const Scene> scenes, SceneFormat format)
{
  // Write to a temporary next to the target, then rename.
  auto tmp = path;
  tmp += ".tmp";
  if (format == SceneFormat::Jsonl) {
    {
      std::ofstream out(tmp);
      if (!out) {
        throw std::runtime_error("cannot write " + tmp.string());
      }
      write_scenes_jsonl(out, scenes);
    }
    std::filesystem::rename(tmp, path);
    return;
  }
  const auto sidecar = csv_sidecar_path(path);
  auto sidecar_tmp = sidecar;
  sidecar_tmp += ".tmp";
  {
    std::ofstream rows(tmp);
    std::ofstream meta(sidecar_tmp);
    if (!rows || !meta) {
      throw std::runtime_error("cannot write " + tmp.string());
    }
    write_scenes_csv(rows, meta, scenes);
  }
  std::filesystem::rename(sidecar_tmp, sidecar);
  std::filesystem::rename(tmp, path);
}

void save_scenes(const std::filesystem::path & path, std::span<const Scene> scenes)
{
  save_scenes(path, scenes, scene_format_from_path(path));
}

}  // namespace vru
