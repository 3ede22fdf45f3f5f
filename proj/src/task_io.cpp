#include <filesystem>
#include <fstream>

#include "iftsplat/harness.hpp"
#include "json.hpp"

namespace iftsplat {

namespace fs = std::filesystem;
using nlohmann::json;

static const char* kB64Chars =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (size_t i = 0; i < bytes.size(); i += 3) {
    unsigned int v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    if (i + 2 < bytes.size()) v |= bytes[i + 2];
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kB64Chars[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kB64Chars[v & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  int lookup[256];
  std::fill(std::begin(lookup), std::end(lookup), -1);
  for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kB64Chars[i])] = i;
  std::vector<unsigned char> out;
  unsigned int buf = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = lookup[static_cast<unsigned char>(c)];
    if (v < 0) throw IoError("base64: invalid character");
    buf = (buf << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((buf >> bits) & 0xff));
    }
  }
  return out;
}

static json camera_to_json(const Camera& cam) {
  json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  std::vector<double> w2c(12);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) w2c[4 * r + c] = cam.rot.m[r][c];
    w2c[4 * r + 3] = r == 0 ? cam.trans.x : (r == 1 ? cam.trans.y : cam.trans.z);
  }
  j["world_to_cam"] = w2c;
  return j;
}

static Camera camera_from_json(const json& j) {
  Camera cam;
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  const auto w2c = j.at("world_to_cam").get<std::vector<double>>();
  if (w2c.size() != 12) throw IoError("camera: world_to_cam must have 12 entries");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rot.m[r][c] = w2c[4 * r + c];
  cam.trans = {w2c[3], w2c[7], w2c[11]};
  cam.validate();
  return cam;
}

static json view_to_json(const View& view, const std::string& json_path,
                         const std::string& image_name, bool embed) {
  json j;
  j["camera"] = camera_to_json(view.camera);
  if (embed) {
    j["image_b64"] = base64_encode(ppm_bytes(view.image));
  } else {
    const fs::path sidecar = fs::path(json_path).parent_path() / image_name;
    write_ppm(sidecar.string(), view.image);
    j["image"] = image_name;
  }
  return j;
}

static View view_from_json(const json& j, const std::string& json_path) {
  View view;
  view.camera = camera_from_json(j.at("camera"));
  if (j.contains("image_b64")) {
    view.image = ppm_from_bytes(base64_decode(j.at("image_b64").get<std::string>()));
  } else {
    const fs::path sidecar =
        fs::path(json_path).parent_path() / j.at("image").get<std::string>();
    view.image = read_ppm(sidecar.string());
  }
  if (view.image.width != view.camera.width || view.image.height != view.camera.height)
    throw IoError("task: image resolution does not match camera");
  return view;
}

void write_task(const std::string& json_path, const TaskInstance& task, const TaskSpec& spec,
                bool embed_images) {
  json j;
  j["id"] = task.id;
  j["spec"] = {{"num_gaussians", spec.num_gaussians},
               {"width", spec.width},
               {"height", spec.height},
               {"num_context", spec.num_context},
               {"num_novel", spec.num_novel},
               {"ring_radius", spec.ring_radius},
               {"camera_jitter", spec.camera_jitter},
               {"exposure_corruption", spec.exposure_corruption},
               {"seed", spec.seed},
               {"family_seed", spec.family_seed}};
  j["gt_params"] = json::parse(to_json(task.gt_params));
  const std::string stem = fs::path(json_path).stem().string();
  for (size_t i = 0; i < task.context.views.size(); ++i)
    j["context"].push_back(view_to_json(task.context.views[i], json_path,
                                        stem + "_ctx" + std::to_string(i) + ".ppm",
                                        embed_images));
  for (size_t i = 0; i < task.novel.views.size(); ++i)
    j["novel"].push_back(view_to_json(task.novel.views[i], json_path,
                                      stem + "_nov" + std::to_string(i) + ".ppm",
                                      embed_images));
  std::ofstream f(json_path);
  if (!f) throw IoError("cannot open for write: " + json_path);
  f << j.dump(2) << "\n";
}

TaskInstance read_task(const std::string& json_path) {
  std::ifstream f(json_path);
  if (!f) throw IoError("cannot open for read: " + json_path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError(std::string("task: malformed JSON: ") + e.what());
  }
  try {
    TaskInstance task;
    task.id = j.at("id").get<std::string>();
    task.gt_params = param_vector_from_json(j.at("gt_params").dump());
    for (const json& v : j.at("context")) task.context.views.push_back(view_from_json(v, json_path));
    for (const json& v : j.at("novel")) task.novel.views.push_back(view_from_json(v, json_path));
    return task;
  } catch (const json::exception& e) {
    throw IoError(std::string("task: malformed fields: ") + e.what());
  }
}

std::vector<TaskInstance> read_task_dir(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no task JSON files in " + dir);
  std::vector<TaskInstance> tasks;
  tasks.reserve(files.size());
  for (const std::string& f : files) tasks.push_back(read_task(f));
  return tasks;
}

}  // namespace iftsplat
