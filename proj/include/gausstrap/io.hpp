#pragma once

// File formats: scene text files, camera manifests, PNG images, CSV
// reports, key=value configs, and the synthetic-NeRF transforms layout.
// Every write goes to a temporary file that is renamed into place.

#include <gausstrap/gaussian_model.hpp>
#include <gausstrap/image.hpp>
#include <gausstrap/losses.hpp>
#include <gausstrap/training.hpp>

#include <nlohmann/json.hpp>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gausstrap {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void atomic_write(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

inline void save_scene(const Scene& scene, const fs::path& path) { atomic_write(path, serialize_scene(scene)); }

inline Scene load_scene(const fs::path& path, double extent = 1.0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file " + path.string());
  try {
    return parse_scene(in, extent);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

// ---------------------------------------------------------------------------
// PNG, 8-bit RGB, values treated as linear
// ---------------------------------------------------------------------------

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

/// Rounds every channel to the nearest 8-bit level, as a PNG round trip would.
inline Image quantize8(Image img) {
  for (double& v : img.data) v = to_byte(v) / 255.0;
  return img;
}

namespace detail {

struct PngWriteBuffer {
  std::string bytes;
};

inline void png_append(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->bytes.append(reinterpret_cast<const char*>(data), len);
}

inline void png_flush_noop(png_structp) {}

}  // namespace detail

inline std::string encode_png(const Image& img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: cannot create info struct");
  }
  detail::PngWriteBuffer buf;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encoding failed");
  }
  png_set_write_fn(png, &buf, detail::png_append, detail::png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width * 3; ++x) row[x] = to_byte(img.data[static_cast<std::size_t>(y) * img.width * 3 + x]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(buf.bytes);
}

inline void write_png(const fs::path& path, const Image& img) { atomic_write(path, encode_png(img)); }

/// Decodes any PNG to RGB in [0,1]; an alpha channel is composited over `background`.
inline Image read_png(const fs::path& path, Rgb background = {1.0, 1.0, 1.0}) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.string().c_str(), "rb"), &std::fclose);
  if (!file) throw IoError("cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png: cannot create info struct");
  }
  Image img;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: cannot decode " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_gray_to_rgb(png);
  png_set_add_alpha(png, 0xff, PNG_FILLER_AFTER);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  pixels.resize(static_cast<std::size_t>(w) * h * 4);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * 4;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image(w, h);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const double a = pixels[p * 4 + 3] / 255.0;
    for (int c = 0; c < 3; ++c) {
      const double v = pixels[p * 4 + c] / 255.0;
      img.data[p * 3 + c] = a == 1.0 ? v : a * v + (1.0 - a) * background[c];
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Camera manifests: one camera per row,
// R00..R22 T0 T1 T2 width height fx fy cx cy near
// ---------------------------------------------------------------------------

inline constexpr const char* kCameraManifestHeader =
    "# r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2 width height fx fy cx cy near";

inline std::string serialize_cameras(const std::vector<Camera>& cams) {
  std::string out = std::string(kCameraManifestHeader) + "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
  };
  for (const Camera& c : cams) {
    for (double v : c.rotation.m) {
      put(v);
      out += ' ';
    }
    put(c.translation.x);
    out += ' ';
    put(c.translation.y);
    out += ' ';
    put(c.translation.z);
    out += ' ' + std::to_string(c.width) + ' ' + std::to_string(c.height) + ' ';
    put(c.fx);
    out += ' ';
    put(c.fy);
    out += ' ';
    put(c.cx);
    out += ' ';
    put(c.cy);
    out += ' ';
    put(c.near);
    out += '\n';
  }
  return out;
}

inline std::vector<Camera> parse_cameras(std::istream& in) {
  std::vector<Camera> cams;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto v = detail::parse_reals(line, line_no);
    if (v.size() != 19) throw ParseError("camera row needs 19 values, found " + std::to_string(v.size()), line_no);
    Camera c;
    for (int k = 0; k < 9; ++k) c.rotation.m[k] = v[k];
    c.translation = {v[9], v[10], v[11]};
    c.width = static_cast<int>(v[12]);
    c.height = static_cast<int>(v[13]);
    c.fx = v[14];
    c.fy = v[15];
    c.cx = v[16];
    c.cy = v[17];
    c.near = v[18];
    try {
      validate(c);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_no);
    }
    cams.push_back(c);
  }
  return cams;
}

inline void save_cameras(const std::vector<Camera>& cams, const fs::path& path) {
  atomic_write(path, serialize_cameras(cams));
}

inline std::vector<Camera> load_cameras(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open camera manifest " + path.string());
  try {
    return parse_cameras(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

// ---------------------------------------------------------------------------
// Datasets on disk: <dir>/cameras_<split>.txt and <dir>/<split>/NNNN.png
// ---------------------------------------------------------------------------

inline std::string image_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu.png", i);
  return buf;
}

/// Renders one split of a dataset to disk and returns the in-memory renders.
inline ViewDataset render_dataset(const Scene& reference, const std::vector<Camera>& cameras, Rgb background,
                                  const fs::path& dir, const std::string& split) {
  ViewDataset views;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    views.push_back({cameras[i], render(reference, cameras[i], background)});
    write_png(dir / split / image_name(i), views.back().image);
  }
  save_cameras(cameras, dir / ("cameras_" + split + ".txt"));
  return views;
}

inline ViewDataset load_dataset(const fs::path& dir, const std::string& split) {
  const auto cams = load_cameras(dir / ("cameras_" + split + ".txt"));
  ViewDataset views;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    Image img = read_png(dir / split / image_name(i));
    if (img.width != cams[i].width || img.height != cams[i].height)
      throw IoError(split + " image " + std::to_string(i) + " does not match its camera resolution");
    views.push_back({cams[i], std::move(img)});
  }
  return views;
}

// ---------------------------------------------------------------------------
// Synthetic-NeRF layout: transforms_<split>.json with camera_angle_x and
// per-frame 4x4 camera-to-world matrices next to the image files.
// ---------------------------------------------------------------------------

enum class NerfAxes {
  AsStored,  // invert the stored matrix as is
  OpenGL,    // stored camera axes are x right, y up, z backward; flip y and z first
};

struct NerfFrames {
  std::vector<Camera> cameras;
  std::vector<Image> images;
};

inline NerfFrames load_nerf_synthetic(const fs::path& transforms_file, NerfAxes axes = NerfAxes::AsStored,
                                      Rgb background = {1.0, 1.0, 1.0}) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(read_file(transforms_file));
  } catch (const json::exception& e) {
    throw IoError(transforms_file.string() + ": " + e.what());
  }
  if (!doc.contains("camera_angle_x") || !doc["camera_angle_x"].is_number())
    throw IoError(transforms_file.string() + ": missing camera_angle_x");
  if (!doc.contains("frames") || !doc["frames"].is_array() || doc["frames"].empty())
    throw IoError(transforms_file.string() + ": missing frames");
  const double fov_x = doc["camera_angle_x"].get<double>();
  const fs::path base = transforms_file.parent_path();

  NerfFrames out;
  for (std::size_t i = 0; i < doc["frames"].size(); ++i) {
    const json& frame = doc["frames"][i];
    const std::string where = "frame " + std::to_string(i);
    if (!frame.contains("file_path") || !frame["file_path"].is_string()) throw IoError(where + ": missing file_path");
    const json& m = frame.value("transform_matrix", json());
    if (!m.is_array() || m.size() != 4) throw IoError(where + ": transform_matrix must be 4x4");
    double c2w[4][4];
    for (int r = 0; r < 4; ++r) {
      if (!m[r].is_array() || m[r].size() != 4) throw IoError(where + ": transform_matrix must be 4x4");
      for (int c = 0; c < 4; ++c) {
        if (!m[r][c].is_number()) throw IoError(where + ": non-numeric matrix entry");
        c2w[r][c] = m[r][c].get<double>();
      }
    }
    if (axes == NerfAxes::OpenGL)
      for (int r = 0; r < 3; ++r) {
        c2w[r][1] = -c2w[r][1];
        c2w[r][2] = -c2w[r][2];
      }
    Mat3 rc2w;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rc2w(r, c) = c2w[r][c];
    if (!is_rotation(rc2w, 1e-6)) throw IoError(where + ": rotation block is not a rotation");

    fs::path image_path = base / frame["file_path"].get<std::string>();
    if (!image_path.has_extension()) image_path += ".png";
    if (!fs::exists(image_path)) throw IoError(where + ": missing image " + image_path.string());
    Image img = read_png(image_path, background);

    Camera cam;
    cam.width = img.width;
    cam.height = img.height;
    cam.fx = cam.fy = focal_from_fov(fov_x, img.width);
    cam.cx = 0.5 * img.width;
    cam.cy = 0.5 * img.height;
    cam.rotation = rc2w.transposed();
    cam.translation = -(cam.rotation * Vec3{c2w[0][3], c2w[1][3], c2w[2][3]});
    out.cameras.push_back(cam);
    out.images.push_back(std::move(img));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV reports
// ---------------------------------------------------------------------------

inline std::string fmt_real(double v, int digits = 10) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string metrics_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "group,view_id,psnr_db,ssim\n";
  for (const auto& r : reports)
    for (const auto& v : r.views) out += r.group + "," + v.view_id + "," + fmt_real(v.psnr_db) + "," + fmt_real(v.ssim) + "\n";
  return out;
}

inline std::string summary_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "group,views,mean_psnr_db,mean_ssim\n";
  for (const auto& r : reports)
    out += r.group + "," + std::to_string(r.views.size()) + "," + fmt_real(r.mean_psnr) + "," + fmt_real(r.mean_ssim) + "\n";
  return out;
}

inline std::string loss_log_csv(const std::vector<LossRecord>& log) {
  std::string out = "epoch,phase,mean_loss\n";
  for (const auto& r : log) out += std::to_string(r.epoch) + "," + r.phase + "," + fmt_real(r.mean_loss) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// key = value configuration
// ---------------------------------------------------------------------------

/// Lower-cases nothing; maps '-' to '_' so CLI flag spellings match keys.
inline std::string normalize_key(std::string key) {
  while (!key.empty() && key.front() == '-') key.erase(key.begin());
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

inline std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("invalid number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

inline Rgb parse_background(const std::string& text) {
  if (text == "white") return {1, 1, 1};
  if (text == "black") return {0, 0, 0};
  const auto v = parse_real_list(text);
  if (v.size() != 3) throw std::invalid_argument("background must be white, black or r,g,b");
  return {v[0], v[1], v[2]};
}

inline bool parse_bool(const std::string& text) {
  if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "off" || text == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + text + "'");
}

/// Names of every TrainConfig key accepted by set_config_value.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "lambda",           "epochs",         "ta",               "ts",              "tt",
      "tr",               "densify_budget", "densify_interval", "densify_from",    "densify_attack",
      "densify_stab",     "densify_normal", "angles",           "constraint_angle", "lr_mean",
      "lr_scale",         "lr_rotation",    "lr_color",         "lr_opacity",      "grad_threshold",
      "opacity_threshold", "percent_dense", "epsilon",          "seed",            "background",
      "checkpoint_every"};
  return keys;
}

/// Returns false for unknown keys; throws on malformed values.
inline bool set_config_value(TrainConfig& c, const std::string& raw_key, const std::string& value) {
  const std::string key = normalize_key(raw_key);
  auto as_int = [&] { return std::stoi(value); };
  auto as_real = [&] { return std::stod(value); };
  if (key == "lambda") c.lambda = as_real();
  else if (key == "epochs") c.epochs = as_int();
  else if (key == "ta") c.attack_iters = as_int();
  else if (key == "ts") c.stab_iters = as_int();
  else if (key == "tt") c.normal_iters = as_int();
  else if (key == "tr") c.rerender_iters = as_int();
  else if (key == "densify_budget") c.densify_budget = std::stol(value);
  else if (key == "densify_interval") c.densify_interval = as_int();
  else if (key == "densify_from") c.densify_from = as_int();
  else if (key == "densify_attack") c.densify_attack = parse_bool(value);
  else if (key == "densify_stab") c.densify_stab = parse_bool(value);
  else if (key == "densify_normal") c.densify_normal = parse_bool(value);
  else if (key == "angles") c.angles.degrees = parse_real_list(value);
  else if (key == "constraint_angle") c.constraint_angle = as_real();
  else if (key == "lr_mean") c.lr_mean = as_real();
  else if (key == "lr_scale") c.lr_scale = as_real();
  else if (key == "lr_rotation") c.lr_rotation = as_real();
  else if (key == "lr_color") c.lr_color = as_real();
  else if (key == "lr_opacity") c.lr_opacity = as_real();
  else if (key == "grad_threshold") c.grad_threshold = as_real();
  else if (key == "opacity_threshold") c.opacity_threshold = as_real();
  else if (key == "percent_dense") c.percent_dense = as_real();
  else if (key == "epsilon") c.epsilon = as_real();
  else if (key == "seed") c.seed = std::stoull(value);
  else if (key == "background") c.background = parse_background(value);
  else if (key == "checkpoint_every") c.checkpoint_every = as_int();
  else return false;
  return true;
}

/// Reads `key = value` lines; '#' starts a comment. Unknown keys are returned
/// so callers can handle manifest-level entries.
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    if (key.empty()) throw ParseError("empty key", line_no);
    out[normalize_key(key)] = value;
  }
  return out;
}

inline std::string serialize_config(const TrainConfig& c) {
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_real(v[i]);
    return s;
  };
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  kv("lambda", fmt_real(c.lambda));
  kv("epochs", std::to_string(c.epochs));
  kv("ta", std::to_string(c.attack_iters));
  kv("ts", std::to_string(c.stab_iters));
  kv("tt", std::to_string(c.normal_iters));
  kv("tr", std::to_string(c.rerender_iters));
  kv("densify_budget", std::to_string(c.densify_budget));
  kv("densify_interval", std::to_string(c.densify_interval));
  kv("densify_from", std::to_string(c.densify_from));
  kv("densify_attack", c.densify_attack ? "true" : "false");
  kv("densify_stab", c.densify_stab ? "true" : "false");
  kv("densify_normal", c.densify_normal ? "true" : "false");
  kv("angles", list(c.angles.degrees));
  kv("constraint_angle", fmt_real(c.constraint_angle));
  kv("lr_mean", fmt_real(c.lr_mean));
  kv("lr_scale", fmt_real(c.lr_scale));
  kv("lr_rotation", fmt_real(c.lr_rotation));
  kv("lr_color", fmt_real(c.lr_color));
  kv("lr_opacity", fmt_real(c.lr_opacity));
  kv("grad_threshold", fmt_real(c.grad_threshold));
  kv("opacity_threshold", fmt_real(c.opacity_threshold));
  kv("percent_dense", fmt_real(c.percent_dense));
  kv("epsilon", fmt_real(c.epsilon));
  kv("seed", std::to_string(c.seed));
  kv("background", fmt_real(c.background.x) + "," + fmt_real(c.background.y) + "," + fmt_real(c.background.z));
  kv("checkpoint_every", std::to_string(c.checkpoint_every));
  return out;
}

}  // namespace gausstrap
