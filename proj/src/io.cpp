#include "snerf/io.hpp"

#include "snerf/errors.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace snerf::io {

namespace {

// Explicit little-endian encoding so files are portable across hosts.
void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xffu);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xffu);
  os.write(b, 8);
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_bytes(std::istream& is, int n, const fs::path& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), n)) throw FormatError("truncated file: " + path.string());
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& is, const fs::path& p) { return std::uint32_t(get_bytes(is, 4, p)); }
std::uint64_t get_u64(std::istream& is, const fs::path& p) { return get_bytes(is, 8, p); }
float get_f32(std::istream& is, const fs::path& p) { return std::bit_cast<float>(get_u32(is, p)); }
double get_f64(std::istream& is, const fs::path& p) { return std::bit_cast<double>(get_u64(is, p)); }

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingAssetError("missing file: " + path.string());
  return is;
}

void check_magic(std::istream& is, const char (&magic)[4], const fs::path& path) {
  char m[4];
  if (!is.read(m, 4) || std::memcmp(m, magic, 4) != 0) throw FormatError("bad magic in " + path.string());
}

json vec_json(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Vector3d json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
    case ShapeKind::ground_plane: return "ground_plane";
  }
  return "?";
}

ShapeKind parse_shape(const std::string& s) {
  if (s == "sphere") return ShapeKind::sphere;
  if (s == "box") return ShapeKind::box;
  if (s == "ground_plane") return ShapeKind::ground_plane;
  throw FormatError("unknown shape '" + s + "'");
}

constexpr char kCheckpointMagic[4] = {'S', 'N', 'C', 'K'};

}  // namespace

void write_raw(const fs::path& path, const ImageT<float>& img) {
  auto os = open_out(path);
  os.write(kRawMagic, 4);
  put_u32(os, std::uint32_t(img.height()));
  put_u32(os, std::uint32_t(img.width()));
  put_u32(os, std::uint32_t(img.channels()));
  const auto& px = img.pixels();
  for (Index i = 0; i < px.rows(); ++i)
    for (Index c = 0; c < px.cols(); ++c) put_f32(os, px(i, c));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ImageT<float> read_raw(const fs::path& path) {
  auto is = open_in(path);
  check_magic(is, kRawMagic, path);
  const auto h = get_u32(is, path), w = get_u32(is, path), c = get_u32(is, path);
  if (c == 0 || h > (1u << 16) || w > (1u << 16) || c > 64) throw FormatError("bad raw header: " + path.string());
  ImageT<float> img{int(h), int(w), int(c)};
  auto& px = img.pixels();
  for (Index i = 0; i < px.rows(); ++i)
    for (Index k = 0; k < px.cols(); ++k) px(i, k) = get_f32(is, path);
  return img;
}

void write_png(const fs::path& path, const ImageBuffer& img) {
  if (img.channels() != 3 && img.channels() != 1) throw std::invalid_argument("write_png: need 1 or 3 channels");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  const int w = img.width(), h = img.height();
  std::vector<png_byte> rows(std::size_t(h) * w * 3);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const float v = img(r, c, img.channels() == 3 ? ch : 0);
        const float cl = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
        rows[(std::size_t(r) * w + c) * 3 + ch] = png_byte(std::lround(cl * 255.0f));
      }
  std::vector<png_bytep> ptrs(static_cast<std::size_t>(h));
  for (int r = 0; r < h; ++r) ptrs[std::size_t(r)] = rows.data() + std::size_t(r) * w * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageBuffer read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!fs::exists(path)) throw MissingAssetError("missing file: " + path.string());
  if (!png_image_begin_read_from_file(&image, path.c_str())) throw FormatError("not a PNG: " + path.string());
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError("PNG decode failed: " + path.string());
  }
  ImageBuffer img(int(image.height), int(image.width), 3);
  for (Index i = 0; i < img.size(); ++i)
    for (int ch = 0; ch < 3; ++ch) img.pixels()(i, ch) = float(buf[std::size_t(i) * 3 + ch]) / 255.0f;
  return img;
}

void write_mask(const fs::path& path, const Mask& mask) {
  ImageT<float> m(mask.height, mask.width, 1);
  for (std::size_t i = 0; i < mask.values.size(); ++i) m.pixels()(Index(i), 0) = mask.values[i] ? 1.0f : 0.0f;
  write_raw(path, m);
}

Mask read_mask(const fs::path& path) {
  const auto m = read_raw(path);
  if (m.channels() != 1) throw FormatError("mask must have one channel: " + path.string());
  Mask out(m.height(), m.width(), false);
  for (Index i = 0; i < m.size(); ++i) out.values[std::size_t(i)] = m.pixels()(i, 0) > 0.5f ? 1 : 0;
  return out;
}

static std::string pair_name(const char* prefix, int i, int j) {
  return std::string(prefix) + "_" + std::to_string(i) + "_" + std::to_string(j) + ".raw";
}

void write_flow(const fs::path& dir, int i, int j, const FlowField& flow) {
  write_raw(dir / pair_name("flow", i, j), flow.flow);
  write_mask(dir / pair_name("mask", i, j), flow.visible);
}

FlowField read_flow(const fs::path& dir, int i, int j) {
  FlowField f;
  f.flow = read_raw(dir / pair_name("flow", i, j));
  f.visible = read_mask(dir / pair_name("mask", i, j));
  if (f.flow.channels() != 2 || f.visible.height != f.flow.height() || f.visible.width != f.flow.width())
    throw FormatError("inconsistent flow files for pair " + std::to_string(i) + "," + std::to_string(j));
  return f;
}

json to_json(const CameraModel& cam) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) rot.push_back(json::array({cam.rotation(r, 0), cam.rotation(r, 1), cam.rotation(r, 2)}));
  return {{"focal", cam.focal},
          {"width", cam.width},
          {"height", cam.height},
          {"rotation", rot},
          {"translation", vec_json(cam.translation)}};
}

CameraModel camera_from_json(const json& j) {
  CameraModel cam;
  try {
    cam.focal = j.at("focal").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const auto& rot = j.at("rotation");
    if (!rot.is_array() || rot.size() != 3) throw FormatError("rotation must be 3x3");
    for (int r = 0; r < 3; ++r) cam.rotation.row(r) = json_vec(rot[std::size_t(r)]).transpose();
    cam.translation = json_vec(j.at("translation"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("camera: ") + e.what());
  }
  cam.validate();
  return cam;
}

json to_json(const SceneDescription& scene) {
  json prims = json::array();
  for (const auto& p : scene.primitives)
    prims.push_back({{"shape", shape_name(p.shape)},
                     {"center", vec_json(p.center)},
                     {"size", vec_json(p.size)},
                     {"albedo", vec_json(p.albedo)}});
  return {{"version", kSceneVersion},
          {"primitives", prims},
          {"background_color", vec_json(scene.background_color)},
          {"bounds", {{"lo", vec_json(scene.bounds.lo)}, {"hi", vec_json(scene.bounds.hi)}}},
          {"light", vec_json(scene.light)},
          {"ambient", scene.ambient}};
}

SceneDescription scene_from_json(const json& j) {
  SceneDescription s;
  try {
    const int version = j.at("version").get<int>();
    if (version != kSceneVersion) throw FormatError("unsupported scene version " + std::to_string(version));
    for (const auto& p : j.at("primitives")) {
      Primitive prim;
      prim.shape = parse_shape(p.at("shape").get<std::string>());
      prim.center = json_vec(p.at("center"));
      prim.size = json_vec(p.at("size"));
      prim.albedo = json_vec(p.at("albedo"));
      s.primitives.push_back(prim);
    }
    s.background_color = json_vec(j.at("background_color"));
    s.bounds.lo = json_vec(j.at("bounds").at("lo"));
    s.bounds.hi = json_vec(j.at("bounds").at("hi"));
    s.light = json_vec(j.at("light"));
    s.ambient = j.at("ambient").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("scene: ") + e.what());
  }
  s.validate();
  return s;
}

void write_scene(const fs::path& path, const SceneDescription& scene) {
  write_text(path, to_json(scene).dump(2) + "\n");
}

SceneDescription read_scene(const fs::path& path) { return scene_from_json(read_json(path)); }

void write_cameras(const fs::path& path, const std::vector<CameraModel>& cams) {
  json arr = json::array();
  for (const auto& c : cams) arr.push_back(to_json(c));
  write_text(path, json{{"version", 1}, {"cameras", arr}}.dump(2) + "\n");
}

std::vector<CameraModel> read_cameras(const fs::path& path) {
  const json j = read_json(path);
  std::vector<CameraModel> out;
  if (!j.contains("cameras")) throw FormatError("camera file without 'cameras': " + path.string());
  for (const auto& c : j["cameras"]) out.push_back(camera_from_json(c));
  return out;
}

void write_checkpoint(const fs::path& path, const Field& field) {
  auto os = open_out(path);
  os.write(kCheckpointMagic, 4);
  put_u32(os, kCheckpointVersion);
  const auto& a = field.architecture();
  for (int v : {a.pos_levels, a.dir_levels, a.trunk_depth, a.trunk_width, a.rgb_width}) put_u32(os, std::uint32_t(v));
  for (int k = 0; k < 3; ++k) put_f64(os, field.bounds().lo[k]);
  for (int k = 0; k < 3; ++k) put_f64(os, field.bounds().hi[k]);
  put_u64(os, std::uint64_t(field.parameter_count()));
  for (Index i = 0; i < field.parameter_count(); ++i) put_f32(os, field.parameters()[i]);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Field read_checkpoint(const fs::path& path) {
  auto is = open_in(path);
  check_magic(is, kCheckpointMagic, path);
  const auto version = get_u32(is, path);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported: " + path.string());
  FieldArchitecture a;
  a.pos_levels = int(get_u32(is, path));
  a.dir_levels = int(get_u32(is, path));
  a.trunk_depth = int(get_u32(is, path));
  a.trunk_width = int(get_u32(is, path));
  a.rgb_width = int(get_u32(is, path));
  Bounds b;
  for (int k = 0; k < 3; ++k) b.lo[k] = get_f64(is, path);
  for (int k = 0; k < 3; ++k) b.hi[k] = get_f64(is, path);
  const auto n = get_u64(is, path);
  if (n > (std::uint64_t(1) << 28)) throw FormatError("implausible parameter count in " + path.string());
  VectorX<float> params(static_cast<Index>(n));
  for (Index i = 0; i < params.size(); ++i) params[i] = get_f32(is, path);
  Field f;
  try {
    f.assign(a, b, std::move(params));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint ") + path.string() + ": " + e.what());
  }
  return f;
}

Field read_checkpoint(const fs::path& path, const FieldArchitecture& expected) {
  Field f = read_checkpoint(path);
  if (!(f.architecture() == expected))
    throw FormatError("checkpoint architecture differs from the configured one: " + path.string());
  return f;
}

std::string sha256_file(const fs::path& path) {
  auto is = open_in(path);
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), std::streamsize(buf.size()));
    if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), std::size_t(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

void write_text(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

json file_manifest(const fs::path& root, const std::vector<fs::path>& files) {
  json arr = json::array();
  for (const auto& f : files) {
    arr.push_back({{"path", fs::relative(f, root).generic_string()}, {"sha256", sha256_file(f)}});
  }
  return {{"version", 1}, {"files", arr}};
}

}  // namespace snerf::io
