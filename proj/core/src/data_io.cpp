#include "pixelmap/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "pixelmap/errors.hpp"

namespace pixelmap {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_all_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

void push_i32_le(std::vector<std::uint8_t>& out, std::int32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint32_t>(v) >> (8 * i)) & 0xff));
}

constexpr char kMagic[4] = {'P', 'M', 'T', 'N'};
constexpr std::uint8_t kVersion = 1;
constexpr int kMaxRank = 4;

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  return read_all_bytes(path);
}

void write_file_bytes(const std::string& path,
                      const std::vector<std::uint8_t>& bytes) {
  write_all_bytes(path, bytes);
}

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f64: return 8;
    case Dtype::f32: return 4;
    case Dtype::u8: return 1;
    case Dtype::u16: return 2;
  }
  throw InputError("unknown dtype code");
}

void write_raw_tensor(const std::string& path, const RawTensor& t) {
  if (t.dims.empty() || static_cast<int>(t.dims.size()) > kMaxRank)
    throw InputError("tensor rank must be 1.." + std::to_string(kMaxRank));
  std::size_t numel = 1;
  for (int d : t.dims) {
    if (d < 1) throw InputError("tensor dims must be positive");
    numel *= static_cast<std::size_t>(d);
  }
  if (t.bytes.size() != numel * dtype_size(t.dtype))
    throw InputError("payload size does not match dims");

  std::vector<std::uint8_t> out;
  out.reserve(7 + 4 * t.dims.size() + t.bytes.size());
  for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (int d : t.dims) push_i32_le(out, d);
  out.insert(out.end(), t.bytes.begin(), t.bytes.end());
  write_all_bytes(path, out);
}

RawTensor read_raw_tensor(const std::string& path) {
  const auto b = read_all_bytes(path);
  auto need = [&](std::size_t upto) {
    if (b.size() < upto)
      throw FormatError("tensor file truncated", b.size());
  };
  need(4);
  for (int i = 0; i < 4; ++i)
    if (b[i] != static_cast<std::uint8_t>(kMagic[i]))
      throw FormatError("bad tensor magic", 0);
  need(7);
  if (b[4] != kVersion) throw FormatError("unsupported tensor version", 4);
  const std::uint8_t dt = b[5];
  if (dt < 1 || dt > 4) throw FormatError("unknown tensor dtype", 5);
  const int rank = b[6];
  if (rank < 1 || rank > kMaxRank) throw FormatError("tensor rank out of range", 6);

  RawTensor t;
  t.dtype = static_cast<Dtype>(dt);
  need(7 + 4 * static_cast<std::size_t>(rank));
  std::size_t numel = 1;
  for (int i = 0; i < rank; ++i) {
    const std::size_t off = 7 + 4 * static_cast<std::size_t>(i);
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(b[off + k]) << (8 * k);
    const auto d = static_cast<std::int32_t>(u);
    if (d < 1) throw FormatError("tensor dim must be positive", off);
    t.dims.push_back(d);
    numel *= static_cast<std::size_t>(d);
  }
  const std::size_t header = 7 + 4 * static_cast<std::size_t>(rank);
  const std::size_t payload = numel * dtype_size(t.dtype);
  need(header + payload);
  if (b.size() > header + payload)
    throw FormatError("trailing bytes after tensor payload", header + payload);
  t.bytes.assign(b.begin() + static_cast<std::ptrdiff_t>(header), b.end());
  return t;
}

void write_tensor(const std::string& path, const Tensor& t) {
  RawTensor raw;
  raw.dtype = Dtype::f64;
  raw.dims = t.dims;
  raw.bytes.resize(t.numel() * 8);
  static_assert(sizeof(double) == 8);
  std::memcpy(raw.bytes.data(), t.data.data(), raw.bytes.size());
  write_raw_tensor(path, raw);
}

Tensor read_tensor(const std::string& path) {
  const RawTensor raw = read_raw_tensor(path);
  Tensor t(raw.dims);
  const std::size_t n = t.numel();
  switch (raw.dtype) {
    case Dtype::f64:
      std::memcpy(t.data.data(), raw.bytes.data(), n * 8);
      break;
    case Dtype::f32: {
      std::vector<float> f(n);
      std::memcpy(f.data(), raw.bytes.data(), n * 4);
      for (std::size_t i = 0; i < n; ++i) t.data[i] = static_cast<double>(f[i]);
      break;
    }
    case Dtype::u8:
      for (std::size_t i = 0; i < n; ++i) t.data[i] = static_cast<double>(raw.bytes[i]);
      break;
    case Dtype::u16:
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint16_t v = static_cast<std::uint16_t>(
            raw.bytes[2 * i] | (static_cast<std::uint16_t>(raw.bytes[2 * i + 1]) << 8));
        t.data[i] = static_cast<double>(v);
      }
      break;
  }
  return t;
}

// --------------------------------------------------------------------------
// Netpbm
// --------------------------------------------------------------------------

namespace {

bool is_pbm_space(std::uint8_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Next header token, skipping whitespace and '#' comments. `pos` advances
// past the token; `tok_off` receives the token's byte offset.
std::string next_token(const std::vector<std::uint8_t>& b, std::size_t& pos,
                       std::size_t& tok_off) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (is_pbm_space(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size()) throw FormatError("image header ends early", b.size());
  tok_off = pos;
  std::string tok;
  while (pos < b.size() && !is_pbm_space(b[pos]) && b[pos] != '#')
    tok += static_cast<char>(b[pos++]);
  return tok;
}

long parse_header_int(const std::vector<std::uint8_t>& b, std::size_t& pos,
                      const char* what) {
  std::size_t off = 0;
  const std::string tok = next_token(b, pos, off);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(),
                                  [](char c) { return c >= '0' && c <= '9'; }))
    throw FormatError(std::string("expected numeric ") + what, off);
  if (tok.size() > 9) throw FormatError(std::string(what) + " out of range", off);
  return std::stol(tok);
}

struct PnmHeader {
  int width = 0, height = 0;
  long maxval = 0;
  std::size_t payload_off = 0;  // first payload byte
};

PnmHeader read_pnm_header(const std::vector<std::uint8_t>& b, const char* magic) {
  std::size_t pos = 0, off = 0;
  const std::string m = next_token(b, pos, off);
  if (m != magic)
    throw FormatError(std::string("expected ") + magic + " image, got '" + m + "'", 0);
  PnmHeader h;
  h.width = static_cast<int>(parse_header_int(b, pos, "width"));
  h.height = static_cast<int>(parse_header_int(b, pos, "height"));
  h.maxval = parse_header_int(b, pos, "maxval");
  if (h.width < 1 || h.height < 1)
    throw FormatError("image dimensions must be positive", 0);
  if (h.maxval < 1 || h.maxval > 65535)
    throw FormatError("maxval out of range", 0);
  if (pos >= b.size() || !is_pbm_space(b[pos]))
    throw FormatError("missing whitespace before payload", pos);
  h.payload_off = pos + 1;
  return h;
}

void check_payload(const std::vector<std::uint8_t>& b, const PnmHeader& h,
                   std::size_t bytes_needed) {
  if (b.size() < h.payload_off + bytes_needed)
    throw FormatError("image payload truncated", b.size());
  if (b.size() > h.payload_off + bytes_needed)
    throw FormatError("trailing bytes after image payload", h.payload_off + bytes_needed);
}

std::vector<std::uint8_t> pnm_prefix(const char* magic, int w, int h, long maxval) {
  std::ostringstream os;
  os << magic << "\n" << w << " " << h << "\n" << maxval << "\n";
  const std::string s = os.str();
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

std::uint8_t quantize255(double v) {
  const long q = std::lround(v * 255.0);
  return static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
}

}  // namespace

void write_rgb_ppm(const std::string& path, const Tensor& rgb) {
  if (rgb.rank() != 4 || rgb.n() != 1 || rgb.c() != 3)
    throw InputError("rgb image must have shape (1,3,h,w), got " + rgb.shape_str());
  const int h = rgb.h(), w = rgb.w();
  auto out = pnm_prefix("P6", w, h, 255);
  out.reserve(out.size() + static_cast<std::size_t>(3) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.push_back(quantize255(rgb.at(0, c, y, x)));
  write_all_bytes(path, out);
}

Tensor read_rgb_ppm(const std::string& path) {
  const auto b = read_all_bytes(path);
  const PnmHeader h = read_pnm_header(b, "P6");
  if (h.maxval > 255) throw FormatError("only 8-bit color images supported", 0);
  check_payload(b, h, static_cast<std::size_t>(3) * h.width * h.height);
  Tensor rgb({1, 3, h.height, h.width});
  std::size_t p = h.payload_off;
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x)
      for (int c = 0; c < 3; ++c)
        rgb.at(0, c, y, x) = static_cast<double>(b[p++]) / static_cast<double>(h.maxval);
  return rgb;
}

void write_depth_pgm16(const std::string& path, const Tensor& depth) {
  if (depth.rank() != 4 || depth.n() != 1 || depth.c() != 1)
    throw InputError("depth map must have shape (1,1,h,w), got " + depth.shape_str());
  const int h = depth.h(), w = depth.w();
  auto out = pnm_prefix("P5", w, h, 65535);
  out.reserve(out.size() + static_cast<std::size_t>(2) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double meters = depth.at(0, 0, y, x);
      const long mm = std::lround(meters * 1000.0);
      if (mm < 0 || mm > 65535)
        throw InputError("depth " + std::to_string(meters) +
                         " m does not fit 16-bit millimeters");
      out.push_back(static_cast<std::uint8_t>(mm >> 8));  // most significant first
      out.push_back(static_cast<std::uint8_t>(mm & 0xff));
    }
  write_all_bytes(path, out);
}

Tensor read_depth_pgm16(const std::string& path) {
  const auto b = read_all_bytes(path);
  const PnmHeader h = read_pnm_header(b, "P5");
  if (h.maxval < 256) throw FormatError("depth graymap must be 16-bit", 0);
  check_payload(b, h, static_cast<std::size_t>(2) * h.width * h.height);
  Tensor depth({1, 1, h.height, h.width});
  std::size_t p = h.payload_off;
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x) {
      const int mm = (static_cast<int>(b[p]) << 8) | b[p + 1];
      p += 2;
      depth.at(0, 0, y, x) = mm / 1000.0;
    }
  return depth;
}

namespace {

// 8-bit single-channel graymap shared by labels and masks.
void write_gray8(const std::string& path, int n, int h, int w,
                 const std::vector<std::uint8_t>& v) {
  if (n != 1) throw InputError("graymap writer expects a single image");
  auto out = pnm_prefix("P5", w, h, 255);
  out.insert(out.end(), v.begin(), v.end());
  write_all_bytes(path, out);
}

std::vector<std::uint8_t> read_gray8(const std::string& path, int& h, int& w) {
  const auto b = read_all_bytes(path);
  const PnmHeader hd = read_pnm_header(b, "P5");
  if (hd.maxval > 255) throw FormatError("expected 8-bit graymap", 0);
  check_payload(b, hd, static_cast<std::size_t>(hd.width) * hd.height);
  h = hd.height;
  w = hd.width;
  return std::vector<std::uint8_t>(b.begin() + static_cast<std::ptrdiff_t>(hd.payload_off),
                                   b.end());
}

}  // namespace

void write_labels_pgm(const std::string& path, const LabelMap& labels) {
  write_gray8(path, labels.n, labels.h, labels.w, labels.v);
}

LabelMap read_labels_pgm(const std::string& path, int num_classes) {
  int h = 0, w = 0;
  auto v = read_gray8(path, h, w);
  for (std::uint8_t l : v)
    if (l >= num_classes)
      throw InputError("label " + std::to_string(int(l)) + " out of range for " +
                       std::to_string(num_classes) + " classes");
  LabelMap out(1, h, w);
  out.v = std::move(v);
  return out;
}

void write_mask_pgm(const std::string& path, const Mask& mask) {
  std::vector<std::uint8_t> v(mask.v.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask.v[i] ? 255 : 0;
  write_gray8(path, mask.n, mask.h, mask.w, v);
}

Mask read_mask_pgm(const std::string& path) {
  int h = 0, w = 0;
  auto v = read_gray8(path, h, w);
  Mask out(1, h, w, 0);
  for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = v[i] ? 1 : 0;
  return out;
}

// --------------------------------------------------------------------------
// Scene generator
// --------------------------------------------------------------------------

namespace {

struct Box {
  double lo[3], hi[3];
  int cls = 0;
};

void check_scene_spec(const SceneSpec& s) {
  if (s.width < 1 || s.height < 1) throw ConfigError("scene size must be positive");
  if (s.boxes_min < 0 || s.boxes_max < s.boxes_min)
    throw ConfigError("box count range invalid");
  if (s.box_size_min <= 0 || s.box_size_max < s.box_size_min)
    throw ConfigError("box size range invalid");
  if (s.box_z_min <= 0 || s.box_z_max < s.box_z_min)
    throw ConfigError("box distance range invalid");
  if (s.ground_y <= 0) throw ConfigError("camera must be above the ground plane");
  if (s.max_depth <= 0) throw ConfigError("far clip must be positive");
  if (s.max_depth > 65.535)
    throw ConfigError("far clip beyond 65.535 m breaks millimeter storage");
  if (s.num_classes < 1) throw ConfigError("need at least the ground class");
  if (s.boxes_max > 0 && s.num_classes < 2)
    throw ConfigError("boxes need a class id beyond the ground class");
  const double l2 = s.light[0] * s.light[0] + s.light[1] * s.light[1] + s.light[2] * s.light[2];
  if (l2 < 1e-12) throw ConfigError("light direction must be nonzero");
}

const std::array<std::array<double, 3>, 7> kBoxPalette = {{
    {0.90, 0.20, 0.20},
    {0.20, 0.70, 0.90},
    {0.95, 0.80, 0.20},
    {0.30, 0.85, 0.30},
    {0.70, 0.40, 0.90},
    {0.95, 0.55, 0.20},
    {0.40, 0.50, 0.95},
}};

std::array<double, 3> class_color(int cls) {
  if (cls == 0) return {0.5, 0.5, 0.5};
  return kBoxPalette[static_cast<std::size_t>((cls - 1) % 7)];
}

}  // namespace

Sample gen_scene(const SceneSpec& spec, Rng& rng, LabelMap* face_ids) {
  check_scene_spec(spec);
  const int W = spec.width, H = spec.height;

  // All randomness happens up front, in a fixed draw order.
  const int count = rng.uniform_int(spec.boxes_min, spec.boxes_max);
  std::vector<Box> boxes(static_cast<std::size_t>(count));
  for (Box& b : boxes) {
    const double cx = rng.uniform(-spec.box_x_range, spec.box_x_range);
    const double cz = rng.uniform(spec.box_z_min, spec.box_z_max);
    const double sx = rng.uniform(spec.box_size_min, spec.box_size_max);
    const double sy = rng.uniform(spec.box_size_min, spec.box_size_max);
    const double sz = rng.uniform(spec.box_size_min, spec.box_size_max);
    b.cls = rng.uniform_int(1, spec.num_classes - 1);
    b.lo[0] = cx - sx / 2;
    b.hi[0] = cx + sx / 2;
    b.lo[1] = spec.ground_y - sy;  // rests on the floor; +y points down
    b.hi[1] = spec.ground_y;
    b.lo[2] = cz - sz / 2;
    b.hi[2] = cz + sz / 2;
  }

  Sample s;
  s.rgb = Tensor::zeros({1, 3, H, W});
  s.depth = Tensor::zeros({1, 1, H, W});
  s.normals = Tensor::zeros({1, 3, H, W});
  s.labels = LabelMap(1, H, W);
  s.mask = Mask(1, H, W, 0);
  s.intrinsics = Intrinsics::standard(W, H);
  if (face_ids) *face_ids = LabelMap(1, H, W);

  const double ln = std::sqrt(spec.light[0] * spec.light[0] +
                              spec.light[1] * spec.light[1] +
                              spec.light[2] * spec.light[2]);
  const double L[3] = {spec.light[0] / ln, spec.light[1] / ln, spec.light[2] / ln};
  const std::array<double, 3> sky = {0.55, 0.65, 0.80};

  for (int py = 0; py < H; ++py) {
    for (int px = 0; px < W; ++px) {
      // Ray through the pixel; d_z == 1, so the ray parameter IS the depth.
      const double d[3] = {(px - s.intrinsics.cx) / s.intrinsics.fx,
                           (py - s.intrinsics.cy) / s.intrinsics.fy, 1.0};

      double best_t = std::numeric_limits<double>::infinity();
      double n[3] = {0, 0, 0};
      int cls = 0, face = 0;

      if (d[1] > 1e-12) {  // looking downward enough to meet the floor
        best_t = spec.ground_y / d[1];
        n[0] = 0;
        n[1] = -1;
        n[2] = 0;
        cls = 0;
        face = 0;
      }

      for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
        const Box& b = boxes[bi];
        double tnear = 0.0, tfar = std::numeric_limits<double>::infinity();
        int axis = -1;
        bool min_face = true;
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
          if (std::abs(d[a]) < 1e-15) {
            if (0.0 < b.lo[a] || 0.0 > b.hi[a]) miss = true;
            continue;
          }
          double t0 = b.lo[a] / d[a];
          double t1 = b.hi[a] / d[a];
          bool near_is_min = d[a] > 0;  // entering through the low face
          if (t0 > t1) std::swap(t0, t1);
          if (t0 > tnear) {
            tnear = t0;
            axis = a;
            min_face = near_is_min;
          }
          tfar = std::min(tfar, t1);
          if (tnear > tfar) miss = true;
        }
        if (miss || axis < 0 || tnear <= 1e-9 || tnear >= best_t) continue;
        best_t = tnear;
        n[0] = n[1] = n[2] = 0;
        n[axis] = min_face ? -1.0 : 1.0;
        cls = b.cls;
        face = 1 + 6 * static_cast<int>(bi) + 2 * axis + (min_face ? 0 : 1);
      }

      if (!std::isfinite(best_t) || best_t > spec.max_depth) {
        for (int c = 0; c < 3; ++c) s.rgb.at(0, c, py, px) = sky[c];
        continue;  // mask stays 0; depth/normals/labels stay 0
      }

      s.mask.at(0, py, px) = 1;
      s.depth.at(0, 0, py, px) = best_t;
      for (int c = 0; c < 3; ++c) s.normals.at(0, c, py, px) = n[c];
      s.labels.at(0, py, px) = static_cast<std::uint8_t>(cls);
      if (face_ids) face_ids->at(0, py, px) = static_cast<std::uint8_t>(face);

      const double lambert = -(n[0] * L[0] + n[1] * L[1] + n[2] * L[2]);
      const double shade = 0.25 + 0.75 * std::max(0.0, lambert);
      const std::array<double, 3> base = class_color(cls);
      for (int c = 0; c < 3; ++c)
        s.rgb.at(0, c, py, px) = std::clamp(base[c] * shade, 0.0, 1.0);
    }
  }
  return s;
}

// --------------------------------------------------------------------------
// Dataset assembly
// --------------------------------------------------------------------------

namespace {

std::string sample_stem(const std::string& dir, int index) {
  return dir + "/" + std::to_string(index) + ".";
}

}  // namespace

void save_sample(const std::string& dir, int index, const Sample& s) {
  fs::create_directories(dir);
  const std::string stem = sample_stem(dir, index);
  write_rgb_ppm(stem + "rgb.ppm", s.rgb);
  write_depth_pgm16(stem + "depth.pgm", s.depth);
  write_labels_pgm(stem + "labels.pgm", s.labels);
  write_tensor(stem + "normals.tns", s.normals);
  write_mask_pgm(stem + "mask.pgm", s.mask);
}

Sample load_sample(const std::string& dir, int index, int num_classes) {
  const std::string stem = sample_stem(dir, index);
  Sample s;
  s.rgb = read_rgb_ppm(stem + "rgb.ppm");
  s.depth = read_depth_pgm16(stem + "depth.pgm");
  s.labels = read_labels_pgm(stem + "labels.pgm", num_classes);
  s.normals = read_tensor(stem + "normals.tns");
  s.mask = read_mask_pgm(stem + "mask.pgm");

  const int h = s.rgb.h(), w = s.rgb.w();
  if (s.depth.h() != h || s.depth.w() != w || s.normals.rank() != 4 ||
      s.normals.c() != 3 || s.normals.h() != h || s.normals.w() != w ||
      s.labels.h != h || s.labels.w != w || s.mask.h != h || s.mask.w != w)
    throw InputError("sample " + std::to_string(index) +
                     " has inconsistent channel sizes");
  s.intrinsics = Intrinsics::standard(w, h);
  return s;
}

void write_meta(const std::string& path, const DatasetMeta& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "width=" << m.width << "\n"
     << "height=" << m.height << "\n"
     << "num_classes=" << m.num_classes << "\n"
     << "count=" << m.count << "\n"
     << "seed=" << m.seed << "\n"
     << "split_offset=" << m.split_offset << "\n"
     << "fx=" << m.k.fx << "\n"
     << "fy=" << m.k.fy << "\n"
     << "cx=" << m.k.cx << "\n"
     << "cy=" << m.k.cy << "\n";
  const std::string s = os.str();
  write_all_bytes(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

DatasetMeta read_meta(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("meta line without '=': " + line, 0);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw FormatError(std::string("meta missing key: ") + key, 0);
    return it->second;
  };
  DatasetMeta m;
  m.width = std::stoi(get("width"));
  m.height = std::stoi(get("height"));
  m.num_classes = std::stoi(get("num_classes"));
  m.count = std::stoi(get("count"));
  m.seed = std::stoull(get("seed"));
  m.split_offset = std::stoull(get("split_offset"));
  m.k.fx = std::stod(get("fx"));
  m.k.fy = std::stod(get("fy"));
  m.k.cx = std::stod(get("cx"));
  m.k.cy = std::stod(get("cy"));
  return m;
}

void generate_dataset(const std::string& root, const std::string& split,
                      const SceneSpec& spec, int count, std::uint64_t seed,
                      std::uint64_t split_offset) {
  if (count < 1) throw ConfigError("dataset needs at least one sample");
  const std::string dir = root + "/" + split;
  fs::create_directories(dir);
  DatasetMeta m;
  m.width = spec.width;
  m.height = spec.height;
  m.num_classes = spec.num_classes;
  m.count = count;
  m.seed = seed;
  m.split_offset = split_offset;
  m.k = Intrinsics::standard(spec.width, spec.height);
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::fork(seed, split_offset + static_cast<std::uint64_t>(i));
    const Sample s = gen_scene(spec, rng);
    save_sample(dir, i, s);
  }
  write_meta(dir + "/meta.txt", m);
}

Dataset load_dataset(const std::string& root, const std::string& split) {
  const std::string dir = root + "/" + split;
  Dataset d;
  d.meta = read_meta(dir + "/meta.txt");
  d.samples.reserve(static_cast<std::size_t>(d.meta.count));
  for (int i = 0; i < d.meta.count; ++i) {
    Sample s = load_sample(dir, i, d.meta.num_classes);
    s.intrinsics = d.meta.k;
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace pixelmap
