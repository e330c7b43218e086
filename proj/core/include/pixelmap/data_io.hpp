#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pixelmap/rng.hpp"
#include "pixelmap/sample.hpp"
#include "pixelmap/tensor.hpp"

namespace pixelmap {

// ---------------------------------------------------------------------------
// Tensor container (.tns)
//
// Byte layout, all integers little-endian:
//   magic "PMTN" | version u8 (=1) | dtype u8 | rank u8 | rank x dim int32 |
//   row-major payload (numel x element size).
// Readers reject anything that deviates, reporting the byte offset of the
// first inconsistency. Payload length must equal the product of dims times
// the element size exactly; trailing bytes are an error.
// ---------------------------------------------------------------------------

// Whole-file byte access shared by every container in this module; IoError
// on anything the filesystem refuses.
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path,
                      const std::vector<std::uint8_t>& bytes);

enum class Dtype : std::uint8_t { f64 = 1, f32 = 2, u8 = 3, u16 = 4 };

std::size_t dtype_size(Dtype d);

// Untyped view used by readers/writers; `bytes` is the little-endian payload.
struct RawTensor {
  Dtype dtype = Dtype::f64;
  std::vector<int> dims;
  std::vector<std::uint8_t> bytes;
};

void write_raw_tensor(const std::string& path, const RawTensor& t);
RawTensor read_raw_tensor(const std::string& path);

// Convenience for double tensors: write stores f64 payloads bit-exactly,
// read widens any stored dtype to double.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// ---------------------------------------------------------------------------
// Netpbm images. Binary variants only (P6 / P5); headers may contain
// '#' comments. All files written by this module use a fixed single-space
// header layout so byte-for-byte comparisons are meaningful.
// ---------------------------------------------------------------------------

// 8-bit RGB. Values are mapped [0,1] <-> 0..255 by round-and-clamp.
void write_rgb_ppm(const std::string& path, const Tensor& rgb);  // (1,3,h,w)
Tensor read_rgb_ppm(const std::string& path);

// 16-bit graymap holding depth in millimeters, most significant byte first
// (standard maxval>255 sample order). Depths above 65.535 m do not fit and
// are rejected on write.
void write_depth_pgm16(const std::string& path, const Tensor& depth);  // (1,1,h,w)
Tensor read_depth_pgm16(const std::string& path);

// 8-bit graymap of class ids; read validates every value < num_classes.
void write_labels_pgm(const std::string& path, const LabelMap& labels);
LabelMap read_labels_pgm(const std::string& path, int num_classes);

// 8-bit graymap; written as 0/255, any nonzero reads back as valid.
void write_mask_pgm(const std::string& path, const Mask& mask);
Mask read_mask_pgm(const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic box scenes. A ground plane (class 0, normal (0,-1,0)) with
// axis-aligned boxes resting on it (classes 1..num_classes-1). Rendered by
// per-pixel ray casting through Intrinsics::standard, so stored depth equals
// the analytic ray parameter exactly. Pixels whose ray escapes past
// max_depth (sky) are invalid. Shading is Lambertian over a fixed palette.
// ---------------------------------------------------------------------------

struct SceneSpec {
  int width = 64, height = 48;
  int boxes_min = 2, boxes_max = 5;
  double box_size_min = 0.3, box_size_max = 1.2;
  double box_x_range = 2.0;              // centers drawn from [-range, range]
  double box_z_min = 2.5, box_z_max = 7.0;
  double ground_y = 1.5;                 // camera height above the floor
  double max_depth = 20.0;               // far clip; keeps depth within 16 bits
  int num_classes = 5;                   // ground + box classes
  // direction the light travels (+y is down, +z into the scene)
  std::array<double, 3> light = {0.3, 0.8, 0.5};
};

// Draws box parameters from `rng` (count, then per box: center x, center z,
// three sizes, class id), then renders deterministically. When `face_ids` is
// given it receives a per-pixel planar-face id (ground 0, box i face f maps
// to 1 + 6*i + f) for surface-consistency checks.
Sample gen_scene(const SceneSpec& spec, Rng& rng, LabelMap* face_ids = nullptr);

// ---------------------------------------------------------------------------
// Dataset layout on disk:
//   <root>/<split>/<index>.rgb.ppm      8-bit color
//   <root>/<split>/<index>.depth.pgm    16-bit millimeters
//   <root>/<split>/<index>.labels.pgm   8-bit class ids
//   <root>/<split>/<index>.normals.tns  (1,3,h,w) f64
//   <root>/<split>/<index>.mask.pgm     8-bit validity
//   <root>/<split>/meta.txt             key=value description
// Sample index i of a split draws from Rng::fork(seed, split_offset + i), so
// splits with disjoint offset ranges share no scenes.
// ---------------------------------------------------------------------------

struct DatasetMeta {
  int width = 0, height = 0;
  int num_classes = 0;
  int count = 0;
  std::uint64_t seed = 0;
  std::uint64_t split_offset = 0;
  Intrinsics k;
};

void save_sample(const std::string& dir, int index, const Sample& s);
Sample load_sample(const std::string& dir, int index, int num_classes);

void write_meta(const std::string& path, const DatasetMeta& m);
DatasetMeta read_meta(const std::string& path);

void generate_dataset(const std::string& root, const std::string& split,
                      const SceneSpec& spec, int count, std::uint64_t seed,
                      std::uint64_t split_offset);

struct Dataset {
  DatasetMeta meta;
  std::vector<Sample> samples;
};

// Reads meta.txt and every sample of the split into memory.
Dataset load_dataset(const std::string& root, const std::string& split);

}  // namespace pixelmap
