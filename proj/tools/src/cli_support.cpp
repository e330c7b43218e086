#include "cli_support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pixelmap/data_io.hpp"
#include "pixelmap/errors.hpp"
#include "pixelmap/metrics.hpp"

namespace pixelmap::cli {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// Piecewise blue->cyan->green->yellow->red ramp over [0,1].
void heat_rgb(double t, double rgb[3]) {
  t = std::clamp(t, 0.0, 1.0);
  const double stops[5][3] = {{0.0, 0.0, 0.5},
                              {0.0, 0.8, 1.0},
                              {0.0, 0.9, 0.2},
                              {1.0, 0.9, 0.0},
                              {0.9, 0.1, 0.0}};
  const double x = t * 4.0;
  const int i = std::min(3, static_cast<int>(x));
  const double f = x - i;
  for (int c = 0; c < 3; ++c)
    rgb[c] = stops[i][c] * (1.0 - f) + stops[i + 1][c] * f;
}

// Fixed palette: hues spread by the golden angle, full saturation.
void class_rgb(int id, double rgb[3]) {
  const double h = std::fmod(id * 0.61803398875, 1.0) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i;
  const double q = 1.0 - f;
  switch (i % 6) {
    case 0: rgb[0] = 1; rgb[1] = f; rgb[2] = 0; break;
    case 1: rgb[0] = q; rgb[1] = 1; rgb[2] = 0; break;
    case 2: rgb[0] = 0; rgb[1] = 1; rgb[2] = f; break;
    case 3: rgb[0] = 0; rgb[1] = q; rgb[2] = 1; break;
    case 4: rgb[0] = f; rgb[1] = 0; rgb[2] = 1; break;
    default: rgb[0] = 1; rgb[1] = 0; rgb[2] = q; break;
  }
}

void write_depth_artifacts(const std::string& stem, const Tensor& depth) {
  write_depth_pgm16(stem + ".depth.pgm", depth);
  double lo = depth.data[0], hi = depth.data[0];
  for (double v : depth.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  Tensor vis({1, 3, depth.h(), depth.w()});
  for (int y = 0; y < depth.h(); ++y)
    for (int x = 0; x < depth.w(); ++x) {
      double rgb[3];
      heat_rgb((depth.at(0, 0, y, x) - lo) / span, rgb);
      for (int c = 0; c < 3; ++c) vis.at(0, c, y, x) = rgb[c];
    }
  write_rgb_ppm(stem + ".depth_vis.ppm", vis);
}

void write_normals_artifacts(const std::string& stem, const Tensor& normals) {
  write_tensor(stem + ".normals.tns", normals);
  Tensor vis({1, 3, normals.h(), normals.w()});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < normals.h(); ++y)
      for (int x = 0; x < normals.w(); ++x)
        vis.at(0, c, y, x) = (normals.at(0, c, y, x) + 1.0) / 2.0;
  write_rgb_ppm(stem + ".normals_vis.ppm", vis);
}

void write_label_artifacts(const std::string& stem, const Tensor& probs) {
  const LabelMap labels = argmax_labels(probs);
  write_labels_pgm(stem + ".labels.pgm", labels);
  Tensor vis({1, 3, labels.h, labels.w});
  for (int y = 0; y < labels.h; ++y)
    for (int x = 0; x < labels.w; ++x) {
      double rgb[3];
      class_rgb(labels.at(0, y, x), rgb);
      for (int c = 0; c < 3; ++c) vis.at(0, c, y, x) = rgb[c];
    }
  write_rgb_ppm(stem + ".labels_vis.ppm", vis);
}

}  // namespace

Tensor slice_channels(const Tensor& t, int c0, int k) {
  Tensor out({1, k, t.h(), t.w()});
  for (int c = 0; c < k; ++c)
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x)
        out.at(0, c, y, x) = t.at(0, c0 + c, y, x);
  return out;
}

std::string resolve_out_dir(const std::string& flag_value,
                            const std::string& command) {
  std::string dir = flag_value;
  if (dir.empty()) {
    if (const char* root = std::getenv("PIXELMAP_OUT"))
      dir = std::string(root) + "/" + command;
    else
      dir = "runs/" + command;
  }
  ensure_dir(dir);
  return dir;
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("short write to " + path);
}

void echo_config(const std::string& out_dir, const Config& resolved) {
  write_text_file(out_dir + "/config.txt", resolved.echo());
}

std::string format_report(const MetricReport& r) {
  std::ostringstream os;
  os << "task " << task_name(r.task) << ", samples " << r.samples << "\n";
  if (r.task == Task::depth || r.task == Task::depth_normals) {
    os << "depth:\n"
       << "  delta<1.25   " << fmt(r.depth.delta1) << "\n"
       << "  delta<1.25^2 " << fmt(r.depth.delta2) << "\n"
       << "  delta<1.25^3 " << fmt(r.depth.delta3) << "\n"
       << "  abs_rel      " << fmt(r.depth.abs_rel) << "\n"
       << "  sqr_rel      " << fmt(r.depth.sqr_rel) << "\n"
       << "  rms_lin      " << fmt(r.depth.rms_lin) << "\n"
       << "  rms_log      " << fmt(r.depth.rms_log) << "\n"
       << "  scale_inv    " << fmt(r.depth.scale_inv) << "\n";
  }
  if (r.task == Task::normals || r.task == Task::depth_normals) {
    os << "normals:\n"
       << "  mean_deg     " << fmt(r.normals.mean_deg) << "\n"
       << "  median_deg   " << fmt(r.normals.median_deg) << "\n"
       << "  within_11.25 " << fmt(r.normals.within_11) << "\n"
       << "  within_22.5  " << fmt(r.normals.within_22) << "\n"
       << "  within_30    " << fmt(r.normals.within_30) << "\n";
  }
  if (r.task == Task::semantic) {
    os << "semantic (" << r.num_classes << " classes):\n"
       << "  pixel_acc    " << fmt(r.seg.pixel_acc) << "\n"
       << "  mean_cls_acc " << fmt(r.seg.mean_class_acc) << "\n"
       << "  mean_jaccard " << fmt(r.seg.mean_jaccard) << "\n"
       << "  fw_jaccard   " << fmt(r.seg.freq_weighted_jaccard) << "\n";
    for (int c = 0; c < r.num_classes; ++c)
      os << "  class " << c << ": acc " << fmt(r.seg.class_acc[c])
         << ", jaccard " << fmt(r.seg.jaccard[c]) << "\n";
  }
  return os.str();
}

std::string curve_csv(const std::vector<LossPoint>& curve) {
  std::ostringstream os;
  os << "step,loss,lr\n" << std::setprecision(17);
  for (const LossPoint& p : curve)
    os << p.step << "," << p.loss << "," << p.lr << "\n";
  return os.str();
}

void dump_prediction(const std::string& dir, int index, Task task,
                     const Tensor& pred, int num_classes) {
  (void)num_classes;
  ensure_dir(dir);
  const std::string stem = dir + "/" + std::to_string(index) + ".pred";
  switch (task) {
    case Task::depth:
      write_depth_artifacts(stem, pred);
      break;
    case Task::normals:
      write_normals_artifacts(stem, pred);
      break;
    case Task::semantic:
      write_label_artifacts(stem, pred);
      break;
    case Task::depth_normals:
      write_depth_artifacts(stem, slice_channels(pred, 0, 1));
      write_normals_artifacts(stem, slice_channels(pred, 1, 3));
      break;
  }
}

}  // namespace pixelmap::cli
