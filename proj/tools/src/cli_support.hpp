// Shared plumbing for the command-line tool: output-directory resolution,
// resolved-config echoes, metric-report rendering, loss-curve CSV, and
// prediction dumps (raw containers plus false-color visualizations).
#pragma once

#include <string>
#include <vector>

#include "pixelmap/config.hpp"
#include "pixelmap/sample.hpp"
#include "pixelmap/tensor.hpp"
#include "pixelmap/trainer.hpp"

namespace pixelmap::cli {

// Output directory precedence: explicit flag, then $PIXELMAP_OUT/<command>,
// then ./runs/<command>. The directory is created on resolution.
std::string resolve_out_dir(const std::string& flag_value,
                            const std::string& command);

void ensure_dir(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Sorted key=value echo to <out_dir>/config.txt; rerunning from this file
// alone reproduces the run.
void echo_config(const std::string& out_dir, const Config& resolved);

std::string format_report(const MetricReport& r);
std::string curve_csv(const std::vector<LossPoint>& curve);

// Writes the raw prediction artifacts plus a false-color view:
//   depth     <stem>.depth.pgm (millimeters) and <stem>.depth_vis.ppm
//   normals   <stem>.normals.tns and <stem>.normals_vis.ppm
//   semantic  <stem>.labels.pgm and <stem>.labels_vis.ppm
// The combined task writes both the depth and normals artifacts.
void dump_prediction(const std::string& dir, int index, Task task,
                     const Tensor& pred, int num_classes);

// Channels [c0, c0+k) of a single-image map as their own tensor.
Tensor slice_channels(const Tensor& t, int c0, int k);

}  // namespace pixelmap::cli
