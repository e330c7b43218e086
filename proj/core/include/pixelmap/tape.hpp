#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "pixelmap/tensor.hpp"

namespace pixelmap {

// Records the backward pass of a forward computation. Ops push one closure
// per call; backward() replays them in reverse, accumulating into the .grad
// buffers of the tensors each closure captured. Activations are owned by the
// tape (deque gives stable addresses), parameters are owned by the caller and
// must outlive it. With recording off, ops skip closure creation entirely,
// which is the inference path.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tensor* track(Tensor t) {
    nodes_.push_back(std::move(t));
    return &nodes_.back();
  }

  void record(std::function<void()> step) {
    if (recording_) steps_.push_back(std::move(step));
  }

  // Runs recorded steps newest-first. Caller seeds the root gradient
  // (typically a loss closure injects it) before calling.
  void backward() {
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

  bool recording() const { return recording_; }
  std::size_t num_steps() const { return steps_.size(); }

  void clear() {
    steps_.clear();
    nodes_.clear();
  }

 private:
  std::deque<Tensor> nodes_;
  std::vector<std::function<void()>> steps_;
  bool recording_;
};

}  // namespace pixelmap
