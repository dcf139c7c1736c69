// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "fnmt/tensor/tensor.hpp"

namespace fnmt {

/// Tape of differentiable operations in execution order.
///
/// Ops append a backward closure when recording is on and at least one input
/// requires a gradient. Execution order is a topological order, so a single
/// reverse sweep visits every node once. Destroying the graph releases the
/// intermediate tensors; leaf parameters and their gradients are untouched.
///
/// A graph is confined to one thread.
template <typename T>
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return tape_.size(); }

  /// True when the output of an op over these inputs needs a tape entry.
  template <typename... Ts>
  bool tracks(const Ts&... inputs) const {
    return recording_ && (inputs.requires_grad() || ...);
  }

  void record(std::function<void()> backward) {
    tape_.push_back(std::move(backward));
  }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards. The tape is
  /// consumed; a second call throws.
  void backward(Tensor<T>& loss) {
    if (consumed_) throw Error("backward() called twice on the same graph");
    if (loss.size() != 1) {
      throw DimensionError("backward() needs a scalar loss, got shape " +
                           to_string(loss.shape()));
    }
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.ensure_grad()[0] += T(1);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    tape_.clear();
  }

 private:
  bool recording_;
  bool consumed_ = false;
  std::vector<std::function<void()>> tape_;
};

}  // namespace fnmt
