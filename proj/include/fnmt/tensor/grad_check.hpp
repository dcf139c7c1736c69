// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fnmt/tensor/graph.hpp"
#include "fnmt/tensor/tensor.hpp"

namespace fnmt {

using NamedTensor = std::pair<std::string, Tensor<double>>;

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// 0 checks every coordinate; otherwise a seeded uniform sample of this
  /// many coordinates (never fewer than 100) is drawn.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  /// Denominator floor of the relative error. Coordinates whose gradient is
  /// analytically zero leave only round-off in the finite difference; the
  /// floor stops that noise from reading as a relative error of 1.
  double abs_floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tol = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool passed() const { return max_rel_error < tol; }
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences (f(x+eps) - f(x-eps)) / (2 eps).
///
/// `f` builds its computation in the graph it is handed and returns a scalar
/// tensor. It must be deterministic (no dropout). Gradients of `params` are
/// overwritten.
template <typename F>
GradCheckReport grad_check(F&& f, std::vector<NamedTensor> params,
                           const GradCheckOptions& opts = {}) {
  for (auto& [name, p] : params) {
    p.set_requires_grad(true);
    p.drop_grad();
  }
  {
    Graph<double> g;
    Tensor<double> loss = f(g);
    if (!std::isfinite(loss.item())) {
      throw NumericalError("grad_check: non-finite loss " +
                           std::to_string(loss.item()));
    }
    g.backward(loss);
  }

  struct Coord {
    std::size_t param, index;
  };
  std::vector<Coord> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p].second.size(); ++i)
      coords.push_back({p, i});
  if (opts.max_coords != 0) {
    const std::size_t want = std::max<std::size_t>(opts.max_coords, 100);
    if (coords.size() > want) {
      std::mt19937_64 rng(opts.seed);
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(want);
    }
  }

  auto evaluate = [&]() {
    Graph<double> g(false);
    const double v = f(g).item();
    if (!std::isfinite(v)) {
      throw NumericalError("grad_check: non-finite loss under perturbation");
    }
    return v;
  };

  GradCheckReport report;
  report.tol = opts.tol;
  for (const auto& c : coords) {
    auto& [name, p] = params[c.param];
    const double analytic = p.has_grad() ? p.grad()[c.index] : 0.0;
    if (!std::isfinite(analytic)) {
      throw NumericalError("grad_check: non-finite gradient in " + name + "[" +
                           std::to_string(c.index) + "]");
    }
    const double saved = p[c.index];
    p[c.index] = saved + opts.eps;
    const double up = evaluate();
    p[c.index] = saved - opts.eps;
    const double down = evaluate();
    p[c.index] = saved;
    const double numeric = (up - down) / (2.0 * opts.eps);
    const double err = relative_error(analytic, numeric, opts.abs_floor);
    ++report.coordinates;
    if (err > report.max_rel_error || report.worst_param.empty()) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      if (err >= report.max_rel_error) {
        report.worst_param = name;
        report.worst_index = c.index;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace fnmt
