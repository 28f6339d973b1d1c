#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geosent/encode.hpp"
#include "geosent/nn/model_spec.hpp"

namespace geosent::nn {

/// Default acceptance threshold for analytic-vs-numeric agreement.
inline constexpr double kGradCheckTolerance = 1e-4;

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps
/// vanishing gradients from turning rounding noise into huge ratios.
inline constexpr double kRelativeErrorFloor = 1e-6;

double relative_error(long double analytic, long double numeric);

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t min_samples = 200;
  std::uint64_t seed = 0;
  std::optional<LayerKind> corrupt;  // mutation harness
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::map<std::string, double> per_layer;  // keyed by LayerKind name
  std::size_t sampled = 0;

  bool passed(double tolerance = kGradCheckTolerance) const { return max_rel_error < tolerance; }
};

/// Central-difference check of a full model built in extended precision with
/// seeded random parameters. Dropout runs in eval mode. `embedding_rows`
/// must exceed every id in `input`.
GradCheckReport grad_check(const ModelSpec& spec, const FeatureVector& input, int label,
                           std::size_t embedding_rows, const GradCheckOptions& options = {});

struct LayerCheck {
  LayerKind layer;
  double max_rel_error;
};

/// Per-layer checks on small seeded instances (embedding 4x3 with L=2,
/// conv1d 10x4 -> 5 filters, maxpool 12x3 width 2, dense 8 -> 4, dropout in
/// eval and fixed-mask train mode, BiLSTM L=5 d=4 u=3).
std::vector<LayerCheck> check_layers(std::uint64_t seed, std::optional<LayerKind> corrupt = std::nullopt,
                                     double step = 1e-5);

/// Small architectures used by the `gradcheck` command and the acceptance suite.
ModelSpec tiny_spec(ModelKind kind);
FeatureVector random_input(std::size_t length, std::size_t rows, std::uint64_t seed);

}  // namespace geosent::nn
