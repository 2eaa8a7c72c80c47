#pragma once

#include <cstdint>
#include <json.hpp>

#include "sparsesense/matrixio.hpp"

namespace sparsesense {

/// Seeded image-like dataset: c classes of height x width samples.
///
/// Each sample is base_level + sum_k a_k * mode_k + class_offset_j + noise,
/// where the modes are smooth fields made of a few Gaussian blobs and shared by
/// every class (coefficients a_k ~ N(0, (structure_scale * (k+1)^-structure_decay)^2)),
/// class_offset_j is a fixed combination of the same modes scaled to RMS
/// class_offset, and the noise is isotropic Gaussian. The noise-free signal
/// therefore has rank structure_rank.
struct SyntheticSpec {
  int classes = 2;
  int height = 32;
  int width = 32;
  int samples_per_class = 100;
  int structure_rank = 20;
  double structure_scale = 0.15;
  double structure_decay = 0.5;
  double class_offset = 0.1;
  int blobs_per_mode = 3;
  double blob_radius = 2.5;
  double noise = 0.02;
  double base_level = 0.5;
  std::uint64_t seed = 1;
};

DataMatrix generate_synthetic(const SyntheticSpec& spec);

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_from_json(const nlohmann::json& j, SyntheticSpec defaults = {});

}  // namespace sparsesense
