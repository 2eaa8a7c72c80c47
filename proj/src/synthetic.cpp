#include "sparsesense/synthetic.hpp"

#include <cmath>

#include "sparsesense/errors.hpp"
#include "sparsesense/rng.hpp"

namespace sparsesense {

namespace {

enum Stream : std::uint64_t { kModes = 1, kClassMeans = 2, kSamples = 3 };

Eigen::VectorXd blob_field(const SyntheticSpec& spec, Rng& rng) {
  Eigen::VectorXd field = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.height) * spec.width);
  const double margin = spec.blob_radius;
  for (int b = 0; b < spec.blobs_per_mode; ++b) {
    const double cy = margin + (spec.height - 2.0 * margin) * rng.uniform01();
    const double cx = margin + (spec.width - 2.0 * margin) * rng.uniform01();
    const double sign = rng.coin() ? 1.0 : -1.0;
    const double inv = 1.0 / (2.0 * spec.blob_radius * spec.blob_radius);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        field(y * spec.width + x) += sign * std::exp(-d2 * inv);
      }
  }
  // unit root-mean-square per pixel
  const double rms = field.norm() / std::sqrt(static_cast<double>(field.size()));
  return rms > 0.0 ? Eigen::VectorXd(field / rms) : field;
}

}  // namespace

DataMatrix generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw PreconditionError("synthetic data needs at least 2 classes");
  if (spec.height < 1 || spec.width < 1 || spec.samples_per_class < 2)
    throw PreconditionError("synthetic data needs a positive image size and >= 2 samples per class");
  if (spec.structure_rank < 0) throw PreconditionError("structure rank must be non-negative");

  const Eigen::Index n = static_cast<Eigen::Index>(spec.height) * spec.width;
  Rng mode_rng(derive_seed(spec.seed, kModes));
  Eigen::MatrixXd modes(n, spec.structure_rank);
  for (int k = 0; k < spec.structure_rank; ++k) modes.col(k) = blob_field(spec, mode_rng);

  // Class means lie in the span of the shared modes, with the same spectral
  // weighting as the sample coefficients, so the whole signal has rank
  // structure_rank.
  Rng mean_rng(derive_seed(spec.seed, kClassMeans));
  Eigen::MatrixXd offsets = Eigen::MatrixXd::Zero(n, spec.classes);
  for (int j = 0; j < spec.classes && spec.structure_rank > 0; ++j) {
    Eigen::VectorXd b(spec.structure_rank);
    for (int k = 0; k < spec.structure_rank; ++k) b(k) = std::pow(k + 1.0, -spec.structure_decay) * mean_rng.normal();
    const Eigen::VectorXd field = modes * b;
    const double rms = field.norm() / std::sqrt(static_cast<double>(n));
    if (rms > 0.0) offsets.col(j) = spec.class_offset / rms * field;
  }

  Rng rng(derive_seed(spec.seed, kSamples));
  const Eigen::Index m = static_cast<Eigen::Index>(spec.classes) * spec.samples_per_class;
  DataMatrix X;
  X.values.resize(n, m);
  X.labels.reserve(static_cast<std::size_t>(m));
  X.num_classes = spec.classes;
  for (int j = 0; j < spec.classes; ++j) X.class_names.push_back("class" + std::to_string(j));

  Eigen::VectorXd coeff(spec.structure_rank);
  Eigen::Index col = 0;
  for (int j = 0; j < spec.classes; ++j) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      for (int k = 0; k < spec.structure_rank; ++k)
        coeff(k) = spec.structure_scale * std::pow(k + 1.0, -spec.structure_decay) * rng.normal();
      Eigen::VectorXd sample = modes * coeff + offsets.col(j);
      for (Eigen::Index i = 0; i < n; ++i) sample(i) += spec.base_level + spec.noise * rng.normal();
      X.values.col(col++) = sample;
      X.labels.push_back(j);
    }
  }
  X.row_means = Eigen::VectorXd::Zero(n);
  return X;
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"classes", s.classes},
          {"height", s.height},
          {"width", s.width},
          {"samples_per_class", s.samples_per_class},
          {"structure_rank", s.structure_rank},
          {"structure_scale", s.structure_scale},
          {"structure_decay", s.structure_decay},
          {"class_offset", s.class_offset},
          {"blobs_per_mode", s.blobs_per_mode},
          {"blob_radius", s.blob_radius},
          {"noise", s.noise},
          {"base_level", s.base_level},
          {"seed", s.seed}};
}

SyntheticSpec synthetic_from_json(const nlohmann::json& j, SyntheticSpec s) {
  s.classes = j.value("classes", s.classes);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
  s.structure_rank = j.value("structure_rank", s.structure_rank);
  s.structure_scale = j.value("structure_scale", s.structure_scale);
  s.structure_decay = j.value("structure_decay", s.structure_decay);
  s.class_offset = j.value("class_offset", s.class_offset);
  s.blobs_per_mode = j.value("blobs_per_mode", s.blobs_per_mode);
  s.blob_radius = j.value("blob_radius", s.blob_radius);
  s.noise = j.value("noise", s.noise);
  s.base_level = j.value("base_level", s.base_level);
  s.seed = j.value("seed", s.seed);
  return s;
}

}  // namespace sparsesense
