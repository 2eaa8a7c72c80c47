#include <doctest.h>

#include <algorithm>
#include <vector>

#include "sparsesense/classify.hpp"
#include "sparsesense/errors.hpp"
#include "sparsesense/synthetic.hpp"
#include "test_util.hpp"

using namespace sparsesense;

namespace {

struct Pipeline {
  DataMatrix train;  // centered
  FeatureBasis basis;
  DiscriminantModel lda;
  SparseSolution solution;
};

Pipeline fit_pipeline(const DataMatrix& raw, int r, bool with_sensors = true) {
  Pipeline p;
  p.train = center_rows(raw);
  p.basis = snapshot_pca(p.train, r);
  p.lda = fit_lda(project(p.basis, p.train.values), p.train.labels, p.train.num_classes);
  if (!with_sensors) return p;
  SparseProblem problem;
  problem.dictionary = p.basis.basis.transpose();
  problem.targets = p.lda.w;
  p.solution = solve(problem);
  return p;
}

DataMatrix small_synthetic(int classes, int side, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.height = side;
  spec.width = side;
  spec.seed = seed;
  return generate_synthetic(spec);
}

Eigen::MatrixXd probes(const DataMatrix& like, int count, std::uint64_t seed) {
  // Random inputs at the data's scale around its mean.
  const Eigen::VectorXd mean = like.values.rowwise().mean();
  const double scale = (like.values.colwise() - mean).cwiseAbs().maxCoeff();
  return (scale * testutil::gaussian(like.dims(), count, seed)).colwise() + mean;
}

ClassifierModel manual_centroid_model(const Eigen::MatrixXd& centroids) {
  ClassifierModel m;
  m.route = ClassifierRoute::retrained;
  m.measurement = MeasurementMatrix::identity(static_cast<int>(centroids.rows()));
  m.measured_means = Eigen::VectorXd::Zero(centroids.rows());
  m.num_classes = static_cast<int>(centroids.cols());
  m.projection = Eigen::MatrixXd::Identity(centroids.rows(), centroids.rows());
  m.w = m.projection;
  m.centroids_decision = centroids;
  return m;
}

}  // namespace

TEST_CASE("induced route with the identity measurement equals the full route") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const DataMatrix raw = small_synthetic(2 + static_cast<int>(seed % 2), 16, seed);
    const Pipeline p = fit_pipeline(raw, 10);
    REQUIRE(p.solution.converged);
    const ClassifierModel full = build_full(p.basis, p.lda, p.train.row_means);
    const ClassifierModel induced = build_induced(p.basis, p.lda, p.solution,
                                                  MeasurementMatrix::identity(raw.dims()), p.train);
    const Eigen::MatrixXd X = probes(raw, 1000, 10 + seed);
    CHECK(decide_batch(induced, X) == decide_batch(full, X));
    CHECK(decide_batch(induced, raw.values) == decide_batch(full, raw.values));
  }
}

TEST_CASE("induced route: T is symmetric and the shapes follow q") {
  const DataMatrix raw = small_synthetic(3, 16, 4);
  const Pipeline p = fit_pipeline(raw, 10);
  const MeasurementMatrix M = from_solution(p.solution, raw.dims());
  const ClassifierModel model = build_induced(p.basis, p.lda, p.solution, M, p.train);
  const int q = M.rows();
  CHECK(model.T.rows() == q);
  CHECK(model.T.cols() == q);
  CHECK((model.T - model.T.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(model.z.rows() == q);
  CHECK(model.z.cols() == 2);
  CHECK(model.centroids_decision.cols() == 3);
}

TEST_CASE("induced route: decision agreement with the full route on the synthetic suite") {
  // The first run measured 0.99 on this fixed instance; 0.97 is the frozen
  // regression bound (the required floor is 0.90).
  const DataMatrix raw = small_synthetic(2, 32, 1);
  const Pipeline p = fit_pipeline(raw, 20);
  const MeasurementMatrix M = from_solution(p.solution, raw.dims());
  const ClassifierModel full = build_full(p.basis, p.lda, p.train.row_means);
  const ClassifierModel induced = build_induced(p.basis, p.lda, p.solution, M, p.train);
  const std::vector<int> a = decide_batch(full, raw.values);
  const std::vector<int> b = decide_batch(induced, raw.values);
  int same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  const double agreement = static_cast<double>(same) / static_cast<double>(a.size());
  MESSAGE("induced/full decision agreement " << agreement);
  CHECK(agreement >= 0.97);
}

TEST_CASE("retrained route: separable two-sensor data is classified perfectly") {
  Eigen::MatrixXd X(2, 20);
  std::vector<int> labels;
  const Eigen::MatrixXd noise = 0.1 * testutil::gaussian(2, 20, 3);
  for (int i = 0; i < 20; ++i) {
    const int c = i < 10 ? 0 : 1;
    X.col(i) = Eigen::Vector2d(c == 0 ? -2.0 : 2.0, 1.0) + noise.col(i);
    labels.push_back(c);
  }
  const ClassifierModel model = build_retrained(X, labels, 2, MeasurementMatrix::identity(2));
  CHECK(accuracy(model, X, labels) == 1.0);
  CHECK(model.threshold.has_value());
  // One sensor is enough for two classes; the first coordinate alone separates them.
  const ClassifierModel single = build_retrained(X.topRows(1), labels, 2, MeasurementMatrix::selector({0}, 2));
  CHECK(accuracy(single, X, labels) == 1.0);
  std::vector<int> three = labels;
  three[0] = 2;
  three[1] = 2;
  CHECK_THROWS_AS(build_retrained(X.topRows(1), three, 3, MeasurementMatrix::selector({0}, 2)),
                  PreconditionError);  // q < c - 1
}

TEST_CASE("retrained route with every pixel matches the full route") {
  // r = n turns PCA into a rotation of pixel space, under which LDA decisions
  // are invariant.
  const DataMatrix raw = small_synthetic(2, 6, 7);
  const Pipeline p = fit_pipeline(raw, 36, false);
  const ClassifierModel full = build_full(p.basis, p.lda, p.train.row_means);
  const ClassifierModel retrained =
      build_retrained(raw.values, raw.labels, 2, MeasurementMatrix::identity(raw.dims()));
  const Eigen::MatrixXd X = probes(raw, 500, 8);
  const std::vector<int> a = decide_batch(full, X), b = decide_batch(retrained, X);
  int same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  CHECK(same >= 495);
  CHECK(std::abs(accuracy(full, raw.values, raw.labels) - accuracy(retrained, raw.values, raw.labels)) <= 0.01);
}

TEST_CASE("decide: a class centroid maps to its own class") {
  const DataMatrix raw = small_synthetic(3, 12, 9);
  const Pipeline p = fit_pipeline(raw, 8);
  const ClassifierModel full = build_full(p.basis, p.lda, p.train.row_means);
  for (int j = 0; j < 3; ++j) {
    const Eigen::VectorXd x = p.train.row_means + p.basis.basis * p.lda.centroids_feature.col(j);
    CHECK(decide(full, x) == j);
  }
}

TEST_CASE("decide: ties resolve to the lower class id") {
  // Two classes on the threshold itself.
  ClassifierModel two = manual_centroid_model((Eigen::MatrixXd(1, 2) << 3.0, 1.0).finished());
  TwoClassThreshold t;
  t.threshold = 2.0;
  t.class0_side = 1.0;
  two.threshold = t;
  CHECK(decide(two, Eigen::VectorXd::Constant(1, 2.0)) == 0);
  t.class0_side = -1.0;
  two.threshold = t;
  CHECK(decide(two, Eigen::VectorXd::Constant(1, 2.0)) == 0);

  // Equidistant from centroids 1 and 2 (and farther from 0).
  Eigen::MatrixXd c3(2, 3);
  c3 << 10, 1, -1,
        10, 0, 0;
  const ClassifierModel three = manual_centroid_model(c3);
  CHECK(decide(three, Eigen::Vector2d(0.0, 0.0)) == 1);
  CHECK(decide(three, Eigen::Vector2d(0.0, 5.0)) == 1);
  CHECK(decide(three, Eigen::Vector2d(-2.0, 0.0)) == 2);
}

TEST_CASE("decide: pixels off the sensor set do not matter") {
  const DataMatrix raw = small_synthetic(2, 16, 11);
  const Pipeline p = fit_pipeline(raw, 10);
  const MeasurementMatrix M = from_solution(p.solution, raw.dims());
  const ClassifierModel induced = build_induced(p.basis, p.lda, p.solution, M, p.train);
  const ClassifierModel retrained = build_retrained(M.apply(raw.values), raw.labels, 2, M);
  Eigen::MatrixXd X = probes(raw, 50, 12);
  const std::vector<int> before_i = decide_batch(induced, X), before_r = decide_batch(retrained, X);
  Eigen::MatrixXd bump = 100.0 * testutil::gaussian(raw.dims(), 50, 13);
  for (int i : M.indices()) bump.row(i).setZero();
  X += bump;
  CHECK(decide_batch(induced, X) == before_i);
  CHECK(decide_batch(retrained, X) == before_r);
}

TEST_CASE("decide: relabeling classes permutes the outputs") {
  const DataMatrix raw = small_synthetic(3, 12, 14);
  const Pipeline p = fit_pipeline(raw, 8);
  const MeasurementMatrix M = from_solution(p.solution, raw.dims());
  const std::vector<int> perm{2, 0, 1};
  std::vector<int> relabeled;
  for (int l : raw.labels) relabeled.push_back(perm[static_cast<std::size_t>(l)]);
  const ClassifierModel a = build_retrained(M.apply(raw.values), raw.labels, 3, M);
  const ClassifierModel b = build_retrained(M.apply(raw.values), relabeled, 3, M);
  const Eigen::MatrixXd X = probes(raw, 300, 15);
  const std::vector<int> da = decide_batch(a, X), db = decide_batch(b, X);
  for (std::size_t i = 0; i < da.size(); ++i) CHECK(db[i] == perm[static_cast<std::size_t>(da[i])]);
}

TEST_CASE("prepend_measurement applies the upstream map first") {
  const DataMatrix raw = small_synthetic(2, 16, 16);
  const MeasurementMatrix sub = random_pixels(raw.dims(), 60, 17);
  DataMatrix reduced = raw;
  reduced.values = sub.apply(raw.values);
  reduced.row_means = Eigen::VectorXd::Zero(60);
  const Pipeline p = fit_pipeline(reduced, 10);
  const MeasurementMatrix M = from_solution(p.solution, 60);
  const ClassifierModel inner = build_retrained(M.apply(reduced.values), raw.labels, 2, M);
  const ClassifierModel outer = prepend_measurement(inner, sub);
  CHECK(outer.dims() == raw.dims());
  const Eigen::MatrixXd X = probes(raw, 100, 18);
  CHECK(decide_batch(outer, X) == decide_batch(inner, sub.apply(X)));
}

TEST_CASE("model bundle round trip preserves decisions") {
  testutil::TempDir dir;
  const DataMatrix raw = small_synthetic(3, 12, 19);
  const Pipeline p = fit_pipeline(raw, 8);
  const MeasurementMatrix M = from_solution(p.solution, raw.dims());
  std::vector<ClassifierModel> models{
      build_full(p.basis, p.lda, p.train.row_means, raw.class_names),
      build_induced(p.basis, p.lda, p.solution, M, p.train),
      build_retrained(M.apply(raw.values), raw.labels, 3, M, raw.class_names),
      prepend_measurement(build_retrained(M.apply(raw.values), raw.labels, 3, M), MeasurementMatrix::identity(raw.dims()))};
  const Eigen::MatrixXd X = probes(raw, 200, 20);
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto path = dir / ("m" + std::to_string(k));
    save_model_bundle(path, models[k]);
    const ClassifierModel back = load_model_bundle(path);
    CHECK(back.route == models[k].route);
    CHECK(back.class_names == models[k].class_names);
    CHECK(decide_batch(back, X) == decide_batch(models[k], X));
  }
  CHECK_THROWS_AS(load_model_bundle(dir / "missing"), IoError);
}

TEST_CASE("decide: dimension mismatch") {
  const DataMatrix raw = small_synthetic(2, 8, 21);
  const Pipeline p = fit_pipeline(raw, 5);
  const ClassifierModel full = build_full(p.basis, p.lda, p.train.row_means);
  CHECK_THROWS_AS(decide(full, Eigen::VectorXd::Zero(63)), DimensionError);
  CHECK_THROWS_AS(decide_batch(full, Eigen::MatrixXd::Zero(65, 2)), DimensionError);
  CHECK_THROWS_AS(route_from_string("svm"), PreconditionError);
  CHECK(route_from_string(to_string(ClassifierRoute::induced)) == ClassifierRoute::induced);
}
