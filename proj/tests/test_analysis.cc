#include <doctest.h>

#include <cmath>

#include "slicescope/analysis.h"
#include "slicescope/errors.h"
#include "slicescope/influence.h"
#include "slicescope/train.h"
#include "test_util.h"

using namespace slicescope;
using testutil::random_vector;

namespace {

SliceReport report_for(const std::vector<std::size_t>& members, const Matrix& embeddings) {
  const std::vector<std::size_t> zeros(static_cast<std::size_t>(embeddings.rows()), 0);
  return build_slice_report(0, members, embeddings, zeros, zeros, 2);
}

}  // namespace

TEST_CASE("slice report fields") {
  Matrix embeddings(4, 2);
  embeddings << 1, 0, 3, 0, 0, 5, 7, 7;
  const std::vector<std::size_t> labels{0, 1, 1, 2};
  const std::vector<std::size_t> predictions{0, 0, 1, 2};
  const SliceReport report = build_slice_report(3, {2, 0, 1}, embeddings, labels, predictions, 3);
  CHECK(report.slice_id == 3);
  CHECK(report.members == std::vector<std::size_t>{0, 1, 2});
  CHECK(report.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(report.label_histogram == std::vector<std::size_t>{1, 2, 0});
  CHECK(report.prediction_histogram == std::vector<std::size_t>{2, 1, 0});
  Vector sum(2);
  sum << 4, 5;
  CHECK(report.query_vector == sum);
  // Mean (4/3, 5/3).
  CHECK(report.coherence == doctest::Approx((embeddings.topRows(3).rowwise() - sum.transpose() / 3.0).squaredNorm()));
  CHECK(to_json(report).at("size") == 3);
}

TEST_CASE("orthogonal training rows have zero influence") {
  Matrix slice_rows(2, 4);
  slice_rows << 1, 1, 0, 0, 2, -1, 0, 0;
  Matrix train(3, 4);
  train << 0, 0, 1, 0, 0, 0, 0, 5, 0, 0, -2, 3;
  const SliceReport report = report_for({0, 1}, slice_rows);
  const OpponentList opponents = slice_opponents(report, train, Vector::Ones(4), 3);
  REQUIRE(opponents.entries.size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(opponents.entries[r].influence == 0.0);
    CHECK(opponents.entries[r].train_index == r);  // ties by index
  }
}

TEST_CASE("the negated query vector is the strongest opponent") {
  Rng rng(2);
  Matrix slice_rows(5, 3);
  for (Eigen::Index i = 0; i < slice_rows.size(); ++i) slice_rows.data()[i] = rng.normal();
  const SliceReport report = report_for({0, 1, 2, 3, 4}, slice_rows);
  const Vector v = report.query_vector;
  Matrix train(20, 3);
  for (Eigen::Index i = 0; i < train.size(); ++i) train.data()[i] = 0.1 * rng.normal();
  train.row(13) = -v.transpose();
  train.row(7) = v.transpose();
  const OpponentList opponents = slice_opponents(report, train, Vector::Ones(3), 5);
  CHECK(opponents.k == 5);
  CHECK(opponents.entries.front().train_index == 13);
  CHECK(opponents.entries.front().influence == doctest::Approx(-v.squaredNorm()).epsilon(1e-12));
  for (std::size_t r = 1; r < 5; ++r) {
    CHECK(opponents.entries[r - 1].influence <= opponents.entries[r].influence);
    CHECK(opponents.entries[r].train_index != 7);
  }

  // Flipping a sign reverses that coordinate's contribution.
  Vector signs = Vector::Ones(3);
  signs[0] = -1;
  const OpponentList flipped = slice_opponents(report, train, signs, 20);
  for (const auto& entry : flipped.entries) {
    const Vector row = train.row(static_cast<Eigen::Index>(entry.train_index)).transpose();
    CHECK(entry.influence == doctest::Approx(row.dot(signs.cwiseProduct(v))));
  }
}

TEST_CASE("opponent scores equal summed practical influence") {
  Rng rng(3);
  auto [train_set, test_set] = testutil::cluster_split(rng, 120, 40, 3, 3);
  const ModelSpec spec = ModelSpec::mlp(3, 4, 3);
  TrainOptions options;
  options.epochs = 80;
  options.learning_rate = 0.2;
  const Model model(spec, train(spec, train_set, options, 1));
  FactorOptions factor_options;
  factor_options.arnoldi_dim = 20;
  factor_options.rank = 10;
  const HessianFactors factors = factor_hessian(model, train_set, factor_options);
  const EmbeddingMatrix train_rows = get_embeddings(train_set, factors, model, DatasetRole::kTrain);
  const EmbeddingMatrix test_rows = get_embeddings(test_set, factors, model);

  const std::vector<std::size_t> members{1, 4, 9, 16, 25};
  const SliceReport report = report_for(members, test_rows.rows);
  const OpponentList opponents = slice_opponents(report, train_rows.rows, factors.signs, train_set.size());
  for (std::size_t r = 0; r < opponents.entries.size(); r += 11) {
    const auto& entry = opponents.entries[r];
    double direct = 0.0;
    for (std::size_t m : members) direct += practical_influence(factors, model, train_set[entry.train_index], test_set[m]);
    CHECK(entry.influence == doctest::Approx(direct).epsilon(1e-9).scale(1e-12));
  }
}

TEST_CASE("opponent contract violations") {
  Matrix rows = Matrix::Ones(3, 2);
  const SliceReport report = report_for({0}, rows);
  CHECK_THROWS_AS(slice_opponents(report, rows, Vector::Ones(2), 4), ContractViolation);
  CHECK_THROWS_AS(slice_opponents(report, rows, Vector::Ones(3), 1), ContractViolation);
  const SliceReport empty = report_for({}, rows);
  CHECK_THROWS_AS(slice_opponents(empty, rows, Vector::Ones(2), 1), ContractViolation);
}

TEST_CASE("coherence scores") {
  SUBCASE("two points at distance d") {
    Matrix points(2, 3);
    points << 0, 0, 0, 3, 4, 0;
    const CoherenceScores scores = coherence_score(points, Partition{{0, 0}, 1});
    CHECK(scores.aggregate == doctest::Approx(25.0 / 2.0));
    CHECK(scores.per_example == doctest::Approx(25.0 / 4.0));
  }
  SUBCASE("singletons are perfectly coherent") {
    Rng rng(4);
    Matrix points(5, 2);
    for (Eigen::Index i = 0; i < points.size(); ++i) points.data()[i] = rng.normal();
    CHECK(coherence_score(points, Partition{{0, 1, 2, 3, 4}, 5}).aggregate == 0.0);
  }
  SUBCASE("matches a naive computation") {
    Rng rng(5);
    Matrix points(30, 3);
    for (Eigen::Index i = 0; i < points.size(); ++i) points.data()[i] = rng.normal();
    Partition partition{std::vector<std::size_t>(30), 4};
    for (std::size_t i = 0; i < 30; ++i) partition.assignments[i] = (i * 7) % 4;
    double naive = 0.0;
    for (std::size_t s = 0; s < 4; ++s) {
      // Sum of squared pairwise distances / (2 n) equals the spread about the mean.
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < 30; ++i) if (partition.assignments[i] == s) members.push_back(i);
      double pairwise = 0.0;
      for (std::size_t a : members) {
        for (std::size_t b : members) pairwise += (points.row(static_cast<Eigen::Index>(a)) - points.row(static_cast<Eigen::Index>(b))).squaredNorm();
      }
      naive += pairwise / (2.0 * static_cast<double>(members.size()));
    }
    CHECK(coherence_score(points, partition).aggregate == doctest::Approx(naive).epsilon(1e-12));
  }
  SUBCASE("equals the converged k-means objective") {
    Rng rng(6);
    Matrix points(200, 3);
    for (Eigen::Index i = 0; i < points.size(); ++i) points.data()[i] = rng.normal();
    KMeansOptions options;
    options.k = 5;
    options.max_iters = 500;
    options.tolerance = 1e-14;
    options.normalize_centroids = false;
    const KMeansResult result = kmeans(points, options);
    REQUIRE(result.iterations < 500);
    CHECK(coherence_score(points, result.partition).aggregate ==
          doctest::Approx(result.objective_history.back()).epsilon(1e-10));
  }
}

TEST_CASE("label homogeneity") {
  std::vector<std::size_t> labels(139, 0);
  for (std::size_t i = 130; i < 139; ++i) labels[i] = 1 + i % 2;
  std::vector<std::size_t> predictions(139, 2);
  std::vector<std::size_t> members(139);
  for (std::size_t i = 0; i < 139; ++i) members[i] = i;
  const Homogeneity h = label_homogeneity(members, labels, predictions);
  CHECK(h.label_purity == doctest::Approx(130.0 / 139.0));
  CHECK(h.label_purity == doctest::Approx(0.935).epsilon(1e-3));
  CHECK(h.prediction_purity == 1.0);
  CHECK_THROWS_AS(label_homogeneity({}, labels, predictions), ContractViolation);

  const std::vector<std::size_t> halves{0, 0, 1, 1};
  CHECK(label_homogeneity({0, 1, 2, 3}, halves, halves).label_purity == 0.5);
}

TEST_CASE("margin kernel") {
  Rng rng(7);
  const ModelSpec spec = ModelSpec::softmax_linear(4, 3, false);
  const Model model(spec, ParamVector(random_vector(rng, 12)));
  const Example a = testutil::random_example(rng, 4, 3);
  const Example b = testutil::random_example(rng, 4, 3);
  CHECK(margin_kernel(a, b, model) == doctest::Approx(model.grad(a).dot(model.grad(b))).epsilon(1e-12));
  CHECK(margin_kernel(a, Example::with_class(Vector::Zero(4), 1, 3), model) == 0.0);

  Vector x1 = Vector::Zero(4), x2 = Vector::Zero(4);
  x1[0] = 1.0;
  x2[1] = 2.0;
  CHECK(margin_kernel(Example::with_class(x1, 0, 3), Example::with_class(x2, 2, 3), model) == 0.0);

  // Confident correct prediction: vanishing margin.
  Vector theta = Vector::Zero(12);
  theta[0] = 900.0;
  const Model sure(spec, ParamVector(theta));
  Vector x = Vector::Zero(4);
  x[0] = 1.0;
  CHECK(std::abs(margin_kernel(Example::with_class(x, 0, 3), b, sure)) < 1e-300);

  const Model biased(ModelSpec::softmax_linear(4, 3, true), ParamVector(Vector::Zero(15)));
  CHECK_THROWS_AS(margin_kernel(a, b, biased), UnsupportedModelError);
  const ModelSpec mlp = ModelSpec::mlp(4, 2, 3, false);
  const Model deep(mlp, ParamVector(Vector::Zero(static_cast<Eigen::Index>(mlp.param_count()))));
  CHECK_THROWS_AS(margin_kernel(a, b, deep), UnsupportedModelError);
}
