#include "slicescope/kmeans.h"

#include <algorithm>
#include <limits>

#include "slicescope/errors.h"
#include "slicescope/random.h"

namespace slicescope {

std::vector<std::vector<std::size_t>> Partition::slices() const {
  std::vector<std::vector<std::size_t>> out(num_slices);
  for (std::size_t i = 0; i < assignments.size(); ++i) out.at(assignments[i]).push_back(i);
  return out;
}

void Partition::validate() const {
  require(num_slices >= 1, "partition needs at least one slice");
  for (std::size_t id : assignments) require(id < num_slices, "slice id out of range");
}

std::string to_string(KMeansInit init) {
  switch (init) {
    case KMeansInit::kPlusPlus:
      return "kmeanspp";
    case KMeansInit::kRandom:
      return "random";
    case KMeansInit::kExplicit:
      return "explicit";
  }
  return "kmeanspp";
}

KMeansInit kmeans_init_from_string(const std::string& name) {
  if (name == "kmeanspp" || name == "kmeans++") return KMeansInit::kPlusPlus;
  if (name == "random") return KMeansInit::kRandom;
  if (name == "explicit") return KMeansInit::kExplicit;
  throw ContractViolation("unknown k-means init '" + name + "'");
}

namespace {

using Index = Eigen::Index;

Matrix initial_centroids(const Matrix& points, const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(points.rows());
  const std::size_t k = options.k;
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  Rng rng(options.seed);

  switch (options.init) {
    case KMeansInit::kExplicit:
      require(options.initial_indices.size() == k, "explicit init needs exactly k indices");
      for (std::size_t i : options.initial_indices) require(i < n, "explicit init index out of range");
      chosen = options.initial_indices;
      break;
    case KMeansInit::kRandom: {
      std::vector<std::size_t> pool(n);
      for (std::size_t i = 0; i < n; ++i) pool[i] = i;
      for (std::size_t i = 0; i < k; ++i) {
        std::swap(pool[i], pool[i + rng.below(n - i)]);
        chosen.push_back(pool[i]);
      }
      break;
    }
    case KMeansInit::kPlusPlus: {
      std::vector<bool> taken(n, false);
      std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
      std::size_t next = rng.below(n);
      for (std::size_t c = 0; c < k; ++c) {
        chosen.push_back(next);
        taken[next] = true;
        if (c + 1 == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = (points.row(static_cast<Index>(i)) - points.row(static_cast<Index>(next)))
                               .squaredNorm();
          nearest[i] = std::min(nearest[i], d);
          if (!taken[i]) total += nearest[i];
        }
        if (total <= 0.0) {
          // Remaining points coincide with chosen centers; take the first free one.
          next = static_cast<std::size_t>(std::find(taken.begin(), taken.end(), false) - taken.begin());
          continue;
        }
        const double target = rng.uniform() * total;
        double running = 0.0;
        next = n;
        std::size_t last_free = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (taken[i]) continue;
          last_free = i;
          running += nearest[i];
          if (running > target && nearest[i] > 0.0) {
            next = i;
            break;
          }
        }
        if (next == n) next = last_free;
      }
      break;
    }
  }

  Matrix centroids(static_cast<Index>(k), points.cols());
  for (std::size_t c = 0; c < k; ++c) {
    centroids.row(static_cast<Index>(c)) = points.row(static_cast<Index>(chosen[c]));
  }
  return centroids;
}

// Returns the objective; fills assignments and per-point squared distances.
double assign(const Matrix& points, const Matrix& centroids, std::vector<std::size_t>& assignments,
              std::vector<double>& distances) {
  const Index n = points.rows();
  const Index k = centroids.rows();
  double objective = 0.0;
  for (Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    Index best_cluster = 0;
    for (Index c = 0; c < k; ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        best_cluster = c;
      }
    }
    assignments[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best_cluster);
    distances[static_cast<std::size_t>(i)] = best;
    objective += best;
  }
  return objective;
}

void fill_empty_clusters(std::size_t k, std::vector<std::size_t>& assignments,
                         std::vector<double>& distances) {
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t a : assignments) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    std::size_t donor = assignments.size();
    double farthest = -1.0;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (counts[assignments[i]] > 1 && distances[i] > farthest) {
        farthest = distances[i];
        donor = i;
      }
    }
    if (donor == assignments.size()) return;
    --counts[assignments[donor]];
    assignments[donor] = c;
    distances[donor] = 0.0;
    counts[c] = 1;
  }
}

}  // namespace

KMeansResult kmeans(const Matrix& points, const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(points.rows());
  require(options.k >= 1, "k-means needs k >= 1");
  require(options.k <= n, "k-means needs at least k points");
  require(options.max_iters >= 1, "k-means needs max_iters >= 1");
  require(options.tolerance > 0.0, "k-means tolerance must be positive");
  require(points.allFinite(), "k-means input has non-finite entries");

  const std::size_t k = options.k;
  KMeansResult result;
  Matrix centroids = initial_centroids(points, options);
  std::vector<std::size_t> assignments(n, 0);
  std::vector<std::size_t> previous;
  std::vector<double> distances(n, 0.0);

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    result.objective_history.push_back(assign(points, centroids, assignments, distances));
    result.iterations = iter + 1;
    if (assignments == previous) break;
    fill_empty_clusters(k, assignments, distances);
    previous = assignments;

    // Fixed-order reduction keeps the update deterministic.
    Matrix updated = Matrix::Zero(static_cast<Index>(k), points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      updated.row(static_cast<Index>(assignments[i])) += points.row(static_cast<Index>(i));
      ++counts[assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      auto row = updated.row(static_cast<Index>(c));
      if (counts[c] == 0) {
        row = centroids.row(static_cast<Index>(c));
        continue;
      }
      row /= static_cast<double>(counts[c]);
      if (options.normalize_centroids) {
        const double norm = row.norm();
        if (norm > 0.0) row /= norm;
      }
    }
    const double shift = (updated - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(updated);
    if (shift < options.tolerance) break;
  }

  result.partition.assignments = std::move(assignments);
  result.partition.num_slices = k;
  result.centroids = std::move(centroids);
  return result;
}

std::vector<double> slice_objectives(const Matrix& points, const Partition& partition) {
  partition.validate();
  require(partition.size() == static_cast<std::size_t>(points.rows()),
          "partition size does not match point count");
  std::vector<double> out(partition.num_slices, 0.0);
  const auto members = partition.slices();
  for (std::size_t s = 0; s < members.size(); ++s) {
    if (members[s].empty()) continue;
    Vector mean = Vector::Zero(points.cols());
    for (std::size_t i : members[s]) mean += points.row(static_cast<Index>(i)).transpose();
    mean /= static_cast<double>(members[s].size());
    for (std::size_t i : members[s]) {
      out[s] += (points.row(static_cast<Index>(i)).transpose() - mean).squaredNorm();
    }
  }
  return out;
}

}  // namespace slicescope
