#ifndef SLICESCOPE_KMEANS_H_
#define SLICESCOPE_KMEANS_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "slicescope/dataset.h"

namespace slicescope {

// Assignment of every test example to exactly one slice in [0, num_slices).
struct Partition {
  std::vector<std::size_t> assignments;
  std::size_t num_slices = 0;

  std::size_t size() const { return assignments.size(); }
  // Member indices of each slice, ascending.
  std::vector<std::vector<std::size_t>> slices() const;
  // Throws ContractViolation unless every id lies in [0, num_slices).
  void validate() const;
};

enum class KMeansInit { kPlusPlus, kRandom, kExplicit };

std::string to_string(KMeansInit init);
KMeansInit kmeans_init_from_string(const std::string& name);

struct KMeansOptions {
  std::size_t k = 10;
  std::size_t max_iters = 100;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  KMeansInit init = KMeansInit::kPlusPlus;
  // Rescale every updated centroid to unit norm (zero centroids stay zero).
  bool normalize_centroids = true;
  // Row indices used as initial centroids when init == kExplicit.
  std::vector<std::size_t> initial_indices;
};

struct KMeansResult {
  Partition partition;
  Matrix centroids;  // k x d after the last update
  // Sum of squared distances to the assigned centroid, one entry per
  // assignment step.
  std::vector<double> objective_history;
  std::size_t iterations = 0;
};

// Lloyd's algorithm with Euclidean distance. Ties go to the lowest cluster
// index. A cluster left empty by an assignment step takes the point farthest
// from its own centroid (among clusters with more than one member).
KMeansResult kmeans(const Matrix& points, const KMeansOptions& options);

// Within-slice sum of squared distances to each slice's mean.
std::vector<double> slice_objectives(const Matrix& points, const Partition& partition);

}  // namespace slicescope

#endif  // SLICESCOPE_KMEANS_H_
