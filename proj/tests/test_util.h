#ifndef SLICESCOPE_TESTS_TEST_UTIL_H_
#define SLICESCOPE_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "slicescope/dataset.h"
#include "slicescope/model.h"
#include "slicescope/random.h"

namespace testutil {

using slicescope::Example;
using slicescope::LabeledDataset;
using slicescope::Rng;
using slicescope::Vector;

inline double rel(const Vector& got, const Vector& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-300);
}

inline Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
  return v;
}

inline Example random_example(Rng& rng, std::size_t features, std::size_t classes) {
  return Example::with_class(random_vector(rng, features), rng.below(classes), classes);
}

inline LabeledDataset random_dataset(Rng& rng, std::size_t n, std::size_t features, std::size_t classes) {
  std::vector<Example> examples;
  for (std::size_t i = 0; i < n; ++i) examples.push_back(random_example(rng, features, classes));
  return LabeledDataset(std::move(examples), features, classes);
}

// Train/test draws around shared class means.
inline std::pair<LabeledDataset, LabeledDataset> cluster_split(Rng& rng, std::size_t n_train,
                                                               std::size_t n_test, std::size_t features,
                                                               std::size_t classes, double scale = 1.5) {
  std::vector<Vector> means;
  for (std::size_t c = 0; c < classes; ++c) means.push_back(random_vector(rng, features, scale));
  auto draw = [&](std::size_t n) {
    std::vector<Example> examples;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = rng.below(classes);
      examples.push_back(Example::with_class(means[c] + random_vector(rng, features), c, classes));
    }
    return LabeledDataset(std::move(examples), features, classes);
  };
  LabeledDataset train_set = draw(n_train);
  return {std::move(train_set), draw(n_test)};
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(
                                                std::chrono::steady_clock::now().time_since_epoch().count()));
    path_ = std::filesystem::temp_directory_path() / ("slicescope-" + tag + "-" + std::to_string(rng.next()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ignored;
    std::filesystem::remove_all(path_, ignored);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil

#endif  // SLICESCOPE_TESTS_TEST_UTIL_H_
