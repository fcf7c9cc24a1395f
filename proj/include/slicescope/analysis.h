#ifndef SLICESCOPE_ANALYSIS_H_
#define SLICESCOPE_ANALYSIS_H_

#include <cstddef>
#include <vector>

#include "slicescope/kmeans.h"
#include "slicescope/model.h"
#include "slicescope/serialization.h"

namespace slicescope {

struct SliceReport {
  std::size_t slice_id = 0;
  std::vector<std::size_t> members;
  double accuracy = 0.0;
  std::vector<std::size_t> label_histogram;
  std::vector<std::size_t> prediction_histogram;
  // Within-slice k-means objective in embedding space.
  double coherence = 0.0;
  // Sum of member embeddings; the slice's aggregate influence direction.
  Vector query_vector;

  std::size_t size() const { return members.size(); }
};

// `labels` and `predictions` are class ids indexed like the embedding rows.
SliceReport build_slice_report(std::size_t slice_id, std::vector<std::size_t> members,
                               const Matrix& embeddings, const std::vector<std::size_t>& labels,
                               const std::vector<std::size_t>& predictions, std::size_t num_classes);

struct Opponent {
  std::size_t train_index = 0;
  double influence = 0.0;
};

struct OpponentList {
  std::vector<Opponent> entries;  // ascending influence, ties by index
  std::size_t k = 0;
};

// The k rows of `train_embeddings` with the most negative influence on the
// slice's total loss, scored as (S v)^T mu(z') with S = diag(signs).
OpponentList slice_opponents(const SliceReport& report, const Matrix& train_embeddings,
                             const Vector& signs, std::size_t k);

struct CoherenceScores {
  std::vector<double> per_slice;
  double aggregate = 0.0;
  // aggregate divided by the number of examples
  double per_example = 0.0;
};

CoherenceScores coherence_score(const Matrix& embeddings, const Partition& partition);

struct Homogeneity {
  double label_purity = 0.0;
  double prediction_purity = 0.0;
};

// Modal-class fraction of the members' labels and of their predictions.
Homogeneity label_homogeneity(const std::vector<std::size_t>& members,
                              const std::vector<std::size_t>& labels,
                              const std::vector<std::size_t>& predictions);

// (y - p)^T (y' - p') * x^T x', the factorized gradient inner product of a
// bias-free softmax-linear model. Throws UnsupportedModelError otherwise.
double margin_kernel(const Example& z, const Example& z_other, const Model& model);

Json to_json(const SliceReport& report);
Json to_json(const OpponentList& opponents);

}  // namespace slicescope

#endif  // SLICESCOPE_ANALYSIS_H_
