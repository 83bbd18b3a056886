#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace zood {

struct ColumnSource {
  std::string model_id;
  int column = 0;

  bool operator==(const ColumnSource&) const = default;
};

// One extractor's features on one multi-domain dataset.
struct FeatureBundle {
  std::string model_id;
  Eigen::MatrixXd features;  // n x d
  Eigen::VectorXi labels;
  Eigen::VectorXi domains;
  int class_count = 0;
  int domain_count = 0;
  std::vector<ColumnSource> provenance;  // empty, or one entry per column

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index width() const { return features.cols(); }

  void validate() const;
  // Provenance if present, otherwise (model_id, j) for each column j.
  std::vector<ColumnSource> column_sources() const;
};

// Labels, domains and counts agree (the bundles describe the same samples).
bool same_samples(const FeatureBundle& a, const FeatureBundle& b);

}  // namespace zood
