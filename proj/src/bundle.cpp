#include "zood/bundle.hpp"

#include <string>

#include "zood/error.hpp"

namespace zood {

void FeatureBundle::validate() const {
  const auto n = features.rows();
  if (labels.size() != n || domains.size() != n) {
    throw Error(Errc::DimensionMismatch, "bundle '" + model_id + "': labels/domains length != rows");
  }
  if (!provenance.empty() && static_cast<Eigen::Index>(provenance.size()) != features.cols()) {
    throw Error(Errc::DimensionMismatch, "bundle '" + model_id + "': provenance length != width");
  }
  if (n > 0 && (labels.minCoeff() < 0 || labels.maxCoeff() >= class_count)) {
    throw Error(Errc::RangeViolation, "bundle '" + model_id + "': label outside [0, class_count)");
  }
  if (n > 0 && (domains.minCoeff() < 0 || domains.maxCoeff() >= domain_count)) {
    throw Error(Errc::RangeViolation, "bundle '" + model_id + "': domain outside [0, domain_count)");
  }
  if (!features.allFinite()) throw Error(Errc::NonFinite, "bundle '" + model_id + "': non-finite feature");
}

std::vector<ColumnSource> FeatureBundle::column_sources() const {
  if (!provenance.empty()) return provenance;
  std::vector<ColumnSource> out;
  out.reserve(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index j = 0; j < features.cols(); ++j) out.push_back({model_id, static_cast<int>(j)});
  return out;
}

bool same_samples(const FeatureBundle& a, const FeatureBundle& b) {
  return a.class_count == b.class_count && a.domain_count == b.domain_count &&
         a.labels.size() == b.labels.size() && a.domains.size() == b.domains.size() && a.labels == b.labels &&
         a.domains == b.domains;
}

}  // namespace zood
