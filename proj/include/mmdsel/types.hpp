#pragma once

#include <Eigen/Dense>
#include <string>

#include "mmdsel/errors.hpp"

namespace mmdsel {

// Samples are rows; row-major storage keeps per-sample access contiguous.
using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

// Enforces the FeatureMatrix contract: at least two samples, at least one
// feature, every entry finite.
inline void validate_features(const FeatureMatrix& m, const std::string& what) {
  if (m.rows() < 2) {
    throw DataError(what + ": need at least 2 samples, got " +
                    std::to_string(m.rows()));
  }
  if (m.cols() < 1) {
    throw DataError(what + ": need at least 1 feature dimension");
  }
  if (!m.allFinite()) {
    throw DataError(what + ": matrix contains non-finite values");
  }
}

}  // namespace mmdsel
