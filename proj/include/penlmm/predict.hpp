#pragma once

// MAP prediction of the random effects and within-group response prediction.

#include <string>
#include <vector>

#include "penlmm/optimizer.hpp"

namespace penlmm {

struct RandomEffectPrediction {
  std::vector<std::string> group_ids;
  std::vector<Vector> b;          // one length-q vector per group
  std::vector<Vector> residuals;  // y_i - X_i beta
};

// b_i = [Z_i^T Z_i + sigma^2 Psi^{-1}]^{-1} Z_i^T r_i, computed through the factor
// of Psi as L (L^T Z_i^T Z_i L + sigma^2 I)^{-1} L^T Z_i^T r_i so that singular
// Psi is handled without inverting it.
RandomEffectPrediction predict_random_effects(const ParameterVector& phi,
                                              const GroupedDataset& data);
inline RandomEffectPrediction predict_random_effects(const FitResult& fit,
                                                     const GroupedDataset& data) {
  return predict_random_effects(fit.phi_hat, data);
}

struct ResponsePrediction {
  std::vector<std::string> group_ids;  // per observation
  Vector y_hat;
  std::vector<bool> known_group;       // per observation
};

// y_ij = x_ij^T beta + z_ij^T b_i for groups seen in training; groups not in
// `b` get the population prediction x_ij^T beta and known_group = false.
ResponsePrediction predict_response(const ParameterVector& phi, const RandomEffectPrediction& b,
                                    const GroupedDataset& newdata);

}  // namespace penlmm
