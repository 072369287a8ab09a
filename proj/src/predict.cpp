#include "penlmm/predict.hpp"

#include <unordered_map>

#include "penlmm/error.hpp"

namespace penlmm {

RandomEffectPrediction predict_random_effects(const ParameterVector& phi,
                                              const GroupedDataset& data) {
  if (phi.p() != data.p() || phi.cov.q() != data.q()) {
    throw DimensionMismatch("fitted parameters do not match the dataset dimensions");
  }
  const Matrix l = phi.cov.factor();
  const double s2 = phi.sigma2();
  RandomEffectPrediction out;
  for (const auto& g : data.groups()) {
    Vector r = g.y - g.x * phi.beta;
    Vector b = Vector::Zero(data.q());
    if (data.q() > 0) {
      const Matrix zl = g.z * l;
      Matrix a = zl.transpose() * zl;
      a.diagonal().array() += s2;
      b = l * cholesky(a).solve(Vector(zl.transpose() * r));
    }
    out.group_ids.push_back(g.id);
    out.b.push_back(std::move(b));
    out.residuals.push_back(std::move(r));
  }
  return out;
}

ResponsePrediction predict_response(const ParameterVector& phi, const RandomEffectPrediction& b,
                                    const GroupedDataset& newdata) {
  if (phi.p() != newdata.p()) {
    throw DimensionMismatch("new data has p=" + std::to_string(newdata.p()) +
                            " but the model has p=" + std::to_string(phi.p()));
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < b.group_ids.size(); ++i) index.emplace(b.group_ids[i], i);

  ResponsePrediction out;
  out.y_hat.resize(newdata.n_total());
  Index row = 0;
  for (const auto& g : newdata.groups()) {
    Vector yh = g.x * phi.beta;
    const auto it = index.find(g.id);
    const bool known = it != index.end();
    if (known) {
      const Vector& bi = b.b[it->second];
      if (bi.size() != g.z.cols()) {
        throw DimensionMismatch("group '" + g.id + "' has q=" + std::to_string(g.z.cols()) +
                                " but the model has q=" + std::to_string(bi.size()));
      }
      if (bi.size() > 0) yh += g.z * bi;
    }
    out.y_hat.segment(row, yh.size()) = yh;
    for (Index j = 0; j < yh.size(); ++j) {
      out.group_ids.push_back(g.id);
      out.known_group.push_back(known);
    }
    row += yh.size();
  }
  return out;
}

}  // namespace penlmm
