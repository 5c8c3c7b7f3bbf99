#include "itr/dataset.hpp"

#include <cmath>
#include <sstream>

#include "itr/errors.hpp"
#include "itr/randomization.hpp"

namespace itr {

void validate_dataset(const Dataset& data, const RandomizationSpec& spec) {
  const long n = data.n();
  if (n == 0) throw DataError("validate_dataset: empty dataset");
  if (data.z.size() != n || data.y.size() != n) {
    std::ostringstream msg;
    msg << "validate_dataset: column lengths disagree (x rows " << n << ", z " << data.z.size()
        << ", y " << data.y.size() << ")";
    throw DataError(msg.str());
  }
  if (data.kind != spec.kind)
    throw DataError("validate_dataset: treatment kind of data and randomization spec disagree");

  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < data.p(); ++j)
      if (!std::isfinite(data.x(i, j))) {
        std::ostringstream msg;
        msg << "validate_dataset: non-finite covariate at row " << i << ", column " << j;
        throw DataError(msg.str());
      }
    if (!std::isfinite(data.z[i]) || !std::isfinite(data.y[i])) {
      std::ostringstream msg;
      msg << "validate_dataset: non-finite z or y at row " << i;
      throw DataError(msg.str());
    }
    switch (spec.kind) {
      case TreatmentKind::Binary:
        if (data.z[i] != 0.0 && data.z[i] != 1.0) {
          std::ostringstream msg;
          msg << "validate_dataset: binary treatment must be 0/1, got " << data.z[i] << " at row "
              << i;
          throw DataError(msg.str());
        }
        break;
      case TreatmentKind::Categorical: {
        double r = std::round(data.z[i]);
        if (std::abs(data.z[i] - r) > 1e-9 || r < 0.0 || r > double(spec.n_arms())) {
          std::ostringstream msg;
          msg << "validate_dataset: categorical code out of range at row " << i << " (got "
              << data.z[i] << ", arms 0.." << spec.n_arms() << ")";
          throw DataError(msg.str());
        }
        break;
      }
      case TreatmentKind::ContinuousDose:
        if (data.z[i] < spec.dose_a - 1e-12 || data.z[i] > spec.dose_b + 1e-12) {
          std::ostringstream msg;
          msg << "validate_dataset: dose outside [" << spec.dose_a << ", " << spec.dose_b
              << "] at row " << i;
          throw DataError(msg.str());
        }
        break;
    }
    if (spec.kind == TreatmentKind::Binary) {
      double v = var_given_x(spec, data.x.row(i).transpose());
      if (v < 1e-8) {
        std::ostringstream msg;
        msg << "validate_dataset: conditional treatment variance " << v << " below floor at row "
            << i;
        throw DataError(msg.str());
      }
    }
  }
}

}  // namespace itr
