#pragma once
#include <Eigen/Dense>
#include "itr/randomization.hpp"

namespace itr {

// Immutable after construction. z holds the raw treatment column: 0/1 for
// binary, integer codes 0..K for categorical (0 = control), a real dose for
// continuous. One-hot expansion happens inside the estimators.
struct Dataset {
  Eigen::MatrixXd x;  // n x p
  Eigen::VectorXd z;
  Eigen::VectorXd y;
  TreatmentKind kind = TreatmentKind::Binary;

  long n() const { return x.rows(); }
  long p() const { return x.cols(); }
};

// shape/consistency checks shared by generators and CSV loading; throws DataError
void validate_dataset(const Dataset& data, const RandomizationSpec& spec);

}  // namespace itr
