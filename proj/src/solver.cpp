#include "itr/solver.hpp"

#include <cmath>
#include <limits>

#include "itr/errors.hpp"

namespace itr {

namespace {
double safe_norm(const Eigen::VectorXd& f) {
  if (!f.allFinite()) return std::numeric_limits<double>::infinity();
  return f.norm();
}
}  // namespace

LMResult lm_least_squares(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F,
                          const Eigen::VectorXd& x0, const LMOptions& opt) {
  LMResult res;
  res.x = x0;
  Eigen::VectorXd f = F(x0);
  double fn = safe_norm(f);
  res.fnorm = fn;
  res.iterations = 0;
  res.converged = fn <= opt.tol;
  if (res.converged || !std::isfinite(fn)) return res;

  const long p = x0.size();
  const long m = f.size();
  double lambda = opt.lambda0;
  Eigen::MatrixXd J(m, p);

  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it + 1;
    // forward-difference Jacobian, step scaled by coordinate magnitude
    for (long k = 0; k < p; ++k) {
      Eigen::VectorXd xk = res.x;
      double step = opt.fd_step * (1.0 + std::abs(xk[k]));
      xk[k] += step;
      Eigen::VectorXd fk = F(xk);
      if (!fk.allFinite()) {
        // try the other side before giving up on this coordinate
        xk[k] = res.x[k] - step;
        fk = F(xk);
        if (!fk.allFinite()) {
          res.converged = false;
          res.fnorm = fn;
          return res;
        }
        J.col(k) = (f - fk) / step;
      } else {
        J.col(k) = (fk - f) / step;
      }
    }
    Eigen::MatrixXd A = J.transpose() * J;
    Eigen::VectorXd g = J.transpose() * f;
    if (g.norm() <= 1e-14 * (1.0 + fn)) break;  // flat; nothing more to gain

    bool accepted = false;
    Eigen::VectorXd dx;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::MatrixXd Ad = A;
      for (long k = 0; k < p; ++k)
        Ad(k, k) += lambda * std::max(A(k, k), 1e-10);
      dx = Ad.ldlt().solve(-g);
      Eigen::VectorXd xt = res.x + dx;
      Eigen::VectorXd ft = F(xt);
      double fnt = safe_norm(ft);
      if (fnt < fn) {
        res.x = xt;
        f = ft;
        fn = fnt;
        lambda = std::max(lambda * 0.25, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 8.0;
      if (lambda > 1e14) break;
    }
    res.fnorm = fn;
    if (fn <= opt.tol) {
      res.converged = true;
      return res;
    }
    if (!accepted) break;
    if (dx.norm() <= opt.step_floor * (1.0 + res.x.norm())) break;
  }
  res.fnorm = fn;
  res.converged = fn <= opt.tol;
  return res;
}

}  // namespace itr
