#ifndef AGGSPLIT_LINALG_HPP
#define AGGSPLIT_LINALG_HPP

#include <Eigen/Dense>

namespace aggsplit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

}  // namespace aggsplit

#endif  // AGGSPLIT_LINALG_HPP
