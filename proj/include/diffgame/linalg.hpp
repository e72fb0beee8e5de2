#pragma once

#include <Eigen/Dense>

namespace diffgame {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecIn = Eigen::Ref<const Eigen::VectorXd>;
using VecOut = Eigen::Ref<Eigen::VectorXd>;
using MatIn = Eigen::Ref<const Eigen::MatrixXd>;
using MatOut = Eigen::Ref<Eigen::MatrixXd>;

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

}  // namespace diffgame
