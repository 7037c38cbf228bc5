#include "rwre/geometry.hpp"

#include <cstdlib>

namespace rwre {

Direction make_direction(const Eigen::VectorXi& ell, double zeta) {
  if (ell.size() == 0 || (ell.array() == 0).all())
    throw Error(Errc::ZeroDirection, "direction must have a nonzero coordinate");
  if (!(zeta >= 0.0)) throw Error(Errc::InvalidArgument, "zeta must be nonnegative");
  if (zeta >= 1.0) throw Error(Errc::ZetaTooLarge, "zeta must be below 1");

  Direction dir;
  dir.ell_ = ell;
  dir.zeta_ = zeta;
  for (Eigen::Index i = 0; i < ell.size(); ++i) {
    dir.l1_ += std::abs(ell(i));
    dir.norm_sq_ += static_cast<std::int64_t>(ell(i)) * ell(i);
  }

  const int d = static_cast<int>(ell.size());
  int lead = 0;
  while (ell(lead) == 0) ++lead;
  dir.axis_order_.push_back(lead);
  for (int a = 0; a < d; ++a)
    if (a != lead) dir.axis_order_.push_back(a);

  for (int a : dir.axis_order_) {
    if (ell(a) == 0) continue;
    const int step = step_index(a, ell(a) > 0 ? 1 : -1);
    dir.alphabet_.push_back(step);
    for (int k = 0; k < std::abs(ell(a)); ++k) dir.ladder_.push_back(step);
  }

  Eigen::VectorXi partial = Eigen::VectorXi::Zero(d);
  for (int step : dir.ladder_) {
    partial(step_axis(step)) += step_sign(step);
    if (!detail::in_cone_displacement(partial, dir.ell_, dir.norm_sq_, zeta))
      throw Error(Errc::ZetaTooLarge, "a ladder partial sum leaves the cone C(0, ell, zeta)");
  }
  return dir;
}

Site unit_step(int dim, int step) {
  Site e = Site::Zero(dim);
  e(step_axis(step)) = step_sign(step);
  return e;
}

}  // namespace rwre
