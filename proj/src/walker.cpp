#include "rwre/walker.hpp"

#include <algorithm>
#include <ostream>

namespace rwre {

namespace {

std::vector<double> cdf_of(const Eigen::VectorXd& p) {
  std::vector<double> c(p.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) c[i] = (acc += p(i));
  // Clamp the top so that u < 1 always lands on the last positive entry.
  for (Eigen::Index i = p.size() - 1; i >= 0; --i) {
    c[i] = 2.0;
    if (p(i) > 0.0) break;
  }
  return c;
}

}  // namespace

WalkRecord WalkRecord::from_path(Eigen::MatrixXi positions, std::vector<Mark> marks) {
  if (positions.cols() < 1) throw Error(Errc::InvalidArgument, "path needs X_0");
  const std::int64_t n = positions.cols() - 1;
  if (!marks.empty() && static_cast<std::int64_t>(marks.size()) != n)
    throw Error(Errc::InvalidArgument, "one mark per step required");
  for (std::int64_t t = 0; t < n; ++t) {
    const Eigen::VectorXi dx = positions.col(t + 1) - positions.col(t);
    if (dx.cwiseAbs().sum() != 1) throw Error(Errc::InvalidArgument, "path is not nearest-neighbor");
    if (!marks.empty() && marks[t] != kFreeMark) {
      const int m = marks[t];
      if (m < 0 || m >= 2 * positions.rows() || dx != unit_step(positions.rows(), m))
        throw Error(Errc::InvalidArgument, "forced mark disagrees with its step");
    }
  }
  WalkRecord rec;
  rec.start = positions.col(0);
  rec.positions = std::move(positions);
  rec.marks = std::move(marks);
  rec.horizon = n;
  return rec;
}

Walker::Walker(const EnvironmentModel& model, const Direction& dir, double kappa, WalkMode mode,
               Site start, std::uint64_t seed)
    : cursor_(model), mode_(mode), rng_(seed), x_(std::move(start)) {
  if (x_.size() != model.dim() || dir.dim() != model.dim())
    throw Error(Errc::DimensionMismatch, "start, direction and environment dimension");
  for (const auto& k : model.support()) quenched_cdf_.push_back(cdf_of(k.probs));
  if (mode_ == WalkMode::Coupled) {
    alphabet_ = dir.step_alphabet();
    for (const auto& k : model.support())
      free_cdf_.push_back(cdf_of(coupled_step_distribution(k, kFreeMark, kappa, dir).probs));
    double acc = 0.0;
    for (std::size_t i = 0; i < alphabet_.size(); ++i) mark_cdf_.push_back(acc += kappa);
  }
}

int Walker::sample(const std::vector<double>& cumulative, double u) {
  int i = 0;
  while (u >= cumulative[i]) ++i;
  return i;
}

int Walker::step() {
  const std::size_t k = cursor_.index_at(x_);
  int s;
  if (mode_ == WalkMode::Coupled) {
    const double u = rng_.uniform();
    mark_ = kFreeMark;
    for (std::size_t i = 0; i < mark_cdf_.size(); ++i)
      if (u < mark_cdf_[i]) {
        mark_ = static_cast<Mark>(alphabet_[i]);
        break;
      }
    s = mark_ != kFreeMark ? mark_ : sample(free_cdf_[k], rng_.uniform());
  } else {
    s = sample(quenched_cdf_[k], rng_.uniform());
  }
  x_(step_axis(s)) += step_sign(s);
  ++n_;
  return s;
}

WalkRecord simulate(const EnvironmentModel& model, const Direction& dir, double kappa,
                    const Site& start, std::int64_t horizon, WalkMode mode, std::uint64_t seed) {
  if (horizon < 1) throw Error(Errc::InvalidArgument, "horizon must be >= 1");
  Walker w(model, dir, kappa, mode, start, seed);
  WalkRecord rec;
  rec.start = start;
  rec.horizon = horizon;
  rec.positions.resize(start.size(), horizon + 1);
  rec.positions.col(0) = start;
  if (mode == WalkMode::Coupled) rec.marks.resize(horizon);
  for (std::int64_t n = 0; n < horizon; ++n) {
    w.step();
    rec.positions.col(n + 1) = w.position();
    if (mode == WalkMode::Coupled) rec.marks[n] = w.last_mark();
  }
  return rec;
}

std::optional<std::int64_t> exit_time(const WalkRecord& rec, const Region& region) {
  for (std::int64_t n = 0; n <= rec.horizon; ++n)
    if (!region(rec.positions.col(n))) return n;
  return std::nullopt;
}

void write_path_csv(const WalkRecord& rec, std::ostream& out) {
  out << 'n';
  for (int i = 0; i < rec.dim(); ++i) out << ",x" << (i + 1);
  out << ",eps\n";
  for (std::int64_t n = 0; n <= rec.horizon; ++n) {
    out << n;
    for (int i = 0; i < rec.dim(); ++i) out << ',' << rec.positions(i, n);
    int eps = 0;
    if (n > 0 && !rec.marks.empty() && rec.marks[n - 1] != kFreeMark)
      eps = step_sign(rec.marks[n - 1]) * (step_axis(rec.marks[n - 1]) + 1);
    out << ',' << eps << '\n';
  }
}

}  // namespace rwre
