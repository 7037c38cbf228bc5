#include "rwre/environment.hpp"

#include <cmath>
#include <numeric>

#include "rwre/random.hpp"

namespace rwre {

namespace {

constexpr std::uint64_t kSiteSalt = 0x73697465ULL;
constexpr std::uint64_t kBlockSalt = 0x626c6f636bULL;

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

template <typename Vec>
std::uint64_t coords_key(std::uint64_t seed, std::uint64_t salt, const Vec& z, int divisor) {
  std::uint64_t h = mix64(seed ^ salt);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const int c = divisor == 1 ? z(i) : floor_div(z(i), divisor);
    h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(c)));
  }
  return h;
}

}  // namespace

std::string_view kind_name(EnvironmentKind kind) noexcept {
  switch (kind) {
    case EnvironmentKind::Homogeneous: return "homogeneous";
    case EnvironmentKind::Product: return "product";
    case EnvironmentKind::BlockIndependent: return "block_independent";
    case EnvironmentKind::IsingTwoKernel: return "ising_two_kernel";
  }
  return "unknown";
}

void EnvironmentModel::check() {
  if (kernels_.empty()) throw Error(Errc::UnsupportedModel, "environment needs a kernel support");
  dim_ = kernels_.front().dim();
  for (const auto& k : kernels_) {
    if (k.dim() != dim_) throw Error(Errc::DimensionMismatch, "kernels differ in dimension");
    if (!is_probability_vector(k)) throw Error(Errc::InvalidLaw, "kernel is not a probability vector");
  }
  if (kind_ == EnvironmentKind::Product || kind_ == EnvironmentKind::BlockIndependent) {
    if (weights_.size() != kernels_.size())
      throw Error(Errc::InvalidArgument, "one weight per kernel required");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw Error(Errc::InvalidLaw, "weights must be nonnegative");
      total += w;
    }
    if (!(total > 0.0)) throw Error(Errc::InvalidLaw, "weights must not all vanish");
    cumulative_.resize(weights_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      acc += weights_[i] / total;
      cumulative_[i] = acc;
    }
    cumulative_.back() = 1.0;
  }
  if (kind_ == EnvironmentKind::BlockIndependent && block_side_ < 1)
    throw Error(Errc::InvalidArgument, "block side must be >= 1");
  if (kind_ == EnvironmentKind::IsingTwoKernel) {
    if (kernels_.size() != 2) throw Error(Errc::InvalidArgument, "Ising environment needs two kernels");
    if (ising_.dim != dim_) throw Error(Errc::DimensionMismatch, "Ising and kernel dimension differ");
    validate(ising_, false);
  }
}

EnvironmentModel EnvironmentModel::homogeneous(TransitionKernel kernel) {
  EnvironmentModel m;
  m.kind_ = EnvironmentKind::Homogeneous;
  m.kernels_.push_back(std::move(kernel));
  m.check();
  return m;
}

EnvironmentModel EnvironmentModel::product(std::vector<TransitionKernel> kernels,
                                           std::vector<double> weights, std::uint64_t seed) {
  EnvironmentModel m;
  m.kind_ = EnvironmentKind::Product;
  m.kernels_ = std::move(kernels);
  m.weights_ = std::move(weights);
  m.seed_ = seed;
  m.check();
  return m;
}

EnvironmentModel EnvironmentModel::block_independent(std::vector<TransitionKernel> kernels,
                                                     std::vector<double> weights, int block_side,
                                                     std::uint64_t seed) {
  EnvironmentModel m;
  m.kind_ = EnvironmentKind::BlockIndependent;
  m.kernels_ = std::move(kernels);
  m.weights_ = std::move(weights);
  m.block_side_ = block_side;
  m.seed_ = seed;
  m.check();
  return m;
}

EnvironmentModel EnvironmentModel::ising_two_kernel(IsingParams params, TransitionKernel omega_plus,
                                                    TransitionKernel omega_minus, std::uint64_t seed) {
  EnvironmentModel m;
  m.kind_ = EnvironmentKind::IsingTwoKernel;
  m.kernels_ = {std::move(omega_plus), std::move(omega_minus)};
  m.ising_ = std::move(params);
  m.seed_ = seed;
  m.check();
  return m;
}

EnvironmentModel EnvironmentModel::with_seed(std::uint64_t seed) const {
  EnvironmentModel m = *this;
  m.seed_ = seed;
  return m;
}

std::size_t EnvironmentModel::draw_index(std::uint64_t key) const {
  const double u = to_unit(key);
  for (std::size_t i = 0; i + 1 < cumulative_.size(); ++i)
    if (u < cumulative_[i]) return i;
  return cumulative_.size() - 1;
}

std::size_t EnvironmentModel::kernel_index_at(const Eigen::VectorXi& z) const {
  if (z.size() != dim_) throw Error(Errc::DimensionMismatch, "site rank differs from environment");
  switch (kind_) {
    case EnvironmentKind::Homogeneous: return 0;
    case EnvironmentKind::Product: return draw_index(coords_key(seed_, kSiteSalt, z, 1));
    case EnvironmentKind::BlockIndependent:
      return draw_index(coords_key(seed_, kBlockSalt, z, block_side_));
    case EnvironmentKind::IsingTwoKernel:
      return LazyIsingField::spin_exact(ising_, seed_, z) > 0 ? 0 : 1;
  }
  return 0;
}

EnvironmentCursor::EnvironmentCursor(const EnvironmentModel& model) : model_(&model) {
  if (model.kind() == EnvironmentKind::IsingTwoKernel) field_.emplace(model.ising(), model.master_seed());
}

std::size_t EnvironmentCursor::index_at(Eigen::Ref<const Eigen::VectorXi> z) {
  const auto& m = *model_;
  if (z.size() != m.dim_) throw Error(Errc::DimensionMismatch, "site rank differs from environment");
  switch (m.kind_) {
    case EnvironmentKind::Homogeneous: return 0;
    case EnvironmentKind::Product: return m.draw_index(coords_key(m.seed_, kSiteSalt, z, 1));
    case EnvironmentKind::BlockIndependent:
      return m.draw_index(coords_key(m.seed_, kBlockSalt, z, m.block_side_));
    case EnvironmentKind::IsingTwoKernel: return field_->spin_at(z) > 0 ? 0 : 1;
  }
  return 0;
}

bool check_non_nestling(const EnvironmentModel& model, const Direction& dir, double delta) {
  if (model.support().empty()) throw Error(Errc::UnsupportedModel, "kernel support is empty");
  if (model.dim() != dir.dim()) throw Error(Errc::DimensionMismatch, "model and direction dimension");
  const Eigen::VectorXd ell = dir.ell().cast<double>();
  for (const auto& k : model.support())
    if (local_drift(k).dot(ell) < delta - kSumTolerance) return false;
  return true;
}

double mixing_rate_bound(double gamma, double C, double r) {
  if (!(gamma > 0.0) || !(C > 0.0) || !(r >= 0.0))
    throw Error(Errc::InvalidArgument, "mixing rate needs gamma > 0, C > 0, r >= 0");
  return C * std::exp(-(gamma / std::sqrt(2.0)) * r);
}

}  // namespace rwre
