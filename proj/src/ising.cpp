#include "rwre/ising.hpp"

#include <cmath>
#include <ostream>

#include "rwre/error.hpp"
#include "rwre/random.hpp"

namespace rwre {

namespace {

constexpr std::uint64_t kIsingSalt = 0x6973696e67ULL;

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::uint64_t site_key(std::uint64_t base, const int* coord, int dim) {
  std::uint64_t h = base;
  for (int i = 0; i < dim; ++i)
    h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(coord[i])));
  return h;
}

// Heat-bath dynamics on the box [lower, lower + extent) with a one-site frame
// held at `border`. Interior spins start at +1; each sweep updates the even
// sublattice, then the odd one. Returns the interior, axis 0 fastest.
std::vector<std::int8_t> run_heat_bath(const IsingParams& params, std::uint64_t seed,
                                       const std::vector<int>& lower,
                                       const std::vector<int>& extent, int border, int sweeps) {
  const int d = params.dim;
  std::vector<std::ptrdiff_t> stride(d);
  std::ptrdiff_t total = 1;
  std::size_t interior = 1;
  for (int i = 0; i < d; ++i) {
    stride[i] = total;
    total *= extent[i] + 2;
    interior *= static_cast<std::size_t>(extent[i]);
  }
  std::vector<std::int8_t> grid(static_cast<std::size_t>(total), static_cast<std::int8_t>(border));

  std::vector<std::ptrdiff_t> cells[2];
  std::vector<std::uint64_t> keys[2];
  std::vector<std::ptrdiff_t> flat_of(interior);
  cells[0].reserve(interior / 2 + 1);
  cells[1].reserve(interior / 2 + 1);
  keys[0].reserve(interior / 2 + 1);
  keys[1].reserve(interior / 2 + 1);

  const std::uint64_t base = mix64(seed ^ kIsingSalt);
  std::vector<int> c(d, 0), g(d);
  for (std::size_t n = 0; n < interior; ++n) {
    std::ptrdiff_t flat = 0;
    int parity = 0;
    for (int i = 0; i < d; ++i) {
      flat += (c[i] + 1) * stride[i];
      g[i] = lower[i] + c[i];
      parity += g[i] & 1;
    }
    grid[flat] = 1;
    flat_of[n] = flat;
    cells[parity & 1].push_back(flat);
    keys[parity & 1].push_back(site_key(base, g.data(), d));
    for (int i = 0; i < d; ++i) {
      if (++c[i] < extent[i]) break;
      c[i] = 0;
    }
  }

  std::vector<double> p_plus(2 * d + 1);
  for (int k = 0; k <= 2 * d; ++k) p_plus[k] = ising_conditional(params, -2 * d + 2 * k);

  for (int t = 0; t < sweeps; ++t) {
    const auto salt = static_cast<std::uint64_t>(t);
    for (int parity = 0; parity < 2; ++parity) {
      const auto& cell = cells[parity];
      const auto& key = keys[parity];
      for (std::size_t j = 0; j < cell.size(); ++j) {
        const std::ptrdiff_t f = cell[j];
        int s = 0;
        for (int i = 0; i < d; ++i) s += grid[f + stride[i]] + grid[f - stride[i]];
        const double u = to_unit(hash_combine(key[j], salt));
        grid[f] = (u < p_plus[(s + 2 * d) / 2]) ? 1 : -1;
      }
    }
  }

  std::vector<std::int8_t> out(interior);
  for (std::size_t n = 0; n < interior; ++n) out[n] = grid[flat_of[n]];
  return out;
}

}  // namespace

void validate(const IsingParams& params, bool need_box) {
  if (params.dim < 1) throw Error(Errc::InvalidArgument, "Ising dimension must be >= 1");
  if (!(params.beta >= 0.0) || !std::isfinite(params.beta))
    throw Error(Errc::InvalidArgument, "beta must be finite and >= 0");
  if (!std::isfinite(params.h)) throw Error(Errc::InvalidArgument, "h must be finite");
  if (params.burn_in_sweeps < 1) throw Error(Errc::InvalidArgument, "burn_in_sweeps must be >= 1");
  if (params.boundary != 1 && params.boundary != -1)
    throw Error(Errc::InvalidArgument, "boundary spin must be +1 or -1");
  if (need_box) {
    if (static_cast<int>(params.box.size()) != params.dim)
      throw Error(Errc::InvalidArgument, "box rank differs from dimension");
    for (int e : params.box)
      if (e < 1) throw Error(Errc::InvalidArgument, "box extents must be positive");
  }
}

double ising_spin_probability(const IsingParams& params, int neighbor_sum, int spin) {
  const int two_d = 2 * params.dim;
  if (neighbor_sum < -two_d || neighbor_sum > two_d || ((neighbor_sum + two_d) % 2) != 0)
    throw Error(Errc::InvalidNeighborSum, "neighbor sum must be in {-2d, -2d+2, ..., 2d}");
  if (spin != 1 && spin != -1) throw Error(Errc::InvalidArgument, "spin must be +1 or -1");
  // The less likely spin gets the logistic value, the other its complement, so
  // that the two probabilities sum to one exactly in floating point.
  const double a = spin * (params.beta * neighbor_sum + params.h);
  const double minority = 1.0 / (1.0 + std::exp(2.0 * std::abs(a)));
  return a >= 0.0 ? 1.0 - minority : minority;
}

double dobrushin_coefficient(const IsingParams& params) {
  const int two_d = 2 * params.dim;
  double worst = 0.0;
  for (int s = -two_d + 2; s <= two_d; s += 2)
    worst = std::max(worst, std::abs(ising_conditional(params, s) - ising_conditional(params, s - 2)));
  return two_d * worst;
}

std::size_t SpinField::flat_index(const std::vector<int>& coord) const {
  if (coord.size() != extent.size()) throw Error(Errc::DimensionMismatch, "spin coordinate rank");
  std::size_t flat = 0, stride = 1;
  for (std::size_t i = 0; i < extent.size(); ++i) {
    if (coord[i] < 0 || coord[i] >= extent[i]) throw Error(Errc::InvalidArgument, "outside the box");
    flat += static_cast<std::size_t>(coord[i]) * stride;
    stride *= static_cast<std::size_t>(extent[i]);
  }
  return flat;
}

std::vector<int> SpinField::coord_of(std::size_t flat) const {
  std::vector<int> c(extent.size());
  for (std::size_t i = 0; i < extent.size(); ++i) {
    c[i] = static_cast<int>(flat % static_cast<std::size_t>(extent[i]));
    flat /= static_cast<std::size_t>(extent[i]);
  }
  return c;
}

double SpinField::magnetization() const {
  double sum = 0.0;
  for (auto s : spins) sum += s;
  return spins.empty() ? 0.0 : sum / static_cast<double>(spins.size());
}

SpinField glauber_sample(const IsingParams& params, std::uint64_t seed) {
  validate(params, true);
  SpinField field;
  field.extent = params.box;
  field.spins = run_heat_bath(params, seed, std::vector<int>(params.dim, 0), params.box,
                              params.boundary, params.burn_in_sweeps);
  return field;
}

void write_spin_csv(const SpinField& field, std::ostream& out) {
  for (std::size_t i = 0; i < field.extent.size(); ++i) out << 'x' << (i + 1) << ',';
  out << "spin\n";
  for (std::size_t n = 0; n < field.size(); ++n) {
    for (int c : field.coord_of(n)) out << c << ',';
    out << static_cast<int>(field.spins[n]) << '\n';
  }
}

LazyIsingField::LazyIsingField(const IsingParams& params, std::uint64_t seed)
    : params_(params),
      seed_(seed),
      tile_side_(params.dim <= 2 ? 32 : 8),
      halo_(2 * params.burn_in_sweeps) {
  validate(params_, false);
  last_key_.assign(params_.dim, 0);
}

std::size_t LazyIsingField::KeyHash::operator()(const std::vector<int>& key) const noexcept {
  std::uint64_t h = 0x4b6579ULL;
  for (int k : key) h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(k)));
  return static_cast<std::size_t>(h);
}

const std::vector<std::int8_t>& LazyIsingField::tile(const std::vector<int>& key) {
  auto it = tiles_.find(key);
  if (it != tiles_.end()) return it->second;
  const int d = params_.dim;
  std::vector<int> lower(d), extent(d, tile_side_ + 2 * halo_);
  for (int i = 0; i < d; ++i) lower[i] = key[i] * tile_side_ - halo_;
  const auto region = run_heat_bath(params_, seed_, lower, extent, +1, params_.burn_in_sweeps);

  std::size_t cells = 1;
  for (int i = 0; i < d; ++i) cells *= static_cast<std::size_t>(tile_side_);
  std::vector<std::int8_t> data(cells);
  std::vector<int> c(d, 0);
  for (std::size_t n = 0; n < cells; ++n) {
    std::size_t flat = 0, stride = 1;
    for (int i = 0; i < d; ++i) {
      flat += static_cast<std::size_t>(c[i] + halo_) * stride;
      stride *= static_cast<std::size_t>(extent[i]);
    }
    data[n] = region[flat];
    for (int i = 0; i < d; ++i) {
      if (++c[i] < tile_side_) break;
      c[i] = 0;
    }
  }
  return tiles_.emplace(key, std::move(data)).first->second;
}

int LazyIsingField::spin_at(Eigen::Ref<const Eigen::VectorXi> site) {
  const int d = params_.dim;
  if (site.size() != d) throw Error(Errc::DimensionMismatch, "site rank differs from Ising dimension");
  bool same = last_tile_ != nullptr;
  int key_buf[16];
  std::vector<int> key_vec;
  int* key = key_buf;
  if (d > 16) {
    key_vec.resize(d);
    key = key_vec.data();
  }
  for (int i = 0; i < d; ++i) {
    key[i] = floor_div(site(i), tile_side_);
    same = same && key[i] == last_key_[i];
  }
  if (!same) {
    last_key_.assign(key, key + d);
    last_tile_ = &tile(last_key_);
  }
  std::size_t flat = 0, stride = 1;
  for (int i = 0; i < d; ++i) {
    flat += static_cast<std::size_t>(site(i) - key[i] * tile_side_) * stride;
    stride *= static_cast<std::size_t>(tile_side_);
  }
  return (*last_tile_)[flat];
}

int LazyIsingField::spin_exact(const IsingParams& params, std::uint64_t seed,
                               const Eigen::VectorXi& site) {
  validate(params, false);
  const int d = params.dim;
  if (site.size() != d) throw Error(Errc::DimensionMismatch, "site rank differs from Ising dimension");
  const int halo = 2 * params.burn_in_sweeps;
  std::vector<int> lower(d), extent(d, 2 * halo + 1);
  for (int i = 0; i < d; ++i) lower[i] = site(i) - halo;
  const auto region = run_heat_bath(params, seed, lower, extent, +1, params.burn_in_sweeps);
  std::size_t flat = 0, stride = 1;
  for (int i = 0; i < d; ++i) {
    flat += static_cast<std::size_t>(halo) * stride;
    stride *= static_cast<std::size_t>(extent[i]);
  }
  return region[flat];
}

}  // namespace rwre
