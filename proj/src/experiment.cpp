#include "rwre/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "rwre/error.hpp"
#include "rwre/estimators.hpp"
#include "rwre/ising.hpp"
#include "rwre/kalikow.hpp"
#include "rwre/random.hpp"
#include "rwre/regeneration.hpp"
#include "rwre/walker.hpp"

#ifndef RWRE_VERSION
#define RWRE_VERSION "0.0.0"
#endif

namespace rwre {

using nlohmann::json;

namespace {

constexpr std::pair<ExperimentKind, const char*> kKinds[] = {
    {ExperimentKind::Lln, "lln"},
    {ExperimentKind::RegenTail, "regen_tail"},
    {ExperimentKind::Kalikow, "kalikow"},
    {ExperimentKind::Moments, "moments"},
    {ExperimentKind::Diagnostics, "diagnostics"},
    {ExperimentKind::IsingDemo, "ising_demo"},
};

bool is_walk_kind(ExperimentKind k) {
  return k == ExperimentKind::Lln || k == ExperimentKind::RegenTail || k == ExperimentKind::Moments ||
         k == ExperimentKind::IsingDemo;
}

// Collects field-level messages so one ConfigInvalid reports every problem.
class FieldErrors {
 public:
  // Only the first problem per field is kept.
  void add(const std::string& field, const std::string& message) {
    if (fields_.insert(field).second) messages_.push_back(field + ": " + message);
  }
  bool empty() const { return messages_.empty(); }
  void raise_if_any() const {
    if (messages_.empty()) return;
    std::string all;
    for (const auto& m : messages_) all += (all.empty() ? "" : "; ") + m;
    throw Error(Errc::ConfigInvalid, all);
  }

 private:
  std::vector<std::string> messages_;
  std::set<std::string> fields_;
};

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string prefix, FieldErrors& errors, std::set<std::string> allowed)
      : j_(j), prefix_(std::move(prefix)), errors_(errors) {
    if (!j.is_object()) {
      errors_.add(prefix_.empty() ? "config" : prefix_.substr(0, prefix_.size() - 1), "must be an object");
      ok_ = false;
      return;
    }
    for (const auto& [key, value] : j.items())
      if (!allowed.count(key)) errors_.add(prefix_ + key, "unknown field");
  }

  bool has(const char* key) const { return ok_ && j_.contains(key); }
  const json* find(const char* key, bool required) {
    if (!ok_) return nullptr;
    auto it = j_.find(key);
    if (it == j_.end()) {
      if (required) errors_.add(prefix_ + key, "missing");
      return nullptr;
    }
    return &*it;
  }
  void fail(const char* key, const std::string& message) { errors_.add(prefix_ + key, message); }

  template <class T>
  void integer(const char* key, T& out, bool required) {
    const json* v = find(key, required);
    if (!v) return;
    if (!v->is_number_integer()) return fail(key, "must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v->is_number_unsigned()) out = v->get<T>();
      else if (v->get<std::int64_t>() < 0) fail(key, "must be nonnegative");
      else out = static_cast<T>(v->get<std::int64_t>());
    } else {
      const std::int64_t x = v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())
                                 ? std::numeric_limits<std::int64_t>::max()
                                 : v->get<std::int64_t>();
      if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) return fail(key, "out of range");
      out = static_cast<T>(x);
    }
  }
  void number(const char* key, double& out, bool required) {
    const json* v = find(key, required);
    if (!v) return;
    if (!v->is_number()) return fail(key, "must be a number");
    out = v->get<double>();
  }
  void string(const char* key, std::string& out, bool required) {
    const json* v = find(key, required);
    if (!v) return;
    if (!v->is_string()) return fail(key, "must be a string");
    out = v->get<std::string>();
  }
  void int_list(const char* key, std::vector<int>& out, bool required) {
    const json* v = find(key, required);
    if (!v) return;
    std::vector<int> tmp;
    if (v->is_array()) {
      for (const auto& x : *v) {
        if (!x.is_number_integer() || std::abs(x.get<std::int64_t>()) > 1'000'000'000)
          return fail(key, "must be an array of integers");
        tmp.push_back(static_cast<int>(x.get<std::int64_t>()));
      }
    } else {
      return fail(key, "must be an array of integers");
    }
    out = std::move(tmp);
  }
  void number_list(const char* key, std::vector<double>& out, bool required) {
    const json* v = find(key, required);
    if (!v) return;
    std::vector<double> tmp;
    if (!v->is_array()) return fail(key, "must be an array of numbers");
    for (const auto& x : *v) {
      if (!x.is_number()) return fail(key, "must be an array of numbers");
      tmp.push_back(x.get<double>());
    }
    out = std::move(tmp);
  }
  ObjectReader child(const char* key, std::set<std::string> allowed) {
    static const json empty = json::object();
    const json* v = find(key, false);
    return ObjectReader(v ? *v : empty, prefix_ + key + ".", errors_, std::move(allowed));
  }

 private:
  const json& j_;
  std::string prefix_;
  FieldErrors& errors_;
  bool ok_ = true;
};

std::optional<TransitionKernel> read_kernel(ObjectReader& r, const char* key, FieldErrors& errors,
                                            const std::string& field) {
  std::vector<double> p;
  r.number_list(key, p, true);
  if (p.empty()) return std::nullopt;
  if (p.size() % 2 != 0) {
    errors.add(field, "needs 2d entries");
    return std::nullopt;
  }
  TransitionKernel k(Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())));
  if (!is_probability_vector(k)) {
    errors.add(field, "is not a probability vector");
    return std::nullopt;
  }
  return k;
}

json kernel_json(const TransitionKernel& k) { return std::vector<double>(k.probs.data(), k.probs.data() + k.probs.size()); }

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json site_json(const Site& s) { return std::vector<int>(s.data(), s.data() + s.size()); }

Site site_from(const json& j) {
  const auto v = j.get<std::vector<int>>();
  return Eigen::Map<const Eigen::VectorXi>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct ParsedEnvironment {
  json canonical;
  std::optional<EnvironmentModel> model;
};

ParsedEnvironment parse_environment(const json& spec, FieldErrors& errors) {
  ParsedEnvironment out;
  ObjectReader r(spec, "environment.", errors,
                 {"type", "kernel", "kernels", "weights", "block_side", "beta", "h", "sweeps", "omega_plus",
                  "omega_minus"});
  std::string type;
  r.string("type", type, true);
  try {
    if (type == "homogeneous") {
      auto k = read_kernel(r, "kernel", errors, "environment.kernel");
      if (!k) return out;
      out.canonical = {{"type", type}, {"kernel", kernel_json(*k)}};
      out.model = EnvironmentModel::homogeneous(*k);
    } else if (type == "product" || type == "block_independent") {
      const json* ks = r.find("kernels", true);
      std::vector<double> weights;
      r.number_list("weights", weights, true);
      int side = 1;
      if (type == "block_independent") r.integer("block_side", side, true);
      if (!ks) return out;
      if (!ks->is_array() || ks->empty()) {
        errors.add("environment.kernels", "must be a nonempty array of kernels");
        return out;
      }
      std::vector<TransitionKernel> kernels;
      for (std::size_t i = 0; i < ks->size(); ++i) {
        json holder = {{"k", (*ks)[i]}};
        ObjectReader kr(holder, "environment.kernels[" + std::to_string(i) + "].", errors, {"k"});
        auto k = read_kernel(kr, "k", errors, "environment.kernels[" + std::to_string(i) + "]");
        if (!k) return out;
        kernels.push_back(*k);
      }
      if (weights.size() != kernels.size()) {
        errors.add("environment.weights", "needs one weight per kernel");
        return out;
      }
      json kj = json::array();
      for (const auto& k : kernels) kj.push_back(kernel_json(k));
      out.canonical = {{"type", type}, {"kernels", kj}, {"weights", weights}};
      if (type == "product") {
        out.model = EnvironmentModel::product(kernels, weights, 0);
      } else {
        out.canonical["block_side"] = side;
        out.model = EnvironmentModel::block_independent(kernels, weights, side, 0);
      }
    } else if (type == "ising") {
      IsingParams p;
      p.burn_in_sweeps = 8;
      r.number("beta", p.beta, true);
      r.number("h", p.h, true);
      r.integer("sweeps", p.burn_in_sweeps, false);
      auto plus = read_kernel(r, "omega_plus", errors, "environment.omega_plus");
      auto minus = read_kernel(r, "omega_minus", errors, "environment.omega_minus");
      if (!plus || !minus || !errors.empty()) return out;
      p.dim = plus->dim();
      out.canonical = {{"type", type},
                       {"beta", p.beta},
                       {"h", p.h},
                       {"sweeps", p.burn_in_sweeps},
                       {"omega_plus", kernel_json(*plus)},
                       {"omega_minus", kernel_json(*minus)}};
      out.model = EnvironmentModel::ising_two_kernel(p, *plus, *minus, 0);
    } else if (!type.empty()) {
      errors.add("environment.type", "must be one of homogeneous, product, block_independent, ising");
    }
  } catch (const Error& e) {
    errors.add("environment", e.what());
    out.model.reset();
  }
  return out;
}

double default_zeta(const json& env) {
  const std::string t = env.is_object() && env.contains("type") && env["type"].is_string() ? env["type"].get<std::string>() : "";
  return t == "homogeneous" || t == "product" ? 0.0 : 0.1;
}

}  // namespace

std::string_view experiment_kind_name(ExperimentKind kind) noexcept {
  for (const auto& [k, name] : kKinds)
    if (k == kind) return name;
  return "unknown";
}

EnvironmentModel build_environment(const json& spec) {
  FieldErrors errors;
  auto parsed = parse_environment(spec, errors);
  errors.raise_if_any();
  if (!parsed.model) throw Error(Errc::ConfigInvalid, "environment: could not be built");
  return *parsed.model;
}

Direction config_direction(const ExperimentConfig& config) {
  return make_direction(Eigen::Map<const Eigen::VectorXi>(config.ell.data(), static_cast<Eigen::Index>(config.ell.size())),
                        config.zeta);
}

ExperimentConfig parse_config(const json& j) {
  FieldErrors errors;
  ExperimentConfig c;
  ObjectReader r(j, "", errors,
                 {"kind", "environment", "ell", "zeta", "kappa", "L", "horizon", "replicas", "seed",
                  "survival_window", "alpha", "phi", "delta", "output", "kalikow", "diagnostics", "ising_demo"});
  if (!j.is_object()) errors.raise_if_any();

  std::string kind;
  r.string("kind", kind, true);
  bool kind_ok = false;
  for (const auto& [k, name] : kKinds)
    if (kind == name) {
      c.kind = k;
      kind_ok = true;
    }
  if (!kind.empty() && !kind_ok)
    errors.add("kind", "must be one of lln, regen_tail, kalikow, moments, diagnostics, ising_demo");

  std::optional<EnvironmentModel> model;
  if (const json* env = r.find("environment", true)) {
    auto parsed = parse_environment(*env, errors);
    c.environment = parsed.canonical;
    model = std::move(parsed.model);
  }

  r.int_list("ell", c.ell, true);
  c.zeta = default_zeta(c.environment);
  r.number("zeta", c.zeta, false);
  r.number("kappa", c.kappa, true);
  r.int_list("L", c.L, false);
  r.integer("horizon", c.horizon, true);
  r.integer("replicas", c.replicas, true);
  r.integer("seed", c.seed, false);
  if (r.has("survival_window")) r.integer("survival_window", c.survival_window, false);
  else c.survival_window = std::min<std::int64_t>(c.survival_window, std::max<std::int64_t>(c.horizon, 0));
  r.number("alpha", c.alpha, false);
  {
    auto phi = r.child("phi", {"C", "gamma"});
    phi.number("C", c.phi_C, false);
    phi.number("gamma", c.phi_gamma, false);
  }
  r.number("delta", c.delta, false);
  r.string("output", c.output, false);
  {
    auto k = r.child("kalikow", {"radius"});
    k.integer("radius", c.kalikow_radius, false);
  }
  {
    auto d = r.child("diagnostics", {"r_values", "lambda"});
    d.number_list("r_values", c.r_values, false);
    double lambda = 0.0;
    if (d.has("lambda")) {
      d.number("lambda", lambda, false);
      c.lambda = lambda;
    }
  }
  {
    auto s = r.child("ising_demo", {"cs_resolution", "snapshot_box"});
    s.integer("cs_resolution", c.cs_resolution, false);
    s.int_list("snapshot_box", c.snapshot_box, false);
  }

  // Range checks that need only the scalar fields.
  if (!(c.alpha > 1.0)) errors.add("alpha", "must exceed 1");
  if (c.replicas < 2) errors.add("replicas", "must be at least 2");
  if (c.horizon < 1) errors.add("horizon", "must be positive");
  if (c.survival_window < 0 || c.survival_window > c.horizon)
    errors.add("survival_window", "must lie in [0, horizon]");
  if (!(c.phi_C >= 0.0)) errors.add("phi.C", "must be nonnegative");
  if (!(c.phi_gamma > 0.0)) errors.add("phi.gamma", "must be positive");
  if (!(c.delta >= 0.0 && c.delta <= 1.0)) errors.add("delta", "must lie in [0, 1]");
  if (c.output.empty()) errors.add("output", "must be a nonempty path");
  if (c.kalikow_radius < 0 || c.kalikow_radius > 20) errors.add("kalikow.radius", "must lie in [0, 20]");
  if (c.r_values.empty()) errors.add("diagnostics.r_values", "must be nonempty");
  for (double rv : c.r_values)
    if (!(rv > 0.0)) errors.add("diagnostics.r_values", "entries must be positive");
  if (c.cs_resolution < 2) errors.add("ising_demo.cs_resolution", "must be at least 2");
  for (int b : c.snapshot_box)
    if (b < 1 || b > 4096) errors.add("ising_demo.snapshot_box", "extents must lie in [1, 4096]");
  if (c.L.empty()) errors.add("L", "must be nonempty");
  if (!c.L.empty() && c.horizon < 10LL * *std::max_element(c.L.begin(), c.L.end()))
    errors.add("horizon", "must be at least 10 max(L)");

  // Checks that need the direction and the environment.
  std::optional<Direction> dir;
  if (!c.ell.empty()) {
    try {
      dir = config_direction(c);
    } catch (const Error& e) {
      errors.add(e.code() == Errc::ZetaTooLarge ? "zeta" : "ell", e.what());
    }
  }
  if (dir) {
    for (int L : c.L)
      if (L < 1 || L % dir->l1() != 0) errors.add("L", "entries must be positive multiples of |ell|_1");
    if (!(c.kappa > 0.0) || !(c.kappa * static_cast<double>(dir->step_alphabet().size()) < 1.0))
      errors.add("kappa", "need 0 < kappa and kappa |E| < 1");
    if (!c.snapshot_box.empty() && static_cast<int>(c.snapshot_box.size()) != dir->dim())
      errors.add("ising_demo.snapshot_box", "needs one extent per dimension");
  }
  if (dir && model) {
    if (model->dim() != dir->dim()) {
      errors.add("ell", "dimension differs from the environment kernels");
    } else {
      for (std::size_t i = 0; i < model->support().size(); ++i)
        if (c.kappa > 0.0 && !kernel_validate(model->support()[i], *dir, c.kappa))
          errors.add("kappa", "support kernel " + std::to_string(i) +
                                  " is not elliptic with mass >= kappa on every ladder step");
      if (errors.empty() && c.kind == ExperimentKind::Diagnostics) {
        try {
          check_exit_moment_preconditions(*model, *dir, c.kappa, c.delta,
                                          c.lambda.value_or(c.delta > 0.0 ? compute_lambda0(c.delta, dir->norm()) : 0.0));
        } catch (const Error& e) {
          errors.add("delta", e.what());
        }
      }
    }
  }
  if (c.kind == ExperimentKind::IsingDemo) {
    if (model && model->kind() != EnvironmentKind::IsingTwoKernel)
      errors.add("environment.type", "ising_demo needs an ising environment");
    if (!(c.delta > 0.0)) errors.add("delta", "ising_demo needs delta > 0");
  }
  errors.raise_if_any();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigInvalid, "config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ConfigInvalid, std::string("config: ") + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j = {{"kind", std::string(experiment_kind_name(c.kind))},
            {"environment", c.environment},
            {"ell", c.ell},
            {"zeta", c.zeta},
            {"kappa", c.kappa},
            {"L", c.L},
            {"horizon", c.horizon},
            {"replicas", c.replicas},
            {"seed", c.seed},
            {"survival_window", c.survival_window},
            {"alpha", c.alpha},
            {"phi", {{"C", c.phi_C}, {"gamma", c.phi_gamma}}},
            {"delta", c.delta},
            {"output", c.output},
            {"kalikow", {{"radius", c.kalikow_radius}}},
            {"diagnostics", {{"r_values", c.r_values}}},
            {"ising_demo", {{"cs_resolution", c.cs_resolution}, {"snapshot_box", c.snapshot_box}}}};
  if (c.lambda) j["diagnostics"]["lambda"] = *c.lambda;
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("output");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Output files

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot open " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(Errc::IoError, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

namespace {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

void emit_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw Error(Errc::PreconditionFailed, "no summary rows to write");
  std::string text = std::string(kSummaryHeader) + "\n";
  for (const auto& r : rows) {
    text += csv_field(r.estimator) + "," + std::to_string(r.L) + "," + format_double(r.value) + "," +
            format_double(r.se) + "," + std::to_string(r.n) + "," + format_double(r.censor_rate) + "," +
            std::to_string(r.horizon) + "\n";
  }
  write_file_atomic(path, text);
}

void emit_jsonl(const std::vector<json>& records, const std::filesystem::path& path) {
  if (records.empty()) throw Error(Errc::PreconditionFailed, "no records to write");
  std::string text;
  for (const auto& r : records) text += r.dump() + "\n";
  write_file_atomic(path, text);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(Errc::IoError, path.string() + ": line " + std::to_string(out.size() + 1) + ": " + e.what());
    }
  }
  return out;
}

bool RunManifest::all_passed() const {
  return std::all_of(criteria.begin(), criteria.end(), [](const auto& c) { return c.second; });
}

json RunManifest::to_json() const {
  json crit = json::array();
  for (const auto& [name, pass] : criteria) crit.push_back({{"criterion", name}, {"pass", pass}});
  return {{"config_hash", config_hash}, {"seed", seed},       {"tool_version", tool_version},
          {"wall_time_s", wall_time_s}, {"threads", threads}, {"criteria", crit},
          {"files", files}};
}

// ---------------------------------------------------------------------------
// Replica work

namespace {

std::uint64_t env_seed(const ExperimentConfig& c, std::int64_t replica) {
  return derive_seed(c.seed, {kEnvSalt, static_cast<std::uint64_t>(replica)});
}

WalkRecord replica_walk(const ExperimentConfig& c, const EnvironmentModel& model, const Direction& dir,
                        std::int64_t replica) {
  const EnvironmentModel env = model.with_seed(env_seed(c, replica));
  return simulate(env, dir, c.kappa, Site::Zero(dir.dim()), c.horizon, WalkMode::Coupled,
                  derive_seed(c.seed, {kWalkSalt, static_cast<std::uint64_t>(replica)}));
}

json walk_record_json(const ExperimentConfig& c, const Direction& dir, const WalkRecord& rec,
                      std::int64_t replica) {
  const ConeScanner scanner(rec, dir, c.zeta);
  RegenOptions opts;
  opts.survival_window = c.survival_window;
  json blocks = json::array();
  for (int L : c.L) {
    const RegenSequence s = detect_regenerations(rec, scanner, dir, L, opts);
    json positions = json::array();
    for (const auto& p : s.positions) positions.push_back(site_json(p));
    blocks.push_back({{"L", L},
                      {"taus", s.taus},
                      {"positions", positions},
                      {"attempts", s.attempts},
                      {"censored_tail", s.censored_tail},
                      {"origin_survived", s.origin_survived}});
  }
  return {{"replica", replica},
          {"horizon", rec.horizon},
          {"start", site_json(rec.start)},
          {"end", site_json(Site(rec.position(rec.horizon)))},
          {"blocks", blocks}};
}

std::vector<Site> kalikow_region(int d, int radius) {
  std::vector<Site> U;
  Site y = Site::Constant(d, -radius);
  for (;;) {
    U.push_back(y);
    int a = 0;
    while (a < d && y(a) == radius) y(a++) = -radius;
    if (a == d) break;
    ++y(a);
  }
  return U;
}

double lambda_of(const ExperimentConfig& c, const Direction& dir) {
  return c.lambda.value_or(compute_lambda0(c.delta, dir.norm()));
}

}  // namespace

json replica_record(const ExperimentConfig& c, const EnvironmentModel& model, std::int64_t replica) {
  const Direction dir = config_direction(c);
  switch (c.kind) {
    case ExperimentKind::Kalikow: {
      const auto U = kalikow_region(dir.dim(), c.kalikow_radius);
      const KalikowReplica rep = kalikow_replica(model, dir, U, c.seed, static_cast<std::uint64_t>(replica));
      json weight = json::array();
      for (Eigen::Index i = 0; i < rep.weight.cols(); ++i) weight.push_back(vec_json(rep.weight.col(i)));
      return {{"replica", replica}, {"exit_time", rep.exit_time}, {"visits", rep.visits}, {"weight", weight}};
    }
    case ExperimentKind::Diagnostics: {
      json times = json::array();
      for (double r : c.r_values) {
        auto t = level_hitting_time(model, dir, c.kappa, r, c.horizon, c.seed, static_cast<std::uint64_t>(replica));
        times.push_back(t ? json(*t) : json(nullptr));
      }
      return {{"replica", replica}, {"hitting_times", times}};
    }
    default:
      return walk_record_json(c, dir, replica_walk(c, model, dir, replica), replica);
  }
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

std::vector<RegenSequence> sequences_for(const std::vector<json>& records, std::size_t li, int d) {
  std::vector<RegenSequence> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const json& b = r.at("blocks").at(li);
    RegenSequence s;
    s.L = b.at("L").get<int>();
    s.taus = b.at("taus").get<std::vector<std::int64_t>>();
    for (const auto& p : b.at("positions")) s.positions.push_back(site_from(p));
    s.attempts = b.at("attempts").get<std::vector<int>>();
    s.censored_tail = b.at("censored_tail").get<bool>();
    s.origin_survived = b.at("origin_survived").get<bool>();
    s.start = site_from(r.at("start"));
    s.end = site_from(r.at("end"));
    s.horizon = r.at("horizon").get<std::int64_t>();
    if (s.start.size() != d) throw Error(Errc::IoError, "replica record has the wrong dimension");
    out.push_back(std::move(s));
  }
  return out;
}

std::string trend_of(const std::vector<double>& values) {
  if (values.size() < 2) return "insufficient";
  bool dec = true;
  bool inc = true;
  for (std::size_t i = 1; i < values.size(); ++i) {
    dec = dec && values[i] < values[i - 1];
    inc = inc && values[i] > values[i - 1];
  }
  return dec ? "decreasing" : inc ? "increasing" : "non-monotone";
}

void aggregate_walks(const ExperimentConfig& c, const EnvironmentModel& model, const Direction& dir,
                     const std::vector<json>& records, Aggregate& agg) {
  const int d = dir.dim();
  const Eigen::VectorXd ell = dir.ell().cast<double>();
  json per_L = json::array();
  std::vector<double> products;
  for (std::size_t li = 0; li < c.L.size(); ++li) {
    const int L = c.L[li];
    const auto seqs = sequences_for(records, li, d);
    json entry = {{"L", L}};

    // Share of regeneration candidates that survived to the horizon but were
    // watched for fewer than survival_window steps.
    std::vector<BlockSeries> blocks;
    std::int64_t censored = 0;
    std::int64_t taus = 0;
    for (const auto& s : seqs) {
      censored += s.censored_tail && !s.taus.empty() ? 1 : 0;
      taus += static_cast<std::int64_t>(s.taus.size());
      if (!s.taus.empty()) blocks.push_back(extract_blocks(s, c.kappa));
    }
    const double censor_rate = taus + censored > 0 ? static_cast<double>(censored) / static_cast<double>(taus + censored) : 1.0;
    std::optional<VelocityEstimate> vel;
    try {
      vel = estimate_velocity(blocks);
    } catch (const Error& e) {
      entry["velocity"] = {{"error", e.what()}};
    }
    if (vel) {
      const double v_ell = vel->v_hat.dot(ell);
      const double se_ell = std::sqrt(vel->se.cwiseProduct(ell).squaredNorm());
      entry["velocity"] = {{"v_hat", vec_json(vel->v_hat)},
                           {"v_direct", vec_json(vel->v_direct)},
                           {"se", vec_json(vel->se)},
                           {"se_direct", vec_json(vel->se_direct)},
                           {"combined_se", vec_json(vel->combined_se)},
                           {"n_blocks", vel->n_blocks},
                           {"n_replicas", vel->n_replicas},
                           {"censor_rate", vel->censor_rate},
                           {"v_dot_ell", v_ell},
                           {"z_ell", v_ell / se_ell},
                           {"z_e1", vel->v_hat(0) / vel->se(0)}};
      for (int i = 0; i < d; ++i) {
        const std::string idx = "[" + std::to_string(i + 1) + "]";
        agg.rows.push_back({"v_hat" + idx, L, vel->v_hat(i), vel->se(i), vel->n_blocks, vel->censor_rate, c.horizon});
        agg.rows.push_back(
            {"v_direct" + idx, L, vel->v_direct(i), vel->se_direct(i), vel->n_replicas, vel->censor_rate, c.horizon});
      }
      const bool agree = ((vel->v_hat - vel->v_direct).cwiseAbs().array() <= 3.0 * vel->combined_se.array()).all();
      if (c.kind == ExperimentKind::Lln)
        agg.criteria.push_back({"L=" + std::to_string(L) + ": v_hat agrees with v_direct within 3 combined se", agree});
      if (c.kind == ExperimentKind::IsingDemo)
        agg.criteria.push_back({"L=" + std::to_string(L) + ": v_hat.e1 > 0 with z >= 3", vel->v_hat(0) / vel->se(0) >= 3.0});
    } else if (c.kind == ExperimentKind::Lln || c.kind == ExperimentKind::IsingDemo) {
      agg.criteria.push_back({"L=" + std::to_string(L) + ": velocity estimate available", false});
    }

    const KTail kt = k_tail(seqs);
    json tail = {{"n", kt.n}, {"survival", kt.survival}, {"ratios", kt.ratios}};
    json ci = json::array();
    for (const auto& iv : kt.ratio_ci) ci.push_back({iv.lo, iv.hi});
    tail["ratio_ci"] = ci;
    entry["k_tail"] = tail;
    for (std::size_t k = 0; k < kt.survival.size(); ++k)
      agg.rows.push_back({"P(K>=" + std::to_string(k + 1) + ")", L, kt.survival[k],
                          std::sqrt(kt.survival[k] * (1.0 - kt.survival[k]) / std::max<double>(1.0, static_cast<double>(kt.n))),
                          kt.n, censor_rate, c.horizon});
    if (c.kind == ExperimentKind::RegenTail) {
      const std::size_t m = std::min<std::size_t>(3, kt.ratios.size());
      bool ok = m >= 2;
      if (ok) {
        double mean = 0.0;
        for (std::size_t k = 0; k < m; ++k) mean += kt.ratios[k] / static_cast<double>(m);
        for (std::size_t k = 0; k < m; ++k) ok = ok && std::abs(kt.ratios[k] - mean) <= 0.1;
      }
      agg.criteria.push_back({"L=" + std::to_string(L) + ": P(K >= k), k <= 4, is log-linear within 0.1", ok});
    }

    const double phi_L = c.phi_C == 0.0 ? 0.0 : mixing_rate_bound(c.phi_gamma, c.phi_C, L);
    try {
      const MomentReport m = estimate_moments(seqs, c.alpha, c.kappa, phi_L);
      entry["moments"] = {{"alpha", m.alpha},
                          {"n_survivors", m.n_survivors},
                          {"M_hat", m.M_hat},
                          {"M_se", m.M_se},
                          {"beta_hat", m.beta_hat},
                          {"beta_se", m.beta_se},
                          {"gamma_hat", vec_json(m.gamma_hat)},
                          {"gamma_se", vec_json(m.gamma_se)},
                          {"identity_residual", vec_json(m.identity_residual)},
                          {"identity_se", vec_json(m.identity_se)},
                          {"p_D_survive", m.p_D_survive},
                          {"phi_L", m.phi_L},
                          {"phi_prime_L", m.phi_prime_L},
                          {"product", m.product},
                          {"eta_L", m.eta_L}};
      products.push_back(m.product);
      agg.rows.push_back({"M_hat", L, m.M_hat, m.M_se, m.n_survivors, censor_rate, c.horizon});
      agg.rows.push_back({"beta_hat", L, m.beta_hat, m.beta_se, m.n_survivors, censor_rate, c.horizon});
      for (int i = 0; i < d; ++i)
        agg.rows.push_back({"gamma_hat[" + std::to_string(i + 1) + "]", L, m.gamma_hat(i), m.gamma_se(i),
                            m.n_survivors, censor_rate, c.horizon});
      agg.rows.push_back({"p_D_survive", L, m.p_D_survive,
                          std::sqrt(m.p_D_survive * (1.0 - m.p_D_survive) / static_cast<double>(m.n_replicas)),
                          m.n_replicas, censor_rate, c.horizon});
      agg.rows.push_back({"product", L, m.product, std::numeric_limits<double>::quiet_NaN(), m.n_survivors,
                          censor_rate, c.horizon});
      const bool identity =
          (m.identity_residual.cwiseAbs().array() <= 3.0 * m.identity_se.array()).all();
      if (c.kind == ExperimentKind::Moments)
        agg.criteria.push_back({"L=" + std::to_string(L) + ": beta_hat v_hat matches gamma_hat within 3 se", identity});
      if (c.kind == ExperimentKind::IsingDemo)
        agg.criteria.push_back({"L=" + std::to_string(L) + ": moment product is finite", std::isfinite(m.product)});
    } catch (const Error& e) {
      entry["moments"] = {{"error", e.what()}};
      if (c.kind == ExperimentKind::Moments || c.kind == ExperimentKind::IsingDemo)
        agg.criteria.push_back({"L=" + std::to_string(L) + ": moment report available", false});
    }
    per_L.push_back(entry);
  }
  agg.report["per_L"] = per_L;
  agg.report["product_trend"] = trend_of(products);

  if (c.kind == ExperimentKind::IsingDemo) {
    const IsingParams& p = model.ising();
    const auto& plus = model.support()[0];
    const auto& minus = model.support()[1];
    json demo = {{"dobrushin", dobrushin_coefficient(p)}};
    try {
      const DriftReport dr = kalikow_sufficient_check(plus, minus, c.delta, p.beta, p.h, d);
      demo["drift_report"] = {{"d_plus", dr.d_plus}, {"d_minus", dr.d_minus}, {"delta", dr.delta},
                              {"lhs", dr.lhs},       {"rhs", dr.rhs},         {"passes_A4", dr.passes_A4},
                              {"passes_L54", dr.passes_L54}};
      demo["passes_L54"] = dr.passes_L54;
      agg.criteria.insert(agg.criteria.begin(), {"passes_L54", dr.passes_L54});
    } catch (const Error& e) {
      demo["drift_report"] = {{"error", e.what()}};
      demo["passes_L54"] = false;
      agg.criteria.insert(agg.criteria.begin(), {"passes_L54", false});
    }
    try {
      demo["kalikow_cs_lhs"] = kalikow_cs_lhs(plus, minus, p.beta, p.h, d, c.cs_resolution);
    } catch (const Error& e) {
      demo["kalikow_cs_lhs"] = {{"error", e.what()}};
    }
    bool positive = true;
    for (const auto& e : per_L)
      positive = positive && e["velocity"].contains("z_e1") && e["velocity"]["v_hat"][0].get<double>() > 0.0;
    demo["v_hat_e1_positive"] = positive;
    agg.report["ising_demo"] = demo;
  }
}

void aggregate_kalikow(const ExperimentConfig& c, const Direction& dir, const std::vector<json>& records,
                       Aggregate& agg) {
  const int d = dir.dim();
  const auto U = kalikow_region(d, c.kalikow_radius);
  std::vector<KalikowReplica> reps;
  reps.reserve(records.size());
  for (const auto& r : records) {
    KalikowReplica rep;
    rep.exit_time = r.at("exit_time").get<std::int64_t>();
    rep.visits = r.at("visits").get<std::vector<std::int64_t>>();
    const auto& w = r.at("weight");
    if (rep.visits.size() != U.size() || w.size() != U.size()) throw Error(Errc::IoError, "kalikow record size mismatch");
    rep.weight.resize(2 * d, static_cast<Eigen::Index>(U.size()));
    for (std::size_t i = 0; i < U.size(); ++i) {
      const auto col = w[i].get<std::vector<double>>();
      if (col.size() != static_cast<std::size_t>(2 * d)) throw Error(Errc::IoError, "kalikow weight size mismatch");
      rep.weight.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(col.data(), 2 * d);
    }
    reps.push_back(std::move(rep));
  }
  const KalikowEstimate est = kalikow_merge(U, reps);
  const Eigen::VectorXd ell = dir.ell().cast<double>();
  json sites = json::array();
  bool rows_ok = true;
  double min_drift = std::numeric_limits<double>::infinity();
  for (const auto& s : est.sites) {
    const double dl = s.drift.dot(ell);
    min_drift = std::min(min_drift, dl);
    rows_ok = rows_ok && std::abs(s.probs.sum() - 1.0) <= 1e-12;
    sites.push_back({{"x", site_json(s.x)},
                     {"visits", s.visits},
                     {"probs", vec_json(s.probs)},
                     {"se", vec_json(s.se)},
                     {"drift", vec_json(s.drift)},
                     {"drift_dot_ell", dl}});
    std::string at = "@(";
    for (int a = 0; a < d; ++a) at += (a ? ";" : "") + std::to_string(s.x(a));
    at += ")";
    for (int e = 0; e < 2 * d; ++e)
      agg.rows.push_back({"P_hat[" + std::to_string(e) + "]" + at, 0, s.probs(e), s.se(e), s.visits, 0.0, c.horizon});
  }
  agg.report["kalikow"] = {{"radius", c.kalikow_radius},
                           {"replicas", est.replicas},
                           {"sites", sites},
                           {"min_drift_dot_ell", min_drift}};
  agg.criteria.push_back({"kalikow row sums equal 1 within 1e-12", rows_ok && !est.sites.empty()});
  agg.criteria.push_back({"kalikow drift . ell > 0 at every visited site", min_drift > 0.0});
}

void aggregate_diagnostics(const ExperimentConfig& c, const EnvironmentModel& model, const Direction& dir,
                           const std::vector<json>& records, Aggregate& agg) {
  const double lambda = lambda_of(c, dir);
  json exits = json::array();
  for (std::size_t ri = 0; ri < c.r_values.size(); ++ri) {
    std::vector<std::optional<std::int64_t>> times;
    times.reserve(records.size());
    for (const auto& r : records) {
      const json& t = r.at("hitting_times").at(ri);
      times.push_back(t.is_null() ? std::nullopt : std::optional<std::int64_t>(t.get<std::int64_t>()));
    }
    const ExitMomentReport e = summarize_exit_moments(c.r_values[ri], c.delta, lambda, c.horizon, times);
    exits.push_back({{"r", e.r},
                     {"estimate", e.estimate},
                     {"se", e.se},
                     {"bound", e.bound},
                     {"replicas", e.replicas},
                     {"not_exited", e.not_exited},
                     {"passes", e.passes}});
    const double censor = static_cast<double>(e.not_exited) / static_cast<double>(e.replicas);
    agg.rows.push_back({"exit_moment@r=" + format_double(e.r), 0, e.estimate, e.se, e.replicas, censor, c.horizon});
    agg.rows.push_back({"exit_bound@r=" + format_double(e.r), 0, e.bound, 0.0, e.replicas, censor, c.horizon});
    agg.criteria.push_back({"exit moment bound at r=" + format_double(e.r), e.passes});
  }
  json kernels = json::array();
  const auto witnesses = cone_witnesses(dir, c.zeta);
  for (std::size_t i = 0; i < model.support().size(); ++i) {
    const auto& k = model.support()[i];
    const bool ok = one_step_supermartingale_check(k, dir, c.zeta, c.delta, lambda, witnesses);
    kernels.push_back({{"kernel", kernel_json(k)},
                       {"drift_dot_ell", local_drift(k).dot(dir.ell().cast<double>())},
                       {"supermartingale", ok}});
    agg.criteria.push_back({"one-step supermartingale, kernel " + std::to_string(i), ok});
  }
  agg.report["diagnostics"] = {{"lambda", lambda},
                               {"lambda0", compute_lambda0(c.delta, dir.norm())},
                               {"exit_moments", exits},
                               {"kernels", kernels}};
  if (model.kind() == EnvironmentKind::IsingTwoKernel)
    agg.report["diagnostics"]["dobrushin"] = dobrushin_coefficient(model.ising());
}

}  // namespace

Aggregate aggregate(const ExperimentConfig& c, const EnvironmentModel& model, const std::vector<json>& records) {
  if (records.empty()) throw Error(Errc::PreconditionFailed, "no replica records");
  const Direction dir = config_direction(c);
  Aggregate agg;
  agg.report = {{"kind", std::string(experiment_kind_name(c.kind))},
                {"config_hash", config_hash(c)},
                {"replicas", static_cast<std::int64_t>(records.size())},
                {"horizon", c.horizon}};
  switch (c.kind) {
    case ExperimentKind::Kalikow: aggregate_kalikow(c, dir, records, agg); break;
    case ExperimentKind::Diagnostics: aggregate_diagnostics(c, model, dir, records, agg); break;
    default: aggregate_walks(c, model, dir, records, agg); break;
  }
  json crit = json::array();
  for (const auto& [name, pass] : agg.criteria) crit.push_back({{"criterion", name}, {"pass", pass}});
  agg.report["criteria"] = crit;
  return agg;
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

void dump_spins(const ExperimentConfig& c, const EnvironmentModel& model, const std::filesystem::path& path) {
  const EnvironmentModel env = model.with_seed(env_seed(c, 0));
  LazyIsingField field(env.ising(), env.master_seed());
  SpinField snap;
  snap.extent = c.snapshot_box;
  std::size_t total = 1;
  for (int e : c.snapshot_box) total *= static_cast<std::size_t>(e);
  snap.spins.resize(total);
  Site z(static_cast<Eigen::Index>(c.snapshot_box.size()));
  for (std::size_t f = 0; f < total; ++f) {
    const auto coord = snap.coord_of(f);
    for (std::size_t a = 0; a < coord.size(); ++a) z(static_cast<Eigen::Index>(a)) = coord[a];
    snap.spins[f] = static_cast<std::int8_t>(field.spin_at(z));
  }
  std::ostringstream out;
  write_spin_csv(snap, out);
  write_file_atomic(path, out.str());
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& c, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const EnvironmentModel model = build_environment(c.environment);
  const Direction dir = config_direction(c);
  const std::filesystem::path out_dir(c.output);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  if (options.dump_paths && is_walk_kind(c.kind)) {
    std::filesystem::create_directories(out_dir / "paths", ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + (out_dir / "paths").string());
  }

  const std::int64_t n = c.replicas;
  const int threads = static_cast<int>(std::clamp<std::int64_t>(options.threads, 1, n));

  // Workers take replica indices from `next`; the calling thread writes the
  // finished lines in replica order.
  std::atomic<std::int64_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::string> lines(static_cast<std::size_t>(n));
  std::vector<char> ready(static_cast<std::size_t>(n), 0);
  std::exception_ptr failure;

  auto work = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::int64_t i = next.fetch_add(1);
      if (i >= n) return;
      std::string line;
      try {
        json rec;
        if (is_walk_kind(c.kind)) {
          const WalkRecord w = replica_walk(c, model, dir, i);
          if (options.dump_paths) {
            char name[32];
            std::snprintf(name, sizeof name, "replica_%06lld.csv", static_cast<long long>(i));
            std::ostringstream csv;
            write_path_csv(w, csv);
            write_file_atomic(out_dir / "paths" / name, csv.str());
          }
          rec = walk_record_json(c, dir, w, i);
        } else {
          rec = replica_record(c, model, i);
        }
        line = rec.dump() + "\n";
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        stop = true;
        cv.notify_all();
        return;
      }
      std::lock_guard lock(mu);
      lines[static_cast<std::size_t>(i)] = std::move(line);
      ready[static_cast<std::size_t>(i)] = 1;
      cv.notify_all();
    }
  };

  const std::filesystem::path jsonl = out_dir / "replicas.jsonl";
  std::filesystem::path jsonl_tmp = jsonl;
  jsonl_tmp += ".tmp";
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(work);
  {
    std::ofstream out(jsonl_tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      stop = true;
      for (auto& th : pool) th.join();
      throw Error(Errc::IoError, "cannot open " + jsonl_tmp.string());
    }
    for (std::int64_t i = 0; i < n; ++i) {
      std::string line;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return ready[static_cast<std::size_t>(i)] || failure; });
        if (failure) break;
        line.swap(lines[static_cast<std::size_t>(i)]);
      }
      out << line;
    }
    for (auto& th : pool) th.join();
    if (failure) {
      out.close();
      std::filesystem::remove(jsonl_tmp, ec);
      std::rethrow_exception(failure);
    }
    out.flush();
    if (!out) throw Error(Errc::IoError, "write failed: " + jsonl_tmp.string());
  }
  std::filesystem::rename(jsonl_tmp, jsonl, ec);
  if (ec) throw Error(Errc::IoError, "cannot rename " + jsonl_tmp.string() + ": " + ec.message());

  const Aggregate agg = aggregate(c, model, read_jsonl(jsonl));

  RunManifest m;
  m.config_hash = config_hash(c);
  m.seed = c.seed;
  m.tool_version = RWRE_VERSION;
  m.threads = threads;
  m.criteria = agg.criteria;
  m.files = {"replicas.jsonl", "summary.csv", "report.json", "manifest.json"};

  write_file_atomic(out_dir / "report.json", agg.report.dump(2) + "\n");
  if (!agg.rows.empty()) emit_csv(agg.rows, out_dir / "summary.csv");
  else m.files.erase(std::find(m.files.begin(), m.files.end(), "summary.csv"));
  if (c.kind == ExperimentKind::IsingDemo && !c.snapshot_box.empty()) {
    dump_spins(c, model, out_dir / "spins_replica0.csv");
    m.files.push_back("spins_replica0.csv");
  }
  if (options.dump_paths && is_walk_kind(c.kind)) m.files.push_back("paths/");
  m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json mj = m.to_json();
  mj["config"] = to_json(c);
  write_file_atomic(out_dir / "manifest.json", mj.dump(2) + "\n");
  return m;
}

}  // namespace rwre
