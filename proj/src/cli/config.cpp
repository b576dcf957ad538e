#include "carbonmfg/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "toml.hpp"

namespace carbonmfg {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw SolverError(ErrorCode::kConfig, msg);
}

// One TOML table plus the set of keys read from it, so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const toml::table* table, std::string name)
      : table_(table), name_(std::move(name)) {}

  bool present() const { return table_ != nullptr; }

  double number(const std::string& key) {
    const toml::node* node = require(key);
    if (auto v = node->as_floating_point()) return v->get();
    if (auto v = node->as_integer()) return static_cast<double>(v->get());
    fail(where(key) + " must be a number");
  }

  double number_or(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }

  std::int64_t integer(const std::string& key) {
    const toml::node* node = require(key);
    if (auto v = node->as_integer()) return v->get();
    fail(where(key) + " must be an integer");
  }

  std::int64_t integer_or(const std::string& key, std::int64_t fallback) {
    return has(key) ? integer(key) : fallback;
  }

  bool boolean_or(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    if (auto v = require(key)->as_boolean()) return v->get();
    fail(where(key) + " must be a boolean");
  }

  std::string string_or(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    if (auto v = require(key)->as_string()) return v->get();
    fail(where(key) + " must be a string");
  }

  std::vector<double> numbers(const std::string& key) {
    const toml::array* arr = require(key)->as_array();
    if (arr == nullptr) fail(where(key) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& item : *arr) {
      if (auto v = item.as_floating_point()) {
        out.push_back(v->get());
      } else if (auto i = item.as_integer()) {
        out.push_back(static_cast<double>(i->get()));
      } else {
        fail(where(key) + " must be an array of numbers");
      }
    }
    return out;
  }

  Vec5 vec5(const std::string& key) {
    const auto values = numbers(key);
    if (values.size() != kStateDim) {
      fail(where(key) + " must have 5 entries [Q, S, E, P, Ntilde]");
    }
    Vec5 out;
    for (int i = 0; i < kStateDim; ++i) out(i) = values[static_cast<std::size_t>(i)];
    return out;
  }

  void finish() const {
    if (table_ == nullptr) return;
    for (const auto& [key, node] : *table_) {
      if (!used_.contains(std::string(key.str()))) {
        fail("unknown key " + where(std::string(key.str())));
      }
    }
  }

 private:
  bool has(const std::string& key) const {
    return table_ != nullptr && table_->contains(key);
  }

  const toml::node* require(const std::string& key) {
    if (!has(key)) fail("missing key " + where(key));
    used_.insert(key);
    return table_->get(key);
  }

  std::string where(const std::string& key) const { return name_ + "." + key; }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> used_;
};

const std::set<std::string> kSections = {"grid",   "producer", "regulator", "policy",
                                         "solver", "sim",      "output"};

Section section(const toml::table& root, const std::string& name, bool required) {
  const toml::node* node = root.get(name);
  if (node == nullptr) {
    if (required) fail("missing section [" + name + "]");
    return Section(nullptr, name);
  }
  if (!node->is_table()) fail("[" + name + "] must be a table");
  return Section(node->as_table(), name);
}

RiccatiMethod parse_riccati_method(const std::string& name) {
  if (name == "hamiltonian") return RiccatiMethod::kHamiltonianFlow;
  if (name == "rk4") return RiccatiMethod::kRK4;
  fail("solver.riccati_method must be \"hamiltonian\" or \"rk4\"");
}

SimScheme parse_scheme(const std::string& name) {
  if (name == "trapezoidal") return SimScheme::kTrapezoidal;
  if (name == "euler_maruyama") return SimScheme::kEulerMaruyama;
  fail("sim.scheme must be \"trapezoidal\" or \"euler_maruyama\"");
}

const char* riccati_method_name(RiccatiMethod m) {
  return m == RiccatiMethod::kHamiltonianFlow ? "hamiltonian" : "rk4";
}

nlohmann::json vec_json(const Vec5& v) {
  return nlohmann::json::array({v(0), v(1), v(2), v(3), v(4)});
}

}  // namespace

ScenarioConfig parse_config(std::string_view text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column
        << ": " << e.description();
    fail(msg.str());
  }
  for (const auto& [key, node] : root) {
    if (!kSections.contains(std::string(key.str()))) {
      fail("unknown section or key '" + std::string(key.str()) + "'");
    }
  }

  ScenarioConfig cfg;
  Section grid = section(root, "grid", true);
  cfg.horizon = grid.number("horizon");
  const std::int64_t n_steps = grid.integer("n_steps");
  if (n_steps < 2 || n_steps > 10'000'000) fail("grid.n_steps must be in [2, 1e7]");
  cfg.n_steps = static_cast<int>(n_steps);
  if (!(cfg.horizon > 0.0) || !std::isfinite(cfg.horizon)) {
    fail("grid.horizon must be > 0");
  }
  grid.finish();
  const double dt = cfg.horizon / cfg.n_steps;

  Section prod = section(root, "producer", true);
  ProducerParams& p = cfg.producer;
  p.c1 = prod.number("c1");
  p.c3 = prod.number("c3");
  p.p1 = prod.number("p1") / dt;
  p.p2 = prod.number("p2");
  p.rho0 = prod.number("rho0") / dt;
  p.rho1 = prod.number("rho1") / dt;
  p.kappa1 = prod.number("kappa1");
  p.kappa2 = prod.number("kappa2");
  p.alpha = prod.number("alpha");
  p.theta = prod.number("theta");
  p.sigma0 = prod.number("sigma0");
  p.sigma1 = prod.number("sigma1");
  p.delta = prod.number("delta");
  p.demand_base = prod.number("demand_base");
  p.demand_amplitude = prod.number("demand_amplitude");
  p.demand_frequency = prod.number("demand_frequency");
  p.xbar0 = prod.vec5("xbar0");
  p.var0 = prod.vec5("var0");
  p.re_lower = prod.number("re_lower");
  p.re_upper = prod.number("re_upper");
  prod.finish();

  Section reg = section(root, "regulator", true);
  RegulatorParams& r = cfg.regulator;
  r.alpha1 = reg.number("alpha1");
  r.alpha2 = reg.number("alpha2");
  r.alpha3 = reg.number("alpha3");
  r.alpha4 = reg.number("alpha4");
  r.alpha5 = reg.number("alpha5");
  r.pbar_target = reg.number("pbar_target");
  r.walkaway_threshold = reg.number("walkaway_threshold");
  r.tau_grid = reg.numbers("tau_grid");
  r.c2_grid = reg.numbers("c2_grid");
  r.pbar0 = p.xbar0(kPollution);
  reg.finish();

  Section pol = section(root, "policy", true);
  cfg.policy.tau = pol.number("tau");
  cfg.policy.c2 = pol.number("c2");
  pol.finish();

  Section solver = section(root, "solver", false);
  FixedPointConfig& fp = cfg.solver.fixed_point;
  fp.epsilon = solver.number_or("epsilon", fp.epsilon);
  fp.max_iters = static_cast<int>(solver.integer_or("max_iters", fp.max_iters));
  fp.damping = solver.number_or("damping", fp.damping);
  fp.fallback_damping = solver.number_or("fallback_damping", fp.fallback_damping);
  fp.oscillation_window =
      static_cast<int>(solver.integer_or("oscillation_window", fp.oscillation_window));
  SearchConfig& search = cfg.solver.search;
  search.coarse_points =
      static_cast<int>(solver.integer_or("coarse_points", search.coarse_points));
  search.relative_width = solver.number_or("relative_width", search.relative_width);
  RiccatiOptions& ric = cfg.solver.riccati;
  ric.method = parse_riccati_method(
      solver.string_or("riccati_method", riccati_method_name(ric.method)));
  ric.rk4_substeps = static_cast<int>(solver.integer_or("rk4_substeps", ric.rk4_substeps));
  solver.finish();

  Section sim = section(root, "sim", false);
  SimSettings& s = cfg.sim;
  s.sim.n_paths = sim.integer_or("n_paths", 100000);
  const std::int64_t seed = sim.integer_or("seed", 0);
  if (seed < 0) fail("sim.seed must be >= 0");
  s.sim.seed = static_cast<std::uint64_t>(seed);
  s.sim.scheme = parse_scheme(sim.string_or("scheme", to_string(s.sim.scheme)));
  s.sim.antithetic = sim.boolean_or("antithetic", s.sim.antithetic);
  s.deviation_paths = sim.integer_or("deviation_paths", s.deviation_paths);
  s.costate_paths = sim.integer_or("costate_paths", s.costate_paths);
  s.deviation.n_deviations =
      static_cast<int>(sim.integer_or("n_deviations", s.deviation.n_deviations));
  s.deviation.bump_scale = sim.number_or("bump_scale", s.deviation.bump_scale);
  sim.finish();

  Section out = section(root, "output", false);
  cfg.output_dir = out.string_or("dir", cfg.output_dir);
  out.finish();

  try {
    p.validate();
    r.validate();
    cfg.policy.validate();
    fp.validate();
    search.validate();
    s.sim.validate();
    if (ric.rk4_substeps < 1) fail("solver.rk4_substeps must be >= 1");
    if (s.deviation_paths < 1 || s.costate_paths < 1) {
      fail("sim.deviation_paths and sim.costate_paths must be >= 1");
    }
    if (s.deviation.n_deviations < 0 || !(s.deviation.bump_scale >= 0.0)) {
      fail("sim.n_deviations and sim.bump_scale must be >= 0");
    }
  } catch (const SolverError& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    fail(std::string(source) + ": " + e.what());
  }
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SolverError(ErrorCode::kIO, "cannot read config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw SolverError(ErrorCode::kIO, "error reading " + path);
  return parse_config(buf.str(), path);
}

std::string canonical_config(const ScenarioConfig& cfg) {
  const ProducerParams& p = cfg.producer;
  const RegulatorParams& r = cfg.regulator;
  nlohmann::json j;
  j["grid"] = {{"horizon", cfg.horizon}, {"n_steps", cfg.n_steps}};
  j["producer"] = {{"c1", p.c1},
                   {"c3", p.c3},
                   {"p1_rate", p.p1},
                   {"p2", p.p2},
                   {"rho0_rate", p.rho0},
                   {"rho1_rate", p.rho1},
                   {"kappa1", p.kappa1},
                   {"kappa2", p.kappa2},
                   {"alpha", p.alpha},
                   {"theta", p.theta},
                   {"sigma0", p.sigma0},
                   {"sigma1", p.sigma1},
                   {"delta", p.delta},
                   {"demand_base", p.demand_base},
                   {"demand_amplitude", p.demand_amplitude},
                   {"demand_frequency", p.demand_frequency},
                   {"xbar0", vec_json(p.xbar0)},
                   {"var0", vec_json(p.var0)},
                   {"re_lower", p.re_lower},
                   {"re_upper", p.re_upper}};
  j["regulator"] = {{"alpha1", r.alpha1},
                    {"alpha2", r.alpha2},
                    {"alpha3", r.alpha3},
                    {"alpha4", r.alpha4},
                    {"alpha5", r.alpha5},
                    {"pbar_target", r.pbar_target},
                    {"walkaway_threshold", r.walkaway_threshold},
                    {"tau_grid", r.tau_grid},
                    {"c2_grid", r.c2_grid}};
  j["policy"] = {{"tau", cfg.policy.tau}, {"c2", cfg.policy.c2}};
  const auto& s = cfg.solver;
  j["solver"] = {{"epsilon", s.fixed_point.epsilon},
                 {"max_iters", s.fixed_point.max_iters},
                 {"damping", s.fixed_point.damping},
                 {"fallback_damping", s.fixed_point.fallback_damping},
                 {"oscillation_window", s.fixed_point.oscillation_window},
                 {"coarse_points", s.search.coarse_points},
                 {"relative_width", s.search.relative_width},
                 {"riccati_method", riccati_method_name(s.riccati.method)},
                 {"rk4_substeps", s.riccati.rk4_substeps}};
  const auto& m = cfg.sim;
  j["sim"] = {{"n_paths", m.sim.n_paths},
              {"seed", m.sim.seed},
              {"scheme", to_string(m.sim.scheme)},
              {"antithetic", m.sim.antithetic},
              {"deviation_paths", m.deviation_paths},
              {"costate_paths", m.costate_paths},
              {"n_deviations", m.deviation.n_deviations},
              {"bump_scale", m.deviation.bump_scale}};
  return j.dump();
}

std::string config_hash(const ScenarioConfig& cfg) {
  const std::string text = canonical_config(cfg);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw SolverError(ErrorCode::kIO, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace carbonmfg
