// transportctl <command> --config file.json [--out dir] [--workers N]

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "transport/dynamics.hpp"
#include "transport/json_io.hpp"
#include "transport/limit_periodic.hpp"
#include "transport/parallel.hpp"
#include "transport/xychain.hpp"

namespace fs = std::filesystem;
using namespace transport;

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Reads parameters with defaults and records every resolved value, so the
/// full configuration can be echoed into the outputs.
class Params {
 public:
  explicit Params(json raw) : raw_(std::move(raw)) { detail::require_object(raw_, "config"); }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.push_back(key);
    T value = fallback;
    if (raw_.contains(key)) value = convert<T>(key, raw_[key]);
    resolved_[key] = value;
    return value;
  }

  template <class T>
  T require(const std::string& key) {
    if (!raw_.contains(key)) detail::bad_config("missing required field '" + key + "'");
    return get<T>(key, T{});
  }

  bool has(const std::string& key) const { return raw_.contains(key); }

  /// The raw JSON under `key`, echoed verbatim.
  const json& raw(const std::string& key) {
    if (!raw_.contains(key)) detail::bad_config("missing required field '" + key + "'");
    used_.push_back(key);
    resolved_[key] = raw_[key];
    return raw_[key];
  }

  void set_resolved(const std::string& key, json value) { resolved_[key] = std::move(value); }

  void finish() const {
    for (const auto& item : raw_.items()) {
      if (std::find(used_.begin(), used_.end(), item.key()) == used_.end()) {
        detail::bad_config("unknown field '" + item.key() + "'");
      }
    }
  }

  const json& resolved() const { return resolved_; }

 private:
  template <class T>
  static T convert(const std::string& key, const json& j) {
    try {
      return j.get<T>();
    } catch (const json::exception&) {
      detail::bad_config("field '" + key + "' has the wrong type: " + j.dump());
    }
  }

  json raw_;
  json resolved_ = json::object();
  std::vector<std::string> used_{"command"};
};

class Output {
 public:
  Output(std::string command, std::optional<fs::path> dir) : command_(std::move(command)), dir_(std::move(dir)) {
    if (dir_) fs::create_directories(*dir_);
  }

  void set_config(json config) { config_ = std::move(config); }

  void csv(const std::vector<std::string>& columns, const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream s;
    s << "# transportctl " << command_ << "\n# config " << config_.dump() << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) s << (i ? "," : "") << columns[i];
    s << "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) s << (i ? "," : "") << row[i];
      s << "\n";
    }
    emit(s.str(), ".csv");
  }

  void json_line(json body) {
    json out = json::object();
    for (auto& item : body.items()) out[item.key()] = item.value();
    out["config"] = config_;
    emit(out.dump() + "\n", ".json");
  }

 private:
  void emit(const std::string& text, const char* ext) {
    if (!dir_) {
      std::cout << text;
      return;
    }
    std::ofstream f(*dir_ / (command_ + ext), std::ios::binary);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + (*dir_ / (command_ + ext)).string());
  }

  std::string command_;
  std::optional<fs::path> dir_;
  json config_ = json::object();
};

BlockJacobiOperator operator_from(Params& p) {
  if (p.has("spec") && p.has("xy")) detail::bad_config("give either 'spec' or 'xy', not both");
  if (p.has("spec")) return build_operator(block_spec_from_json(p.raw("spec")));
  if (p.has("xy")) return build_M(xy_spec_from_json(p.raw("xy")));
  detail::bad_config("an operator is required: 'spec' (block Jacobi) or 'xy' (XY chain)");
}

XYChainSpec xy_from_top_level(Params& p) {
  json j{{"mu", p.raw("mu")}, {"gamma", p.raw("gamma")}, {"nu", p.raw("nu")}};
  return xy_spec_from_json(j);
}

WavePacket packet_from(Params& p, int m) {
  if (!p.has("psi")) {
    p.set_resolved("psi", json{{"delta", 0}});
    return WavePacket::delta(m, 0);
  }
  return packet_from_json(p.raw("psi"), m);
}

std::vector<double> default_exponent_times() {
  std::vector<double> t;
  for (double x = 10.0; x < 200.0; x *= 1.3) t.push_back(x);
  t.push_back(200.0);
  return t;
}

std::vector<cplx> complex_list(const json& j, const std::string& what) {
  if (!j.is_array()) detail::bad_config(what + " must be a list");
  std::vector<cplx> out;
  for (const auto& x : j) out.push_back(complex_from_json(x));
  return out;
}

std::vector<double> tiled(const std::vector<double>& w, long n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i % static_cast<long>(w.size()))];
  return out;
}

std::vector<double> nonempty(std::vector<double> w, const std::string& what) {
  if (w.empty()) detail::bad_config(what + " must not be empty");
  return w;
}

using Handler = std::function<void(Params&, Output&)>;

void cmd_bands(Params& p, Output& out) {
  const auto op = operator_from(p);
  const int grid = p.get<int>("grid", 512);
  p.finish();
  out.set_config(p.resolved());
  const auto bs = band_structure(op, grid);
  std::vector<std::vector<std::string>> rows;
  for (int k = 0; k < grid; ++k) {
    for (int j = 0; j < bs.band_count; ++j) {
      rows.push_back({num(bs.thetas[k]), std::to_string(j), num(bs.lambda[j][k]), num(bs.velocity[j][k]),
                      bs.degenerate[k] ? "1" : "0"});
    }
  }
  out.csv({"theta", "band_index", "lambda", "velocity", "degenerate_flag"}, rows);
}

void cmd_qnorm(Params& p, Output& out) {
  const auto op = operator_from(p);
  const int grid = p.get<int>("grid", 512);
  p.finish();
  out.set_config(p.resolved());
  const auto q = q_norm(op, grid);
  out.json_line({{"q_norm", q.value}, {"argmax_theta", q.argmax_theta}, {"argmax_band", q.argmax_band}});
}

void cmd_evolve(Params& p, Output& out) {
  const auto op = operator_from(p);
  const auto psi = packet_from(p, op.block_dim());
  const auto times = p.require<std::vector<double>>("times");
  long window = p.get<long>("window", 0);
  p.finish();
  double t_max = 0.0;
  for (double t : times) t_max = std::max(t_max, std::abs(t));
  if (window <= 0) window = auto_window(op, t_max, psi.support_radius(kSupportThreshold));
  p.set_resolved("window", window);
  out.set_config(p.resolved());
  const auto h = truncate(op, window);
  std::vector<std::vector<std::string>> rows;
  for (double t : times) {
    const auto state = evolve(h, psi, t);
    for (long s = 0; s < state.sites(); ++s) {
      for (int c = 0; c < state.block_dim(); ++c) {
        const cplx z = state.coeffs()(s * state.block_dim() + c);
        if (std::abs(z) <= 1e-12) continue;
        rows.push_back({num(t), std::to_string(state.base() + s), std::to_string(c), num(z.real()), num(z.imag())});
      }
    }
  }
  out.csv({"t", "site", "component", "re", "im"}, rows);
}

void cmd_exponents(Params& p, Output& out) {
  const auto op = operator_from(p);
  const auto psi = packet_from(p, op.block_dim());
  const double order = p.get<double>("p", 2.0);
  const auto times = p.get<std::vector<double>>("times", default_exponent_times());
  const long window = p.get<long>("window", 0);
  p.finish();
  const auto est = transport_exponents(op, psi, order, times, window);
  p.set_resolved("window", est.trajectory.window);
  out.set_config(p.resolved());
  std::vector<std::vector<std::string>> rows;
  std::size_t slope_index = 0;
  bool seen = false;
  for (const auto& s : est.trajectory.samples) {
    std::string slope;
    if (s.accepted && s.value > 0.0) {
      if (seen) slope = num(est.running_slopes[slope_index++]);
      seen = true;
    }
    rows.push_back({num(s.t), num(s.value), num(s.tail), s.accepted ? "1" : "0", slope});
  }
  out.csv({"t", "moment", "tail", "accepted", "running_slope"}, rows);
  out.json_line({{"beta_plus_hat", est.beta_plus},
                 {"beta_minus_hat", est.beta_minus},
                 {"residual", est.residual},
                 {"t_first", est.t_first},
                 {"t_last", est.t_last}});
}

void cmd_ballistic(Params& p, Output& out) {
  const auto op = operator_from(p);
  const auto psi = packet_from(p, op.block_dim());
  const auto times = p.require<std::vector<double>>("times");
  const int grid = p.get<int>("grid", 512);
  const long window = p.get<long>("window", 0);
  p.finish();
  const auto res = check_ballistic_limit(op, psi, times, grid, window);
  p.set_resolved("window", res.window);
  out.set_config(p.resolved());
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < times.size(); ++i) rows.push_back({num(times[i]), num(res.errors[i])});
  out.csv({"t", "error"}, rows);
  out.json_line({{"quadrature_error", res.q.quadrature_error},
                 {"parseval_residual", res.q.parseval_residual},
                 {"tail_mass", res.q.tail_mass},
                 {"grid", res.q.grid}});
}

void cmd_derivative(Params& p, Output& out) {
  const auto op = operator_from(p);
  const auto psi = packet_from(p, op.block_dim());
  const double T = p.get<double>("T", 1.0);
  const int steps = p.get<int>("steps", 256);
  const long window = p.get<long>("window", 0);
  p.finish();
  out.set_config(p.resolved());
  out.json_line({{"residual", check_derivative_identity(op, psi, T, steps, window)}});
}

void cmd_corollary(Params& p, Output& out) {
  const auto op = operator_from(p);
  const double eps = p.get<double>("epsilon", 0.2);
  std::vector<double> def;
  for (int T = 20; T <= 200; T += 20) def.push_back(T);
  const auto grid_T = p.get<std::vector<double>>("T_grid", def);
  const long K = p.get<long>("K", 0);
  const int grid = p.get<int>("grid", 512);
  const long window = p.get<long>("window", 0);
  p.finish();
  const auto res = corollary_probe(op, eps, grid_T, K, window, grid);
  p.set_resolved("window", res.window);
  out.set_config(p.resolved());
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : res.records) {
    rows.push_back({num(r.T), std::to_string(r.n), std::to_string(r.k), num(r.mass), num(res.c_tilde / (2.0 * r.T)),
                    r.threshold_ok ? "1" : "0"});
  }
  out.csv({"T", "n", "k", "mass", "threshold", "threshold_ok"}, rows);
  out.json_line({{"q_norm", res.q_norm}, {"c_tilde", res.c_tilde}, {"ok", res.ok}});
}

void cmd_localization(Params& p, Output& out) {
  const auto op = operator_from(p);
  const long first = p.get<long>("first", -200);
  const long last = p.get<long>("last", 200);
  const auto pairs = p.require<std::vector<std::pair<long, long>>>("pairs");
  const double t_max = p.get<double>("t_max", 50.0);
  const auto h = truncate_range(op, first, last);
  const double t_step = p.get<double>("t_step", 0.099 * kTwoPi / std::max(h.norm(), 1e-12));
  p.finish();
  out.set_config(p.resolved());
  if (!(t_step > 0.0) || !(t_max >= 0.0)) fail(ErrorKind::InvalidSpec, "t_step must be positive and t_max >= 0");
  std::vector<double> grid;
  for (long i = 0; i * t_step <= t_max; ++i) grid.push_back(i * t_step);
  const auto rep = localization_diagnostic(h, pairs, grid);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rep.rows) {
    rows.push_back({std::to_string(r.l), std::to_string(r.r), std::to_string(std::abs(r.r - r.l)), num(r.sup)});
  }
  out.csv({"l", "r", "distance", "sup"}, rows);
  out.json_line({{"slope", rep.slope},
                 {"intercept", rep.intercept},
                 {"r_squared", rep.r_squared},
                 {"fitted_points", rep.fitted_points},
                 {"localized", rep.localized}});
}

void cmd_xy_velocity(Params& p, Output& out) {
  const auto spec = xy_from_top_level(p);
  const int grid = p.get<int>("grid", 512);
  p.finish();
  out.set_config(p.resolved());
  out.json_line({{"v0", lr_velocity_bound(spec, grid)}});
}

CMatrix observable(const SpinChain& chain, const std::string& name, long site) {
  if (name == "sigma_x") return chain.sigma('x', site);
  if (name == "sigma_y") return chain.sigma('y', site);
  if (name == "sigma_z") return chain.sigma('z', site);
  if (name == "raising") return chain.raising(site);
  if (name == "lowering") return chain.lowering(site);
  detail::bad_config("observable must be sigma_x, sigma_y, sigma_z, raising or lowering");
}

void cmd_xy_verify(Params& p, Output& out) {
  const auto spec = xy_from_top_level(p);
  const auto lattice = p.get<std::vector<long>>("lattice", {1, 6});
  const auto times = p.get<std::vector<double>>("times", {0.5, 1.0, 2.0});
  const auto pairs = p.get<std::vector<std::pair<long, long>>>("pairs", {{2, 4}, {1, 5}});
  const auto obs = p.get<std::string>("observable", "sigma_x");
  const auto pairing_name = p.get<std::string>("pairing", "proof");
  p.finish();
  out.set_config(p.resolved());
  if (lattice.size() != 2) detail::bad_config("lattice must be [first, last]");
  if (pairing_name != "proof" && pairing_name != "literal") detail::bad_config("pairing must be 'proof' or 'literal'");
  const auto pairing = pairing_name == "proof" ? LowerBoundPairing::Proof : LowerBoundPairing::Literal;
  const SpinChain chain(spec, lattice[0], lattice[1]);
  std::vector<std::vector<std::string>> rows;
  auto row = [&](const std::string& name, long l, long r, double t, double lhs, double rhs, bool ok) {
    rows.push_back({name, std::to_string(l), std::to_string(r), num(t), num(lhs), num(rhs), ok ? "1" : "0"});
  };
  for (double t : times) {
    for (long j = chain.first(); j <= chain.last(); ++j) {
      const double res = verify_free_fermion(chain, j, t);
      row("free_fermion", j, j, t, res, 1e-8, res < 1e-8);
    }
  }
  for (const auto& [l, r] : pairs) {
    for (double t : times) {
      for (int c = 1; c <= 4; ++c) {
        const auto b = verify_lower_bound(chain, l, r, t, c, pairing);
        row("lower_case_" + std::to_string(c), l, r, t, b.lhs, b.rhs, b.ok);
      }
      const auto u = verify_upper_bound(chain, l, r, observable(chain, obs, r), t);
      row("upper_" + obs, l, r, t, u.lhs, u.rhs, u.ok);
    }
  }
  out.csv({"check_name", "l", "r", "t", "lhs", "rhs", "ok"}, rows);
}

void cmd_lyapunov(Params& p, Output& out) {
  const auto w = nonempty(p.require<std::vector<double>>("w"), "w");
  const auto energies = complex_list(p.raw("energies"), "energies");
  const auto ns = p.get<std::vector<long>>("n", {1000});
  p.finish();
  out.set_config(p.resolved());
  std::vector<std::vector<std::string>> rows;
  for (cplx e : energies) {
    for (long n : ns) {
      rows.push_back({num(e.real()), num(e.imag()), std::to_string(n), num(finite_lyapunov(n, e, tiled(w, n)))});
    }
  }
  out.csv({"E_re", "E_im", "n", "L"}, rows);
}

void cmd_thouless(Params& p, Output& out) {
  const auto w = nonempty(p.require<std::vector<double>>("w"), "w");
  const auto zs = complex_list(p.raw("z"), "z");
  const int grid = p.get<int>("grid", 2048);
  p.finish();
  out.set_config(p.resolved());
  std::vector<std::vector<std::string>> rows;
  for (cplx z : zs) {
    const auto c = thouless_check(z, w, grid);
    rows.push_back({num(z.real()), num(z.imag()), num(c.lhs), num(c.rhs), num(c.gap)});
  }
  out.csv({"z_re", "z_im", "lhs", "rhs", "gap"}, rows);
}

void cmd_dt(Params& p, Output& out) {
  const auto w = nonempty(p.require<std::vector<double>>("w"), "w");
  const double lambda = p.get<double>("lambda", 1.0);
  const double K = p.get<double>("K", 2.0);
  const double T = p.get<double>("T", 100.0);
  const double alpha = p.get<double>("alpha", 1.0);
  p.finish();
  out.set_config(p.resolved());
  out.json_line({{"integral", dt_criterion(w, lambda, K, T, alpha)}, {"K", K}, {"T", T}, {"alpha", alpha}});
}

void cmd_stability(Params& p, Output& out) {
  const auto W = nonempty(p.require<std::vector<double>>("W"), "W");
  const auto V = nonempty(p.require<std::vector<double>>("V"), "V");
  const auto psi = packet_from(p, 1);
  const double t = p.get<double>("t", 5.0);
  const double order = p.get<double>("p", 2.0);
  const double m_env = p.get<double>("m_env", 1.0);
  p.finish();
  out.set_config(p.resolved());
  const double diff = perturbation_stability(Potential{W, 0, {}}, Potential{V, 0, {}}, psi, t, order, m_env);
  out.json_line({{"difference", diff}});
}

void cmd_generic(Params& p, Output& out) {
  const int stages = p.get<int>("stages", 3);
  const double order = p.get<double>("p", 2.0);
  const double m_env = p.get<double>("m_env", 1.0);
  const auto battery = p.get<std::string>("battery", "delta0");
  const auto seed = p.get<unsigned long long>("seed", Lest2Options{}.seed);
  p.finish();
  out.set_config(p.resolved());
  if (battery != "delta0" && battery != "full") detail::bad_config("battery must be 'delta0' or 'full'");
  Lest2Options opt;
  opt.battery = battery == "full" ? Battery::Full : Battery::DeltaOnly;
  opt.seed = seed;
  const auto g = generic_builder(stages, order, m_env, opt);
  json st = json::array(), checks = json::array();
  for (const auto& s : g.stages) {
    st.push_back({{"stage", s.stage}, {"period", s.period}, {"W", s.W}, {"epsilon", s.epsilon}, {"delta", s.delta},
                  {"T", s.T}, {"p", s.p}, {"m_env", s.m_env}});
  }
  for (const auto& c : g.checks) {
    checks.push_back({{"stage", c.stage}, {"T", c.T}, {"moment", c.moment}, {"threshold", c.threshold},
                      {"distance", c.distance}, {"ok", c.ok}});
  }
  out.json_line({{"stages", st}, {"verification", checks}, {"V", g.V}});
}

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table{
      {"bands", cmd_bands},
      {"qnorm", cmd_qnorm},
      {"evolve", cmd_evolve},
      {"exponents", cmd_exponents},
      {"ballistic-check", cmd_ballistic},
      {"derivative-check", cmd_derivative},
      {"corollary-probe", cmd_corollary},
      {"localization", cmd_localization},
      {"xy-velocity", cmd_xy_velocity},
      {"xy-verify", cmd_xy_verify},
      {"lyapunov", cmd_lyapunov},
      {"thouless", cmd_thouless},
      {"dt-criterion", cmd_dt},
      {"stability", cmd_stability},
      {"generic", cmd_generic},
  };
  return table;
}

int report(int code, const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ballistic transport experiments for periodic block Jacobi operators"};
  std::string command;
  std::string config_path;
  std::string out_dir;
  int n_workers = 0;
  app.add_option("command", command, "experiment to run")->required();
  app.add_option("--config", config_path, "JSON configuration file")->required();
  app.add_option("--out", out_dir, "directory for output files (default: stdout)");
  app.add_option("--workers", n_workers, "worker threads (default: TRANSPORTCTL_WORKERS or all cores)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(2, "ConfigInvalid", e.what());
  }

  if (n_workers <= 0) {
    if (const char* env = std::getenv("TRANSPORTCTL_WORKERS")) n_workers = std::atoi(env);
  }
  set_workers(n_workers);

  const auto it = handlers().find(command);
  if (it == handlers().end()) return report(2, "ConfigInvalid", "unknown command '" + command + "'");

  try {
    std::ifstream f(config_path);
    if (!f) return report(2, "ConfigInvalid", "cannot read " + config_path);
    json raw;
    try {
      raw = json::parse(f);
    } catch (const json::parse_error& e) {
      return report(2, "ConfigInvalid", e.what());
    }
    if (raw.is_object() && raw.contains("command") && raw["command"] != command) {
      return report(2, "ConfigInvalid", "config is for command " + raw["command"].dump());
    }
    Params params(raw);
    Output out(command, out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir));
    it->second(params, out);
  } catch (const Error& e) {
    return report(e.category() == ErrorCategory::Validation ? 2 : 3, std::string(to_string(e.kind())), e.what());
  } catch (const std::exception& e) {
    return report(3, "Internal", e.what());
  }
  return 0;
}
