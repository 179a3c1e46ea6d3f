#pragma once

// JSON forms of BlockSpec, XYChainSpec and WavePacket.
//   BlockSpec:   {"m": int, "q": int, "a": [block, ...], "b": [block, ...]}
//                with each block a row-major list of m*m entries, an entry
//                being a number or a [re, im] pair.
//   XYChainSpec: {"mu": [...], "gamma": [...], "nu": [...]}
//   WavePacket:  {"delta": n} (scalar index) or {"base": site, "coeffs": [entry, ...]}
// Requires nlohmann/json ("json.hpp") on the include path.

#include <initializer_list>
#include <string>
#include <vector>

#include "json.hpp"
#include "transport/block_jacobi.hpp"
#include "transport/xychain.hpp"

namespace transport {

using json = nlohmann::ordered_json;

namespace detail {

[[noreturn]] inline void bad_config(const std::string& msg) { fail(ErrorKind::ConfigInvalid, msg); }

inline void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) bad_config(what + " must be a JSON object");
}

}  // namespace detail

/// Rejects keys outside `allowed`.
inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  detail::require_object(j, what);
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) detail::bad_config("unknown field '" + item.key() + "' in " + what);
  }
}

inline cplx complex_from_json(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    return {j[0].get<double>(), j[1].get<double>()};
  }
  detail::bad_config("complex entries must be numbers or [re, im] pairs, got " + j.dump());
}

inline json complex_to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline CMatrix block_from_json(const json& j, int m) {
  if (!j.is_array() || static_cast<int>(j.size()) != m * m) {
    detail::bad_config("each block must list " + std::to_string(m * m) + " entries");
  }
  CMatrix out(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) out(r, c) = complex_from_json(j[static_cast<std::size_t>(r * m + c)]);
  return out;
}

inline json block_to_json(const CMatrix& b) {
  json out = json::array();
  for (Eigen::Index r = 0; r < b.rows(); ++r)
    for (Eigen::Index c = 0; c < b.cols(); ++c) out.push_back(complex_to_json(b(r, c)));
  return out;
}

inline BlockSpec block_spec_from_json(const json& j) {
  check_keys(j, {"m", "q", "a", "b"}, "spec");
  for (const char* key : {"m", "q", "a", "b"}) {
    if (!j.contains(key)) detail::bad_config(std::string("spec is missing '") + key + "'");
  }
  if (!j["m"].is_number_integer() || !j["q"].is_number_integer()) detail::bad_config("m and q must be integers");
  BlockSpec spec;
  spec.m = j["m"].get<int>();
  spec.q = j["q"].get<int>();
  if (spec.m < 1 || spec.q < 1) fail(ErrorKind::DimensionMismatch, "m and q must be positive");
  if (!j["a"].is_array() || !j["b"].is_array()) detail::bad_config("a and b must be lists of blocks");
  for (const auto& blk : j["a"]) spec.a.push_back(block_from_json(blk, spec.m));
  for (const auto& blk : j["b"]) spec.b.push_back(block_from_json(blk, spec.m));
  return spec;
}

inline json block_spec_to_json(const BlockSpec& spec) {
  json a = json::array(), b = json::array();
  for (const auto& blk : spec.a) a.push_back(block_to_json(blk));
  for (const auto& blk : spec.b) b.push_back(block_to_json(blk));
  return json{{"m", spec.m}, {"q", spec.q}, {"a", a}, {"b", b}};
}

inline std::vector<double> real_list(const json& j, const std::string& what) {
  if (!j.is_array()) detail::bad_config(what + " must be a list of numbers");
  std::vector<double> out;
  for (const auto& x : j) {
    if (!x.is_number()) detail::bad_config(what + " must be a list of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline XYChainSpec xy_spec_from_json(const json& j) {
  check_keys(j, {"mu", "gamma", "nu"}, "xy spec");
  for (const char* key : {"mu", "gamma", "nu"}) {
    if (!j.contains(key)) detail::bad_config(std::string("xy spec is missing '") + key + "'");
  }
  XYChainSpec spec{real_list(j["mu"], "mu"), real_list(j["gamma"], "gamma"), real_list(j["nu"], "nu")};
  validate(spec);
  return spec;
}

inline json xy_spec_to_json(const XYChainSpec& spec) {
  return json{{"mu", spec.mu}, {"gamma", spec.gamma}, {"nu", spec.nu}};
}

inline WavePacket packet_from_json(const json& j, int m) {
  detail::require_object(j, "psi");
  if (j.contains("delta")) {
    check_keys(j, {"delta"}, "psi");
    if (!j["delta"].is_number_integer()) detail::bad_config("psi.delta must be an integer scalar index");
    return WavePacket::delta(m, j["delta"].get<long>());
  }
  check_keys(j, {"base", "coeffs"}, "psi");
  if (!j.contains("base") || !j.contains("coeffs") || !j["coeffs"].is_array()) {
    detail::bad_config("psi needs either 'delta' or both 'base' and 'coeffs'");
  }
  CVector c(static_cast<Eigen::Index>(j["coeffs"].size()));
  for (std::size_t i = 0; i < j["coeffs"].size(); ++i) c(static_cast<Eigen::Index>(i)) = complex_from_json(j["coeffs"][i]);
  return WavePacket(m, j["base"].get<long>(), std::move(c));
}

}  // namespace transport
