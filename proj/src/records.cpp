#include "photonchain/records.hpp"

#include <cmath>
#include <limits>

#include "photonchain/errors.hpp"

namespace photonchain::records {

namespace {

double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

const json& field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("record lacks field '") + key + "'");
  return *it;
}

json covariance(const characterization::Covariance2& c) {
  return json::array({json::array({c[0][0], c[0][1]}), json::array({c[1][0], c[1][1]})});
}

characterization::Covariance2 covariance_from(const json& j) {
  characterization::Covariance2 c{};
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t k = 0; k < 2; ++k) c[r][k] = j.at(r).at(k).get<double>();
  }
  return c;
}

json residuals(const std::vector<characterization::Residual>& rs) {
  json out = json::array();
  for (const auto& r : rs) out.push_back({{"x", r.x}, {"observed", r.observed}, {"model", r.model}});
  return out;
}

std::vector<characterization::Residual> residuals_from(const json& j) {
  std::vector<characterization::Residual> out;
  for (const auto& r : j) out.push_back({r.at("x").get<double>(), r.at("observed").get<double>(), r.at("model").get<double>()});
  return out;
}

json matrices(const std::vector<fock::DiagonalDensityMatrix>& v) {
  json out = json::array();
  for (const auto& rho : v) out.push_back(density_matrix(rho));
  return out;
}

std::vector<fock::DiagonalDensityMatrix> matrices_from(const json& j) {
  std::vector<fock::DiagonalDensityMatrix> out;
  for (const auto& r : j) out.push_back(density_matrix_from(r));
  return out;
}

}  // namespace

json density_matrix(const fock::DiagonalDensityMatrix& rho) {
  json out = json::object();
  for (const auto& [k, v] : fock::to_record(rho)) out[k] = v;
  return out;
}

fock::DiagonalDensityMatrix density_matrix_from(const json& j) {
  if (!j.is_object()) throw DataError("density-matrix record must be an object");
  std::vector<std::pair<std::string, double>> record;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw DataError("density-matrix record field '" + k + "' is not a number");
    record.emplace_back(k, v.get<double>());
  }
  return fock::from_record(record);
}

json bounded(const tomography::BoundedValue& v) {
  const auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {{"value", num(v.value)}, {"stat", num(v.stat)}, {"sys_lo", num(v.sys_lo)}, {"sys_hi", num(v.sys_hi)}};
}

json reconstruction(const tomography::ReconstructionResult& r) {
  json cal = json::array();
  for (const auto& c : r.calibrations) {
    cal.push_back({{"apparatus_gain", c.apparatus_gain},
                   {"assumed_control_variance", c.assumed_control_variance},
                   {"assumption", tomography::to_string(c.assumption)}});
  }
  const auto summary = tomography::summarize(r);
  return {{"rho", density_matrix(r.rho)},
          {"rho_amplified", density_matrix(r.rho_amplified)},
          {"stat_err", r.stat_err},
          {"sys_lo", r.sys_lo},
          {"sys_hi", r.sys_hi},
          {"per_set_squeezed", matrices(r.per_set_squeezed)},
          {"per_set_amplified", matrices(r.per_set_amplified)},
          {"calibrations", cal},
          {"n_sets", r.n_sets},
          {"nbar_backaction", r.nbar_backaction},
          {"g2", bounded(summary.g2)},
          {"g2_shorthand", std::isfinite(summary.g2_shorthand) ? json(summary.g2_shorthand) : json(nullptr)},
          {"fidelity_vs_fock1", bounded(summary.fidelity_vs_fock1)}};
}

tomography::ReconstructionResult reconstruction_from(const json& j) {
  try {
    tomography::ReconstructionResult r{density_matrix_from(field(j, "rho")),
                                       density_matrix_from(field(j, "rho_amplified")),
                                       {},
                                       {},
                                       {},
                                       {},
                                       {},
                                       {},
                                       0,
                                       0.0};
    for (const auto& v : field(j, "stat_err")) r.stat_err.push_back(number_or_nan(v));
    for (const auto& v : field(j, "sys_lo")) r.sys_lo.push_back(number_or_nan(v));
    for (const auto& v : field(j, "sys_hi")) r.sys_hi.push_back(number_or_nan(v));
    r.per_set_squeezed = matrices_from(field(j, "per_set_squeezed"));
    r.per_set_amplified = matrices_from(field(j, "per_set_amplified"));
    for (const auto& c : field(j, "calibrations")) {
      r.calibrations.push_back({c.at("apparatus_gain").get<double>(), c.at("assumed_control_variance").get<double>(),
                                tomography::calibration_assumption_from_string(c.at("assumption").get<std::string>())});
    }
    r.n_sets = field(j, "n_sets").get<int>();
    r.nbar_backaction = field(j, "nbar_backaction").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed reconstruction record: ") + e.what());
  }
}

json mode_params(const temporal::TemporalModeParams& p) {
  return {{"rise_time_ns", p.rise_time_ns},
          {"decay_rate_khz", p.decay_rate_khz},
          {"jpa_bandwidth_mhz", std::isfinite(p.jpa_bandwidth_mhz) ? json(p.jpa_bandwidth_mhz) : json("inf")}};
}

temporal::TemporalModeParams mode_params_from(const json& j) {
  temporal::TemporalModeParams p;
  p.rise_time_ns = field(j, "rise_time_ns").get<double>();
  p.decay_rate_khz = field(j, "decay_rate_khz").get<double>();
  const auto& bw = field(j, "jpa_bandwidth_mhz");
  p.jpa_bandwidth_mhz = bw.is_string() ? std::numeric_limits<double>::infinity() : bw.get<double>();
  return p;
}

json backaction_model(const characterization::BackactionModel& m) {
  return {{"isolation_l", m.isolation_l},
          {"isolation_l_err", m.isolation_err()},
          {"gamma0_khz", m.gamma0_khz},
          {"gamma0_khz_err", m.gamma0_err()},
          {"kappa_khz", m.kappa_khz},
          {"covariance", covariance(m.covariance)},
          {"residuals", residuals(m.residuals)}};
}

characterization::BackactionModel backaction_model_from(const json& j) {
  try {
    characterization::BackactionModel m;
    m.isolation_l = field(j, "isolation_l").get<double>();
    m.gamma0_khz = field(j, "gamma0_khz").get<double>();
    m.kappa_khz = field(j, "kappa_khz").get<double>();
    m.covariance = covariance_from(field(j, "covariance"));
    m.residuals = residuals_from(field(j, "residuals"));
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed backaction record: ") + e.what());
  }
}

json added_noise_model(const characterization::AddedNoiseModel& m) {
  json per_gain = json::array();
  for (const auto& g : m.per_gain) {
    per_gain.push_back({{"gain_db", g.gain_db},
                        {"chain_gain", g.chain_gain},
                        {"chain_gain_err", g.chain_gain_err},
                        {"n_add", g.n_add},
                        {"n_add_err", g.n_add_err},
                        {"residuals", residuals(g.residuals)}});
  }
  return {{"n_jpa", m.n_jpa},
          {"n_jpa_err", std::sqrt(m.covariance[0][0])},
          {"n_hemt", m.n_hemt},
          {"n_hemt_err", std::sqrt(m.covariance[1][1])},
          {"covariance", covariance(m.covariance)},
          {"at_or_above_quantum_limit", m.at_or_above_quantum_limit()},
          {"per_gain", per_gain}};
}

characterization::AddedNoiseModel added_noise_model_from(const json& j) {
  try {
    characterization::AddedNoiseModel m;
    m.n_jpa = field(j, "n_jpa").get<double>();
    m.n_hemt = field(j, "n_hemt").get<double>();
    m.covariance = covariance_from(field(j, "covariance"));
    for (const auto& g : field(j, "per_gain")) {
      m.per_gain.push_back({g.at("gain_db").get<double>(), g.at("chain_gain").get<double>(),
                            g.at("chain_gain_err").get<double>(), g.at("n_add").get<double>(),
                            g.at("n_add_err").get<double>(), residuals_from(g.at("residuals"))});
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed added-noise record: ") + e.what());
  }
}

json comparison(const characterization::ComparisonReport& c) {
  return {{"gain_db", c.gain_db},
          {"eta", c.eta},
          {"eta_err", c.eta_err},
          {"escape_ratio", c.escape_ratio},
          {"rho_expected", density_matrix(c.rho_expected)},
          {"fidelity_expected", bounded(c.fidelity_expected)},
          {"fidelity_ideal", bounded(c.fidelity_ideal)},
          {"g2", bounded(c.g2)}};
}

}  // namespace photonchain::records
