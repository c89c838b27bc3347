#include "twinbeam/errors.hpp"
#include "twinbeam/gaussian.hpp"
#include "twinbeam/poling.hpp"
#include "twinbeam/scenario.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace twinbeam;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kConfigError = 1, kNumericalError = 2;

std::string cache_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv("TWINBEAM_CACHE_DIR");
  return env ? env : "";
}

int simulate(const std::string& config, const std::string& out, int gain_points, const std::string& cache) {
  ScenarioConfig cfg = load_config(config);
  RunOptions opts;
  opts.out_dir = out;
  opts.cache_dir = cache_dir(cache);
  opts.gain_points = gain_points;
  opts.log = [](const std::string& m) { std::cerr << m << '\n'; };
  ScenarioResult res = run_scenario(cfg, opts);
  for (const auto& f : res.files) std::cout << f << '\n';
  return kOk;
}

int pole_design(const std::string& config, const std::string& out) {
  ScenarioConfig cfg = load_config(config);
  SourceModel model(cfg);
  json j = {{"geometry", to_string(cfg.geometry)},
            {"n_domains", model.profile().n_domains()},
            {"sigma_th", model.sigma_th()},
            {"max_tracking_error", model.tracking_error()},
            {"profile", profile_to_json(model.profile())}};
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream f(out);
    if (!f) throw Error("cannot write " + out);
    f << j.dump(2) << '\n';
    std::cout << out << '\n';
  }
  return kOk;
}

// Accepts {"V": [[...]]} or a bare nested array; quadrature ordering (x..., p...), vacuum variance 1/2.
Mat read_covariance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open covariance file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  const json& rows = j.is_object() ? j.value("V", json()) : j;
  if (!rows.is_array() || rows.empty()) throw ConfigError(path + ": expected a square matrix under \"V\"");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Mat V(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!rows[i].is_array() || static_cast<Eigen::Index>(rows[i].size()) != n)
      throw ConfigError(path + ": row " + std::to_string(i) + " has the wrong length");
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!rows[i][k].is_number()) throw ConfigError(path + ": non-numeric entry");
      V(i, k) = rows[i][k].get<double>();
    }
  }
  if (n % 2) throw ConfigError(path + ": matrix size must be even");
  return V;
}

std::vector<double> to_vec(const Vec& v) { return {v.data(), v.data() + v.size()}; }

int decompose(const std::string& path) {
  Mat V = read_covariance(path);
  WilliamsonResult w = williamson(V);
  BlochMessiahResult b = bloch_messiah(w.S);
  PurityRoutes p = purity_routes(V, w.nu);
  json rows = json::array();
  for (Eigen::Index i = 0; i < w.S.rows(); ++i) rows.push_back(to_vec(w.S.row(i).transpose()));
  json j = {{"n_modes", V.rows() / 2},
            {"symplectic_eigenvalues", to_vec(w.nu)},
            {"thermal_occupancies", to_vec(w.nbar)},
            {"squeezing", to_vec(b.r)},
            {"purity", p.from_symplectic},
            {"purity_determinant", p.from_determinant},
            {"S", rows}};
  std::cout << j.dump(2) << '\n';
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twin-beam SPDC source simulator"};
  app.require_subcommand(1);

  std::string config, out, cache, cov;
  int gain_points = 0;

  auto* sim = app.add_subcommand("simulate", "Run a gain sweep described by a config file");
  sim->add_option("config", config, "Scenario config (JSON)")->required();
  sim->add_option("--out", out, "Output directory")->default_val("out");
  sim->add_option("--gain-points", gain_points, "Replace the gain list by a K-point ladder")->check(CLI::NonNegativeNumber);
  sim->add_option("--cache", cache, "Propagator cache directory (overrides TWINBEAM_CACHE_DIR)");

  std::string pole_out;
  auto* pole = app.add_subcommand("pole-design", "Design the poling profile of a config");
  pole->add_option("config", config, "Scenario config (JSON)")->required();
  pole->add_option("--out", pole_out, "Write the design to this file instead of stdout");

  auto* dec = app.add_subcommand("decompose", "Williamson and Bloch-Messiah decomposition of a covariance matrix");
  dec->add_option("covariance", cov, "JSON file with the quadrature covariance matrix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*sim) return simulate(config, out, gain_points, cache);
    if (*pole) return pole_design(config, pole_out);
    return decompose(cov);
  } catch (const NumericalError& e) {
    std::cerr << "numerical gate failed: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}
