// Batch front-end: build constructions, evaluate energies, verify circulation
// quantization, run sweeps and pipelines, emit CSV/JSON plot data.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "grainforge/cell_problem.hpp"
#include "grainforge/circulation.hpp"
#include "grainforge/constructions.hpp"
#include "grainforge/energy.hpp"
#include "grainforge/interpolation.hpp"
#include "grainforge/limit_energy.hpp"
#include "grainforge/regularize.hpp"

using namespace grainforge;
using nlohmann::json;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io, "cannot open " + path);
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

int default_jobs() {
  if (const char* env = std::getenv("GRAINFORGE_JOBS")) {
    const int j = std::atoi(env);
    if (j > 0) return j;
  }
  return 1;
}

json params_json(const ModelParams& p) {
  return {{"eps", p.eps}, {"tau", p.tau}, {"lambda", p.lambda}};
}

int run(int argc, char** argv) {
  CLI::App app{"grainforge: grain-boundary energy laboratory"};
  app.require_subcommand(1);

  ModelParams params;
  std::string out_path = "out";
  std::uint64_t seed = 1;

  // construct ----------------------------------------------------------------
  auto* construct = app.add_subcommand("construct", "build an interface field");
  std::string kind = "r2r";
  double theta = M_PI / 4.0, alpha = 0.05, beta = 0.0;
  double eta = 1.0, eta_t = 1.0, mu = 0.0, mu_t = 0.0;
  double cl = 1.0, ch = 1.0, cr = 0.1, crho = 0.1;
  double window_L = 0.0;
  bool emit_grid = false;
  double grid_h = 0.0;
  construct->add_option("kind", kind, "r2r | c2c | r2c")->required();
  construct->add_option("--theta", theta);
  construct->add_option("--alpha", alpha);
  construct->add_option("--beta", beta);
  construct->add_option("--eta", eta);
  construct->add_option("--eta-t", eta_t);
  construct->add_option("--mu", mu);
  construct->add_option("--mu-t", mu_t);
  construct->add_option("--l", cl);
  construct->add_option("--h", ch);
  construct->add_option("--r", cr);
  construct->add_option("--rho", crho);
  construct->add_option("--eps", params.eps);
  construct->add_option("--tau", params.tau);
  construct->add_option("--lambda", params.lambda);
  construct->add_option("--window", window_L, "half-side of the evaluation window");
  construct->add_option("--grid-h", grid_h, "also rasterize at this spacing");
  construct->add_flag("--grid", emit_grid, "write the rasterized field");
  construct->add_option("-o,--out", out_path);

  // rs-curve -----------------------------------------------------------------
  auto* rs = app.add_subcommand("rs-curve", "Read-Shockley sweep");
  std::string alphas_str = "0.005,0.0085,0.0145,0.0247,0.0421,0.0717,0.122,0.2";
  double rs_theta = M_PI / 4.0;
  int jobs = default_jobs();
  bool slow = false;
  rs->add_option("--theta", rs_theta);
  rs->add_option("--alphas", alphas_str, "comma-separated list");
  rs->add_option("--eps", params.eps);
  rs->add_option("--tau", params.tau);
  rs->add_option("--lambda", params.lambda);
  rs->add_option("--jobs", jobs);
  rs->add_flag("--slow", slow, "also run the cell-problem optimizer");
  rs->add_option("--seed", seed);
  rs->add_option("-o,--out", out_path);

  // psi ----------------------------------------------------------------------
  auto* psi = app.add_subcommand("psi", "cell-problem estimates over a list of L");
  std::string L_str = "16,32,64";
  double psi_theta = M_PI / 4.0, psi_alpha = 0.05, psi_h = 0.25;
  psi->add_option("--theta", psi_theta);
  psi->add_option("--alpha", psi_alpha);
  psi->add_option("--L", L_str);
  psi->add_option("--grid-h", psi_h);
  psi->add_option("--tau", params.tau);
  psi->add_option("--lambda", params.lambda);
  psi->add_option("--seed", seed);
  psi->add_option("-o,--out", out_path);

  // clearout -------------------------------------------------------------
  auto* co = app.add_subcommand("clearout", "splice a nearly-constant field to R");
  std::string co_field;
  double co_Rtheta = 0.0, co_sigma = 0.25, co_omega = 1.0;
  co->add_option("--field", co_field, "grid field file (.bin)")->required();
  co->add_option("--R-theta", co_Rtheta);
  co->add_option("--sigma", co_sigma);
  co->add_option("--omega", co_omega);
  co->add_option("--eps", params.eps);
  co->add_option("--tau", params.tau);
  co->add_option("--lambda", params.lambda);
  co->add_option("-o,--out", out_path);

  // regularize -----------------------------------------------------------
  auto* reg = app.add_subcommand("regularize", "truncation/mollification/harmonic pipeline");
  std::string reg_field;
  reg->add_option("--field", reg_field, "grid field file (.bin)")->required();
  reg->add_option("--eps", params.eps);
  reg->add_option("--tau", params.tau);
  reg->add_option("--lambda", params.lambda);
  reg->add_option("-o,--out", out_path);

  // f0 ---------------------------------------------------------------------
  auto* f0 = app.add_subcommand("f0", "evaluate the limit energy of a partition");
  std::string f0_partition, f0_phi = "benchmark";
  f0->add_option("--partition", f0_partition, "partition JSON")->required();
  f0->add_option("--phi", f0_phi, "benchmark | psi | path to a phi table CSV");
  f0->add_option("--eps", params.eps);
  f0->add_option("--tau", params.tau);
  f0->add_option("--lambda", params.lambda);
  f0->add_option("-o,--out", out_path);

  CLI11_PARSE(app, argc, argv);

  if (construct->parsed()) {
    params.validate();
    Construction c;
    double extent;
    if (kind == "r2r") {
      const RRParams p = derive_rr_params(theta, alpha, params.eps, params.tau);
      extent = window_L > 0.0 ? window_L : 4.0 * (4.0 * p.h_B + 2.0 * p.h_D);
      c = build_r_to_r(p, extent);
    } else if (kind == "c2c") {
      CtoCParams p{eta, eta_t, mu, mu_t, cl, ch, cr, crho};
      extent = window_L > 0.0 ? window_L : 2.0 * ch;
      c = build_c_to_c(p, extent);
    } else if (kind == "r2c") {
      RtoCParams p;
      p.beta = beta;
      p.eta = eta;
      p.mu = mu;
      p.l = cl;
      p.h = ch;
      p.r = cr;
      p.rho = crho;
      extent = window_L > 0.0 ? window_L : 2.0 * ch;
      c = build_r_to_c(p, extent);
    } else {
      fail(errc::invalid_argument, "unknown construction kind: " + kind);
    }
    const Rect window{-extent, extent, -extent, extent};
    write_file(out_path + ".descriptor.json", construction_descriptor_json(c, window, params));
    const BurgersReport rep = check_h2(*c.field, c.defects.clipped(window, params.core_radius()),
                                       params, 0.0);
    write_file(out_path + ".burgers.json", burgers_report_json(rep, params));
    if (emit_grid) {
      const double h = grid_h > 0.0 ? grid_h : params.core_radius() / 2.0;
      const double side = std::round(2.0 * extent / h) * h;
      Domain dom(-side / 2.0, side / 2.0, -side / 2.0, side / 2.0, h);
      write_grid_binary(rasterize(*c.field, dom), out_path + ".field.bin");
    }
    std::cout << (rep.pass ? "burgers: pass\n" : "burgers: FAIL\n");
    return rep.pass ? 0 : 3;
  }

  if (rs->parsed()) {
    params.validate();
    const std::vector<double> alphas = parse_list(alphas_str);
    if (alphas.empty()) fail(errc::invalid_argument, "empty alpha list");
    SweepConfig cfg;
    cfg.jobs = jobs;
    cfg.slow_path = slow;
    const RSCurve curve = read_shockley_sweep(rs_theta, alphas, params.eps, params.tau,
                                              params.lambda, cfg);
    write_file(out_path + ".csv", curve.csv());
    json fit = json::parse(curve.fit_json());
    fit["config"] = {{"theta", rs_theta}, {"alphas", alphas}, {"seed", seed},
                     {"params", params_json(params)}, {"jobs", jobs}};
    write_file(out_path + ".fit.json", fit.dump(2));
    std::cout << "rows=" << curve.rows.size() << " slope=" << curve.slope << " r2=" << curve.r2
              << "\n";
    return 0;
  }

  if (psi->parsed()) {
    PsiConfig cfg;
    cfg.grid_h = psi_h;
    cfg.tau = params.tau;
    cfg.lambda = params.lambda;
    const std::vector<double> Ls = parse_list(L_str);
    const Rotation2 rm(psi_theta - psi_alpha), rp(psi_theta + psi_alpha);
    const PsiInftyResult r = psi_infty(rm, rp, Ls, cfg);
    json j;
    j["format_version"] = kFormatVersion;
    j["config"] = {{"theta", psi_theta}, {"alpha", psi_alpha}, {"L", Ls},
                   {"grid_h", psi_h},    {"seed", seed},       {"params", params_json(params)}};
    auto arr = json::array();
    for (const PsiEstimate& e : r.estimates)
      arr.push_back({{"L", e.L},
                     {"value", e.value},
                     {"upper_estimate", e.upper_estimate},
                     {"iterations", e.iterations},
                     {"initializer", e.initializer},
                     {"elastic", e.breakdown.elastic},
                     {"core", e.breakdown.core}});
    j["estimates"] = arr;
    j["value"] = r.value;
    j["cauchy_gap"] = r.cauchy_gap;
    j["tiling_ok"] = r.tiling_ok;
    j["gaps_nonincreasing"] = r.gaps_nonincreasing;
    j["warning_divergent"] = r.warning_divergent;
    write_file(out_path + ".json", j.dump(2));
    std::cout << "psi_infty=" << r.value << (r.warning_divergent ? " (warning: divergent)" : "")
              << "\n";
    return 0;
  }

  if (co->parsed()) {
    params.validate();
    const GridField f = read_grid_binary(co_field);
    const ClearOutResult r = clear_out(f, DefectSet{}, f.dom, Rotation2(co_Rtheta), co_sigma,
                                       co_omega, params);
    write_grid_binary(r.field, out_path + ".field.bin");
    json j;
    j["format_version"] = kFormatVersion;
    j["config"] = {{"field", co_field}, {"R_theta", co_Rtheta}, {"sigma", co_sigma},
                   {"omega", co_omega}, {"params", params_json(params)}};
    j["t0"] = r.t0;
    j["strip_right"] = r.strip_right;
    j["i0"] = r.i0;
    j["omega_measured"] = r.omega_measured;
    j["added_normalized"] = r.added_normalized;
    write_file(out_path + ".json", j.dump(2));
    std::cout << "clearout: added normalized energy " << r.added_normalized << "\n";
    return 0;
  }

  if (reg->parsed()) {
    params.validate();
    const GridField f = read_grid_binary(reg_field);
    const PipelineResult r = regularize_pipeline(f, DefectSet{}, params);
    json j = json::parse(r.report.to_json(params));
    j["config"] = {{"field", reg_field}, {"params", params_json(params)}};
    write_file(out_path + ".json", j.dump(2));
    write_grid_binary(r.field, out_path + ".field.bin");
    std::cout << "regularize: harmonic normalized energy " << r.report.harmonic.normalized << "\n";
    return 0;
  }

  if (f0->parsed()) {
    params.validate();
    const PolygonalPartition part = PolygonalPartition::from_json(read_file(f0_partition));
    PhiSource source;
    SweepConfig sweep_cfg;
    PsiConfig psi_cfg;
    psi_cfg.tau = params.tau;
    psi_cfg.lambda = params.lambda;
    PhiTable table;
    if (f0_phi == "benchmark") {
      source = [&](Rotation2 rm, Rotation2 rp, Vec2 n) {
        const double phi_n = std::atan2(n.y, n.x);
        const double a = 0.5 * (rp.theta - rm.theta);
        double mid = 0.5 * (rp.theta + rm.theta) + phi_n;
        const double p = M_PI / 2.0;
        mid -= p * std::floor(mid / p);
        if (mid <= 0.06 || mid >= p - 0.06 || std::abs(std::sin(a)) >= 0.125)
          return 2.0 * params.lambda;
        ModelParams unit;
        unit.tau = params.tau;
        unit.lambda = params.lambda;
        return rr_construction_value(mid, a, unit, sweep_cfg);
      };
    } else if (f0_phi == "psi") {
      source = [&](Rotation2 rm, Rotation2 rp, Vec2 n) { return phi(rm, rp, n, psi_cfg); };
    } else {
      table = PhiTable::from_csv(read_file(f0_phi));
      source = [&](Rotation2 rm, Rotation2 rp, Vec2 n) { return table.lookup(rm, rp, n); };
    }
    json j = json::parse(f0_report_json(part, source));
    j["config"] = {{"partition", f0_partition}, {"phi", f0_phi}, {"params", params_json(params)}};
    write_file(out_path + ".json", j.dump(2));
    std::cout << "f0=" << j["f0"].get<double>() << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_usage() ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
