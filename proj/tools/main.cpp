// Command-line front end: normal-form pipelines, verification replays,
// transfer-matrix experiments, and plain orbit integration.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "orbitnf/homogeneous.hpp"
#include "orbitnf/normalform.hpp"
#include "orbitnf/transfer.hpp"

using namespace orbitnf;

namespace {

struct FieldConfig {
  std::string name;
  std::string expression;
  int d = 1;
  std::vector<std::string> param_list;
  double eps = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> x0_values;

  std::map<std::string, double> params() const {
    std::map<std::string, double> out;
    for (const std::string& kv : param_list) {
      auto pos = kv.find('=');
      if (pos == std::string::npos)
        throw Error("bad parameter '" + kv + "', expected name=value");
      out[kv.substr(0, pos)] = std::stod(kv.substr(pos + 1));
    }
    if (!std::isnan(eps)) out["eps"] = eps;
    return out;
  }

  std::shared_ptr<const ClosedFormField> field() const {
    if (!name.empty()) return make_builtin(name, params());
    if (!expression.empty()) return parse_hamiltonian(expression, d, params());
    throw Error("no hamiltonian given: use --ham or --expr");
  }

  int dim() const { return name.empty() ? d : builtin_entry(name).d; }

  PhaseState start() const {
    const int dd = dim();
    if (x0_values.empty()) {
      if (!name.empty()) return builtin_entry(name).start;
      throw Error("--x0 is required for --expr fields");
    }
    if (static_cast<int>(x0_values.size()) != 2 * (dd + 1))
      throw Error("--x0 needs " + std::to_string(2 * (dd + 1)) + " numbers");
    Vec q(dd + 1), p(dd + 1);
    for (int i = 0; i <= dd; ++i) q[i] = x0_values[i];
    for (int i = 0; i <= dd; ++i) p[i] = x0_values[dd + 1 + i];
    return PhaseState(q, p);
  }

  Json to_json() const {
    Json j;
    if (!name.empty()) {
      const auto& e = builtin_entry(name);
      j["name"] = name;
      j["expression"] = e.expression;
      j["d"] = e.d;
    } else {
      j["expression"] = expression;
      j["d"] = d;
    }
    Json pj = Json::object();
    if (!name.empty())
      for (const auto& [k, v] : builtin_entry(name).params) pj[k] = v;
    for (const auto& [k, v] : params()) pj[k] = v;
    j["params"] = pj;
    return j;
  }
};

void add_field_options(CLI::App* cmd, FieldConfig& cfg) {
  cmd->add_option("--ham", cfg.name, "builtin hamiltonian name");
  cmd->add_option("--expr", cfg.expression, "closed-form expression over q0..qd, p0..pd");
  cmd->add_option("--d", cfg.d, "dimension d for --expr fields");
  cmd->add_option("--params", cfg.param_list, "name=value parameter bindings")
      ->delimiter(',');
  cmd->add_option("--eps", cfg.eps, "shorthand for --params eps=<value>");
  cmd->add_option("--x0", cfg.x0_values, "initial condition q0..qd,p0..pd")
      ->delimiter(',');
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_orbit_csv(const std::string& path, const OrbitSegment& orbit, int d) {
  std::ostringstream os;
  os << "t";
  for (int i = 0; i <= d; ++i) os << ",q" << i;
  for (int i = 0; i <= d; ++i) os << ",p" << i;
  os << ",energy\n";
  for (int i = 0; i < orbit.nodes(); ++i) {
    os << csv_number(orbit.node_time(i));
    const Vec& x = orbit.node_flat(i);
    for (int c = 0; c < x.size(); ++c) os << "," << csv_number(x[c]);
    os << "," << csv_number(orbit.node_energy(i)) << "\n";
  }
  write_text(path, os.str());
}

void print_report_table(const NormalFormReport& rep) {
  std::printf("%-20s %14s %10s  %s\n", "condition", "max residual", "tolerance",
              "status");
  for (const auto& c : rep.conditions)
    std::printf("%-20s %14.6g %10.3g  %s\n", c.name.c_str(), c.max_residual,
                c.tolerance, c.pass ? "pass" : "FAIL");
  std::printf("obstruction max |d2H/dq*dp0| = %.6g (%s)\n", rep.obstruction_max,
              rep.obstruction_vanishes ? "vanishes" : "does not vanish");
  std::printf("expansion drift: f %.6g, w %.6g\n", rep.f_drift, rep.w_drift);
}

void print_matrix(const char* label, const Mat& L) {
  std::printf("%s =\n", label);
  for (int i = 0; i < L.rows(); ++i) {
    std::printf("  [");
    for (int j = 0; j < L.cols(); ++j)
      std::printf("%s%12.6g", j ? ", " : " ", L(i, j));
    std::printf(" ]\n");
  }
}

// ---------------------------------------------------------------------------

int cmd_list(bool as_json) {
  if (as_json) {
    Json j = Json::array();
    for (const auto& e : builtin_library()) {
      Json row;
      row["name"] = e.name;
      row["d"] = e.d;
      row["expression"] = e.expression;
      Json pj = Json::object();
      for (const auto& [k, v] : e.params) pj[k] = v;
      row["params"] = pj;
      Json q = Json::array(), p = Json::array();
      for (int i = 0; i < e.start.q.size(); ++i) q.push_back(e.start.q[i]);
      for (int i = 0; i < e.start.p.size(); ++i) p.push_back(e.start.p[i]);
      row["start"]["q"] = q;
      row["start"]["p"] = p;
      row["delta"] = e.delta;
      row["convex"] = e.convex;
      if (e.homogeneous_degree > 0) row["homogeneous_degree"] = e.homogeneous_degree;
      j.push_back(row);
    }
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::printf("%-8s %2s %-58s %6s\n", "name", "d", "expression", "delta");
  for (const auto& e : builtin_library()) {
    std::string expr = e.expression;
    for (const auto& [k, v] : e.params) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%g", v);
      expr += "  [" + k + "=" + buf + "]";
    }
    std::printf("%-8s %2d %-58s %6g\n", e.name.c_str(), e.d, expr.c_str(), e.delta);
  }
  return 0;
}

int cmd_integrate(const FieldConfig& cfg, double T, int steps, const std::string& out) {
  auto H = cfg.field();
  OrbitSegment orbit = integrate_orbit(*H, cfg.start(), T, steps);
  write_orbit_csv(out, orbit, cfg.dim());
  std::printf("integrated %d steps to t=%g, energy drift %.3g; wrote %s\n", steps, T,
              orbit.energy_drift(), out.c_str());
  return 0;
}

struct RunPaths {
  std::string report = "report.json";
  std::string recipe = "recipe.json";
  std::string orbit = "orbit.csv";
};

Json make_recipe(const FieldConfig& cfg, const PipelineResult& r,
                 const PipelineOptions& opts) {
  Json j;
  j["hamiltonian"] = cfg.to_json();
  Json x0 = Json::array();
  Vec flat = r.orbit_original.state_at(0.0).flat();
  for (int i = 0; i < flat.size(); ++i) x0.push_back(flat[i]);
  j["x0"] = x0;
  j["delta"] = r.delta_used;
  j["steps_per_unit"] = opts.steps_per_unit;
  j["grid_points"] = opts.verify.grid_points;
  Json tol;
  tol["state"] = opts.verify.tol_state;
  tol["deriv"] = opts.verify.tol_deriv;
  j["tolerances"] = tol;
  j["seed"] = opts.seed;
  j["map"] = r.psi_total.recipe();
  return j;
}

int cmd_normalize(const FieldConfig& cfg, PipelineOptions opts, const RunPaths& paths) {
  auto H = cfg.field();
  PipelineResult r = normal_form_pipeline(H, cfg.start(), opts);
  Json report = r.report.to_json();
  write_text(paths.report, report.dump(2) + "\n");
  write_text(paths.recipe, make_recipe(cfg, r, opts).dump(2) + "\n");
  write_orbit_csv(paths.orbit, r.orbit_original, cfg.dim());
  std::printf("delta used: %g\n", r.delta_used);
  print_report_table(r.report);
  std::printf("wrote %s, %s, %s\n", paths.report.c_str(), paths.recipe.c_str(),
              paths.orbit.c_str());
  return r.report.all_pass() ? 0 : 1;
}

int cmd_verify(const std::string& recipe_path, const std::string& out_report,
               double tol_state, double tol_deriv) {
  std::ifstream in(recipe_path);
  if (!in) throw Error("cannot read recipe '" + recipe_path + "'");
  Json recipe = Json::parse(in);

  const Json& hj = recipe.at("hamiltonian");
  std::map<std::string, double> params;
  for (auto it = hj.at("params").begin(); it != hj.at("params").end(); ++it)
    params[it.key()] = it.value().get<double>();
  auto H0 = parse_hamiltonian(hj.at("expression").get<std::string>(),
                              hj.at("d").get<int>(), params);

  FiberedMap psi = FiberedMap::from_recipe(recipe.at("map"));
  HamPtr H = pullback(H0, psi);

  Vec flat(recipe.at("x0").size());
  for (size_t i = 0; i < recipe.at("x0").size(); ++i)
    flat[static_cast<int>(i)] = recipe.at("x0")[i].get<double>();
  PhaseState x0 = PhaseState::from_flat(flat);
  PhaseState start = psi.inverse_apply(x0);

  VerifyOptions vo;
  vo.grid_points = recipe.at("grid_points").get<int>();
  vo.tol_state =
      tol_state > 0 ? tol_state : recipe.at("tolerances").at("state").get<double>();
  vo.tol_deriv =
      tol_deriv > 0 ? tol_deriv : recipe.at("tolerances").at("deriv").get<double>();
  vo.steps_per_unit = recipe.at("steps_per_unit").get<int>();

  NormalFormReport rep =
      verify_conditions(*H, start, recipe.at("delta").get<double>(), vo);
  rep.delta_used = recipe.at("delta").get<double>();
  if (!out_report.empty()) write_text(out_report, rep.to_json().dump(2) + "\n");
  print_report_table(rep);
  return rep.all_pass() ? 0 : 1;
}

int cmd_obstruction(const FieldConfig& cfg, double delta, int grid,
                    const std::string& recipe_path) {
  HamPtr H = cfg.field();
  if (!recipe_path.empty()) {
    std::ifstream in(recipe_path);
    if (!in) throw Error("cannot read recipe '" + recipe_path + "'");
    Json recipe = Json::parse(in);
    H = pullback(H, FiberedMap::from_recipe(recipe.at("map")));
  }
  std::vector<double> ts;
  for (int k = 0; k < grid; ++k) ts.push_back(delta * k / (grid - 1));
  auto vals = obstruction(*H, ts);
  std::printf("%10s", "t");
  for (int j = 1; j <= cfg.dim(); ++j) std::printf("  d2H/dq%dp0", j);
  std::printf("\n");
  for (size_t i = 0; i < ts.size(); ++i) {
    std::printf("%10.6g", ts[i]);
    for (int j = 0; j < vals[i].size(); ++j) std::printf(" %11.6g", vals[i][j]);
    std::printf("\n");
  }
  std::printf("vanishes: %s\n", obstruction_vanishes(vals) ? "yes" : "no");
  return 0;
}

int cmd_transfer(const FieldConfig& cfg, double delta, const std::string& experiment,
                 std::vector<double> eps_list, const std::string& out_experiment,
                 const std::string& out_matrix) {
  auto H0 = cfg.field();
  PipelineOptions popts;
  popts.delta = delta;
  PipelineResult pr = normal_form_pipeline(H0, cfg.start(), popts);
  std::printf("pipeline: delta used %g, conditions %s\n", pr.delta_used,
              pr.report.all_pass() ? "pass" : "FAIL");

  ReparamCheck rc = reparam_invariance_check(pr.H_final, pr.delta_used);
  print_matrix("L_H", rc.L_H.L);
  std::printf("symplecticity residual: %.3g\n", rc.L_H.symplecticity_residual);
  std::printf("|L_H - L_Htilde| = %.3g (surface coincidence %.3g)\n", rc.difference,
              rc.surface_coincidence);
  if (!out_matrix.empty()) {
    Json j;
    j["L_H"] = rc.L_H.to_json();
    j["L_Htilde"] = rc.L_Ht.to_json();
    j["difference"] = rc.difference;
    write_text(out_matrix, j.dump(2) + "\n");
  }

  if (!experiment.empty()) {
    if (eps_list.empty()) eps_list = {1e-3, 1e-2, 1e-1};
    auto rows = mane_perturbation_experiment(pr.H_final, experiment, eps_list,
                                             pr.delta_used);
    std::ostringstream os;
    os << "eps,identity_residual,effect_size,symplecticity_L1,symplecticity_L2\n";
    for (const auto& row : rows)
      os << csv_number(row.eps) << "," << csv_number(row.identity_residual) << ","
         << csv_number(row.effect_size) << "," << csv_number(row.symplecticity_1)
         << "," << csv_number(row.symplecticity_2) << "\n";
    if (!out_experiment.empty()) write_text(out_experiment, os.str());
    std::printf("%s", os.str().c_str());
  }
  return 0;
}

int cmd_homog(const FieldConfig& cfg, double degree, HomogeneousOptions opts,
              const std::string& out_report) {
  auto H = cfg.field();
  HomogeneousPipelineResult r = homogeneous_pipeline(H, cfg.start(), degree, opts);
  std::printf("degree %g certified: euler %.3g, scaling %.3g, fiber margin %.3g\n",
              degree, r.certificate.euler_residual, r.certificate.scaling_residual,
              r.certificate.positivity_margin);
  std::printf("P0 = %.6g, constancy residual %.3g, delta used %g\n", r.P0,
              r.p0_constancy, r.delta_used);
  print_report_table(r.report);
  if (!out_report.empty()) write_text(out_report, r.report.to_json().dump(2) + "\n");
  return r.report.all_pass() ? 0 : 1;
}


// --config FILE supplies key=value defaults for the long options of the
// chosen subcommand; explicit flags always win.
std::vector<std::string> apply_config_file(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw Error("--config needs a file argument");
      config_path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
  }
  if (config_path.empty()) return args;
  std::ifstream in(config_path);
  if (!in) throw Error("cannot read config file '" + config_path + "'");
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == '[') continue;
    auto pos = line.find('=');
    if (pos == std::string::npos)
      throw Error("bad config line '" + line + "', expected key=value");
    std::string key = trim(line.substr(0, pos));
    std::string value = trim(line.substr(pos + 1));
    bool given = false;
    for (const std::string& a : args)
      if (a == "--" + key) given = true;
    if (!given) {
      args.push_back("--" + key);
      args.push_back(value);
    }
  }
  return args;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "fibered symplectic normal forms of convex Hamiltonians near orbit segments"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list", "print the builtin Hamiltonians");
  bool list_json = false;
  list->add_flag("--json", list_json, "machine-readable output");

  auto* integ = app.add_subcommand("integrate", "integrate an orbit and write CSV");
  FieldConfig integ_cfg;
  add_field_options(integ, integ_cfg);
  double integ_T = 1.0;
  int integ_steps = 512;
  std::string integ_out = "orbit.csv";
  integ->add_option("--T", integ_T, "integration time");
  integ->add_option("--steps", integ_steps, "total RK4 steps");
  integ->add_option("--out", integ_out, "output CSV path");

  auto* norm = app.add_subcommand("normalize", "run the normal-form pipeline");
  FieldConfig norm_cfg;
  add_field_options(norm, norm_cfg);
  PipelineOptions popts;
  RunPaths paths;
  norm->add_option("--delta", popts.delta, "segment half-length");
  norm->add_option("--steps", popts.steps_per_unit, "RK4 steps per unit time");
  norm->add_option("--grid", popts.verify.grid_points, "verification grid points");
  norm->add_option("--tol-state", popts.verify.tol_state, "orbit/momentum tolerance");
  norm->add_option("--tol-deriv", popts.verify.tol_deriv, "derivative tolerance");
  norm->add_option("--seed", popts.seed, "seed for sampled checks");
  norm->add_option("--out-report", paths.report, "report JSON path");
  norm->add_option("--out-recipe", paths.recipe, "recipe JSON path");
  norm->add_option("--out-orbit", paths.orbit, "orbit CSV path");

  auto* ver = app.add_subcommand("verify", "recompute a report from a recipe");
  std::string ver_recipe, ver_out;
  double ver_tol_state = -1, ver_tol_deriv = -1;
  ver->add_option("--recipe", ver_recipe, "recipe JSON path")->required();
  ver->add_option("--out-report", ver_out, "write the recomputed report");
  ver->add_option("--tol-state", ver_tol_state, "override state tolerance");
  ver->add_option("--tol-deriv", ver_tol_deriv, "override derivative tolerance");

  auto* obs = app.add_subcommand("obstruction", "mixed q*/p0 derivatives on the axis");
  FieldConfig obs_cfg;
  add_field_options(obs, obs_cfg);
  double obs_delta = 0.5;
  int obs_grid = 11;
  std::string obs_recipe;
  obs->add_option("--delta", obs_delta, "segment half-length");
  obs->add_option("--grid", obs_grid, "grid points");
  obs->add_option("--recipe", obs_recipe, "apply a persisted map first");

  auto* tr = app.add_subcommand("transfer",
                                "transfer matrices and the potential experiment");
  FieldConfig tr_cfg;
  add_field_options(tr, tr_cfg);
  double tr_delta = 0.5;
  std::string tr_exp, tr_out_exp = "experiment.csv", tr_out_mat;
  std::vector<double> tr_eps;
  tr->add_option("--delta", tr_delta, "section separation");
  tr->add_option("--experiment", tr_exp, "potential expression g(q)");
  tr->add_option("--eps-list", tr_eps, "perturbation sizes")->delimiter(',');
  tr->add_option("--out-experiment", tr_out_exp, "experiment CSV path");
  tr->add_option("--out-matrix", tr_out_mat, "matrix JSON path");

  auto* hg = app.add_subcommand("homog", "homogeneous-case pipeline");
  FieldConfig hg_cfg;
  add_field_options(hg, hg_cfg);
  HomogeneousOptions hopts;
  double hg_degree = 1.0;
  std::string hg_out = "report.json";
  hg->add_option("--degree", hg_degree, "declared homogeneity degree")->required();
  hg->add_option("--delta", hopts.delta, "segment half-length");
  hg->add_option("--grid", hopts.verify.grid_points, "verification grid points");
  hg->add_option("--tol-state", hopts.verify.tol_state, "orbit/momentum tolerance");
  hg->add_option("--tol-deriv", hopts.verify.tol_deriv, "derivative tolerance");
  hg->add_option("--out-report", hg_out, "report JSON path");

  std::vector<std::string> args;
  try {
    args = apply_config_file(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  try {
    std::vector<const char*> ptrs;
    ptrs.push_back("orbitnf");
    for (const auto& a : args) ptrs.push_back(a.c_str());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (list->parsed()) return cmd_list(list_json);
    if (integ->parsed()) return cmd_integrate(integ_cfg, integ_T, integ_steps, integ_out);
    if (norm->parsed()) return cmd_normalize(norm_cfg, popts, paths);
    if (ver->parsed()) return cmd_verify(ver_recipe, ver_out, ver_tol_state, ver_tol_deriv);
    if (obs->parsed()) return cmd_obstruction(obs_cfg, obs_delta, obs_grid, obs_recipe);
    if (tr->parsed())
      return cmd_transfer(tr_cfg, tr_delta, tr_exp, tr_eps, tr_out_exp, tr_out_mat);
    if (hg->parsed()) return cmd_homog(hg_cfg, hg_degree, hopts, hg_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}
