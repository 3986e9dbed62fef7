// Command-line front end: forward solves, inversions, table reproduction and diagnostics.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fracinv/adjoint.hpp"
#include "fracinv/diagnostics.hpp"
#include "fracinv/errors.hpp"
#include "fracinv/harness.hpp"

namespace fs = std::filesystem;
using namespace fracinv;

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericError = 3;

struct Flags {
  std::string config;
  std::string preset;
  std::string seeds;
  std::string out;
  std::string epsilons;
  std::string alphas;
  std::string gamma;
  std::string table;
  std::optional<int> M, N, max_iters;
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    T v{};
    try {
      if constexpr (std::is_same_v<T, double>) v = std::stod(item, &used);
      else v = static_cast<T>(std::stoull(item, &used));
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw std::invalid_argument(std::string("bad ") + what + " value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(std::string("empty ") + what + " list");
  return out;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--preset", f.preset, "example1 | example2 | example3");
  cmd->add_option("--seed", f.seeds, "seed or comma-separated seed list");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--epsilon", f.epsilons, "comma-separated noise levels");
  cmd->add_option("--alpha", f.alphas, "comma-separated fractional orders");
  cmd->add_option("--gamma", f.gamma, "regularization weight, 'table' or 'delta-squared[:C]'");
  cmd->add_option("--M", f.M, "inversion mesh subdivisions (overrides the preset rule)");
  cmd->add_option("--N", f.N, "inversion time steps (overrides the preset rule)");
  cmd->add_option("--max-iters", f.max_iters, "optimizer iteration cap");
}

RunConfig merge(const std::string& mode, const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : RunConfig::from_file(f.config);
  c.mode = mode;
  if (!f.preset.empty()) c.preset = f.preset;
  if (!f.seeds.empty()) c.seeds = parse_list<std::uint64_t>(f.seeds, "seed");
  if (!f.out.empty()) c.out_dir = f.out;
  if (!f.epsilons.empty()) c.epsilons = parse_list<double>(f.epsilons, "epsilon");
  if (!f.alphas.empty()) c.alphas = parse_list<double>(f.alphas, "alpha");
  if (!f.gamma.empty()) c.gamma = GammaSetting::parse(f.gamma);
  if (!f.table.empty()) c.table_path = f.table;
  if (f.M) c.M = *f.M;
  if (f.N) c.N = *f.N;
  if (f.max_iters) c.max_iters = *f.max_iters;
  c.validate();
  return c;
}

std::string tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

int cmd_forward(const RunConfig& c) {
  const Preset p = c.resolved_preset();
  const double alpha = p.alphas.front();
  const GridChoice g = p.grid_rule(p.epsilons.front());
  Mesh<double> mesh = p.dim == 1 ? build_interval_mesh<double>(g.M) : build_square_mesh<double>(g.M);
  FemSpace<double> space(mesh);
  CQScheme<double> scheme(alpha, p.T, g.N);
  ForwardSolver<double> solver(space, scheme, ProblemData<double>{p.u0, p.f});
  const auto q = CoefficientField<double>::sample(space.mesh(), scheme, p.q_true, p.c0, p.c1);
  const auto traj = solver.solve(q);
  std::vector<double> times = p.snapshot_times;
  times.push_back(p.T);
  const fs::path out(c.out_dir);
  write_state_csv(out / "state.csv", space, scheme, traj, times);
  const Vector<double> uT = space.dofs().to_full<double>(traj.levels.col(g.N));
  write_metadata(out / "metadata.json", c, {{"alpha", alpha}, {"M", g.M}, {"N", g.N}, {"l2_norm_final", l2_norm(space, uT)}});
  std::printf("forward %s alpha=%g M=%d N=%d ||U^N||=%.6e\n", p.name.c_str(), alpha, g.M, g.N, l2_norm(space, uT));
  return 0;
}

void report(const ExperimentRow& r) {
  std::printf("alpha=%g eps=%g gamma=%g seed=%llu e_q=%.4e e_u=%.4e delta=%.4e iters=%d\n", r.alpha, r.epsilon,
              r.gamma, static_cast<unsigned long long>(r.seed), r.e_q, r.e_u, r.delta, r.iterations);
  std::fflush(stdout);
}

int cmd_invert(RunConfig c) {
  const Preset p = c.resolved_preset();
  const double alpha = p.alphas.front(), eps = p.epsilons.front();
  const std::uint64_t seed = c.seeds.front();
  const ReferenceSolution ref = make_reference(p, alpha);
  const SingleRun run = run_single(p, ref, alpha, eps, c.gamma.resolve(p, eps), seed);
  report(run.row);
  const fs::path out(c.out_dir);
  write_table_csv(out / "table.csv", {run.row});
  write_snapshot_csv(out / "snapshot.csv", run, p, p.snapshot_times);
  std::vector<std::vector<std::string>> hist;
  for (std::size_t i = 0; i < run.result.objective_history.size(); ++i)
    hist.push_back({std::to_string(i), format_real(run.result.objective_history[i]),
                    format_real(i < run.result.gradient_history.size() ? run.result.gradient_history[i] : 0.0)});
  write_csv(out / "history.csv", {"iteration", "objective", "relative_gradient"}, hist);
  write_metadata(out / "metadata.json", c,
                 {{"termination", to_string(run.result.termination)}, {"evaluations", run.result.evaluations}});
  return 0;
}

int cmd_experiment(const RunConfig& c) {
  const Preset p = c.resolved_preset();
  const fs::path out(c.out_dir);
  const std::uint64_t first_seed = c.seeds.front();
  const auto rows = run_experiment(c, [&](const SingleRun& run) {
    report(run.row);
    if (run.row.seed == first_seed && !p.snapshot_times.empty())
      write_snapshot_csv(out / "snapshots" / ("alpha_" + tag(run.row.alpha) + "_eps_" + tag(run.row.epsilon) + ".csv"),
                         run, p, p.snapshot_times);
  });
  write_table_csv(out / "table.csv", rows);
  write_table_csv(out / "table_median.csv", median_rows(rows));
  const auto rates = compute_rates(rows);
  write_rates_csv(out / "rates.csv", rates);
  for (const auto& r : rates) std::printf("rate alpha=%g %s=%.3f\n", r.alpha, r.quantity.c_str(), r.rate);
  write_metadata(out / "metadata.json", c);
  return 0;
}

int cmd_rates(const RunConfig& c) {
  const fs::path out(c.out_dir);
  const fs::path in = c.table_path.empty() ? out / "table.csv" : fs::path(c.table_path);
  const auto rates = compute_rates(read_table_csv(in));
  write_rates_csv(out / "rates.csv", rates);
  for (const auto& r : rates) std::printf("rate alpha=%g %s=%.3f\n", r.alpha, r.quantity.c_str(), r.rate);
  return 0;
}

int cmd_adjoint_check(const RunConfig& c) {
  const Preset p = c.resolved_preset();
  const double alpha = p.alphas.front();
  const int M = c.M.value_or(10), N = c.N.value_or(10);
  const double gamma = c.gamma.kind == GammaSetting::Kind::Fixed ? c.gamma.value : 1e-8;
  Mesh<double> mesh = p.dim == 1 ? build_interval_mesh<double>(M) : build_square_mesh<double>(M);
  FemSpace<double> space(mesh);
  CQScheme<double> scheme(alpha, p.T, N);
  ForwardSolver<double> solver(space, scheme, ProblemData<double>{p.u0, p.f});
  const auto qt = CoefficientField<double>::sample(space.mesh(), scheme, p.q_true, p.c0, p.c1);
  const auto z = solver.solve(qt).levels.rightCols(N);
  DiscreteObjective<double> J(solver, z, gamma);
  auto q = CoefficientField<double>::constant(space.n_full(), N, 0.5 * (p.c0 + p.c1), p.c0, p.c1);
  Matrix<double> dir(q.levels.rows(), q.levels.cols());
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < space.n_full(); ++k) {
      const Point<double> x = mesh.node(k);
      q.levels(k, n) += 0.3 * std::sin(3.0 * x.x() + 1.0 + 0.1 * n);
      dir(k, n) = std::cos(2.0 * x.x() + 0.3 * n);
    }
  const auto rows = gradient_check(J, q, dir, {1e-4, 1e-5, 1e-6});
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::printf("step=%g relative_error=%.3e directional_error=%.3e\n", r.step, r.relative_error, r.directional_error);
    cells.push_back({format_real(r.step), format_real(r.relative_error), format_real(r.directional_error)});
  }
  const fs::path out(c.out_dir);
  write_csv(out / "adjoint_check.csv", {"step", "relative_error", "directional_error"}, cells);
  write_metadata(out / "metadata.json", c, {{"M", M}, {"N", N}, {"gamma", gamma}});
  return 0;
}

int cmd_positivity(const RunConfig& c) {
  const double alpha = c.alphas.empty() ? 0.5 : c.alphas.front();
  const ForwardProblem prob = positivity_dataset(alpha, c.T.value_or(1.0));
  const int M = c.M.value_or(50), N = c.N.value_or(100);
  FemSpace<double> space(build_interval_mesh<double>(M));
  CQScheme<double> scheme(alpha, prob.T, N);
  ForwardSolver<double> solver(space, scheme, ProblemData<double>{prob.u0, prob.f});
  const auto q = CoefficientField<double>::sample(space.mesh(), scheme, prob.q, 0.5, 5.0);
  const auto traj = solver.solve(q);
  const auto rep = positivity_report(space, scheme, q, traj, prob.f);
  std::vector<std::vector<std::string>> cells;
  for (std::size_t i = 0; i < rep.betas.size(); ++i) {
    std::printf("beta=%g min_ratio=%.6e\n", rep.betas[i], rep.min_interior_ratio[i]);
    cells.push_back({format_real(rep.betas[i]), format_real(rep.min_interior_ratio[i])});
  }
  std::printf("u>=0: %s  caputo<=0: %s  fitted_beta=%.3f (residual %.2e)\n", rep.state_nonnegative ? "yes" : "no",
              rep.caputo_nonpositive ? "yes" : "no", rep.fitted_beta, rep.fit_residual);
  const fs::path out(c.out_dir);
  write_csv(out / "positivity.csv", {"beta", "min_ratio"}, cells);
  write_metadata(out / "metadata.json", c,
                 {{"alpha", alpha}, {"M", M}, {"N", N}, {"state_nonnegative", rep.state_nonnegative},
                  {"caputo_nonpositive", rep.caputo_nonpositive}, {"min_state", rep.min_state},
                  {"max_caputo", rep.max_caputo}, {"fitted_beta", rep.fitted_beta}, {"fit_residual", rep.fit_residual}});
  return 0;
}

int cmd_convergence(const RunConfig& c) {
  const double alpha = c.alphas.empty() ? 0.5 : c.alphas.front();
  const ForwardProblem prob = smooth_forward_problem(alpha, c.T.value_or(1.0));
  const fs::path out(c.out_dir);
  auto emit = [&](const char* file, const std::vector<ConvergenceRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
      std::printf("%s M=%d N=%d error=%.4e order=%.3f\n", file, r.M, r.N, r.error, r.order);
      cells.push_back({std::to_string(r.M), std::to_string(r.N), format_real(r.h), format_real(r.tau),
                       format_real(r.error), format_real(r.order)});
    }
    write_csv(out / file, {"M", "N", "h", "tau", "error", "order"}, cells);
  };
  emit("convergence_time.csv", convergence_study_forward(prob, {{32, 20}, {32, 40}, {32, 80}}, Refinement::Time, 1, 4));
  emit("convergence_space.csv",
       convergence_study_forward(prob, {{8, 200}, {16, 200}, {32, 200}}, Refinement::Space, 4, 1));
  write_metadata(out / "metadata.json", c, {{"alpha", alpha}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Space-time coefficient recovery for subdiffusion"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> modes = {
      {"forward", "solve the forward problem at the true coefficient and dump the state"},
      {"invert", "one reconstruction per (alpha, epsilon, seed)"},
      {"experiment", "full table: every alpha, epsilon and seed, with medians and fitted rates"},
      {"rates", "fit rates from an existing table CSV"},
      {"adjoint-check", "adjoint gradient against central finite differences"},
      {"positivity", "positivity condition diagnostic on the model dataset"},
      {"convergence", "forward self-convergence orders in time and space"}};
  std::vector<CLI::App*> cmds;
  for (const auto& [m, help] : modes) {
    CLI::App* cmd = app.add_subcommand(m, help);
    add_common(cmd, flags);
    if (m == "rates") cmd->add_option("--table", flags.table, "table CSV to fit (default <out>/table.csv)");
    cmds.push_back(cmd);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }
  try {
    std::string mode;
    for (std::size_t i = 0; i < modes.size(); ++i)
      if (cmds[i]->parsed()) mode = modes[i].first;
    const RunConfig cfg = merge(mode, flags);
    if (mode == "forward") return cmd_forward(cfg);
    if (mode == "invert") return cmd_invert(cfg);
    if (mode == "experiment") return cmd_experiment(cfg);
    if (mode == "rates") return cmd_rates(cfg);
    if (mode == "adjoint-check") return cmd_adjoint_check(cfg);
    if (mode == "positivity") return cmd_positivity(cfg);
    return cmd_convergence(cfg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericError;
  }
}
