#include "fracinv/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fracinv/errors.hpp"

#ifndef FRACINV_VERSION
#define FRACINV_VERSION "0.1.0"
#endif

namespace fracinv {

using nlohmann::json;

namespace {

const char* name_of(SpatialTransfer t) {
  switch (t) {
    case SpatialTransfer::Nested: return "nested";
    case SpatialTransfer::Interpolate: return "interpolate";
    case SpatialTransfer::Project: return "project";
  }
  return "?";
}

const char* name_of(TimeTransfer t) { return t == TimeTransfer::Average ? "average" : "sample"; }

SpatialTransfer parse_spatial(const std::string& s) {
  if (s == "nested") return SpatialTransfer::Nested;
  if (s == "interpolate") return SpatialTransfer::Interpolate;
  if (s == "project") return SpatialTransfer::Project;
  throw std::invalid_argument("unknown spatial_transfer '" + s + "'");
}

TimeTransfer parse_temporal(const std::string& s) {
  if (s == "average") return TimeTransfer::Average;
  if (s == "sample") return TimeTransfer::Sample;
  throw std::invalid_argument("unknown time_transfer '" + s + "'");
}

template <typename T>
std::vector<T> scalar_or_list(const json& v, const char* key) {
  try {
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("config key '") + key + "' has the wrong type");
  }
}

template <typename T>
T scalar(const json& v, const char* key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("config key '") + key + "' has the wrong type");
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int closest_level(const CQScheme<double>& scheme, double t) {
  const int n = static_cast<int>(std::lround(t / scheme.tau));
  return std::clamp(n, 1, scheme.N);
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return os;
}

void check_written(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cell += '"', ++i;
      else if (c == '"') quoted = false;
      else cell += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

// Whole-cell numeric parse; subnormals and the full uint64 range round-trip exactly.
template <typename T>
bool parse_cell(const std::string& s, T& v) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && ptr == end;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

GammaSetting GammaSetting::parse(const std::string& text) {
  GammaSetting g;
  if (text == "table") return g;
  const std::string rule = "delta-squared";
  if (text.rfind(rule, 0) == 0) {
    g.kind = Kind::DeltaSquared;
    if (text.size() > rule.size()) {
      if (text[rule.size()] != ':') throw std::invalid_argument("bad gamma rule '" + text + "'");
      g.value = GammaSetting::parse(text.substr(rule.size() + 1)).value;
      if (!(g.value > 0)) throw std::invalid_argument("gamma rule constant must be positive");
    }
    return g;
  }
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad gamma '" + text + "' (expected a number, 'table' or 'delta-squared[:C]')");
  }
  if (used != text.size() || !(v >= 0) || !std::isfinite(v)) throw std::invalid_argument("bad gamma '" + text + "'");
  g.kind = Kind::Fixed;
  g.value = v;
  return g;
}

std::string GammaSetting::describe() const {
  switch (kind) {
    case Kind::Table: return "table";
    case Kind::Fixed: return format_real(value);
    case Kind::DeltaSquared: return value > 0 ? "delta-squared:" + format_real(value) : "delta-squared";
  }
  return "?";
}

double GammaSetting::resolve(const Preset& p, double epsilon) const {
  switch (kind) {
    case Kind::Table: return p.gamma_for(epsilon);
    case Kind::Fixed: return value;
    case Kind::DeltaSquared: return (value > 0 ? value : p.gamma_ratio) * epsilon * epsilon;
  }
  return 0;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "mode") c.mode = scalar<std::string>(v, "mode");
    else if (key == "preset") c.preset = scalar<std::string>(v, "preset");
    else if (key == "alpha") c.alphas = scalar_or_list<double>(v, "alpha");
    else if (key == "epsilon") c.epsilons = scalar_or_list<double>(v, "epsilon");
    else if (key == "gamma") c.gamma = v.is_string() ? GammaSetting::parse(v.get<std::string>())
                                                     : GammaSetting{GammaSetting::Kind::Fixed, scalar<double>(v, "gamma")};
    else if (key == "seeds") c.seeds = scalar_or_list<std::uint64_t>(v, "seeds");
    else if (key == "M") c.M = scalar<int>(v, "M");
    else if (key == "N") c.N = scalar<int>(v, "N");
    else if (key == "fine_M") c.fine_M = scalar<int>(v, "fine_M");
    else if (key == "fine_N") c.fine_N = scalar<int>(v, "fine_N");
    else if (key == "T") c.T = scalar<double>(v, "T");
    else if (key == "max_iters") c.max_iters = scalar<int>(v, "max_iters");
    else if (key == "metric") {
      if (!v.is_object()) throw std::invalid_argument("config key 'metric' must be an object");
      for (const auto& [mk, mv] : v.items()) {
        if (mk == "time_length") c.metric.time_length = scalar<double>(mv, "metric.time_length");
        else if (mk == "space_length") c.metric.space_length = scalar<double>(mv, "metric.space_length");
        else throw std::invalid_argument("unknown config key 'metric." + mk + "'");
      }
      c.metric_set = true;
    } else if (key == "spatial_transfer") {
      c.spatial = parse_spatial(scalar<std::string>(v, "spatial_transfer"));
      c.transfer_set = true;
    } else if (key == "time_transfer") {
      c.temporal = parse_temporal(scalar<std::string>(v, "time_transfer"));
      c.transfer_set = true;
    } else if (key == "snapshot_times") c.snapshot_times = scalar_or_list<double>(v, "snapshot_times");
    else if (key == "out") c.out_dir = scalar<std::string>(v, "out");
    else if (key == "table") c.table_path = scalar<std::string>(v, "table");
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot read config file '" + path + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  const Preset p = resolved_preset();
  json j;
  j["mode"] = mode;
  j["preset"] = preset;
  j["alpha"] = p.alphas;
  j["epsilon"] = p.epsilons;
  j["gamma"] = gamma.describe();
  j["seeds"] = seeds;
  if (M) j["M"] = *M;
  if (N) j["N"] = *N;
  j["fine_M"] = p.fine_M;
  j["fine_N"] = p.fine_N;
  j["T"] = p.T;
  j["max_iters"] = p.max_iters;
  j["metric"] = {{"time_length", p.metric.time_length}, {"space_length", p.metric.space_length}};
  j["spatial_transfer"] = name_of(p.spatial);
  j["time_transfer"] = name_of(p.temporal);
  j["snapshot_times"] = p.snapshot_times;
  j["out"] = out_dir;
  if (!table_path.empty()) j["table"] = table_path;
  return j;
}

Preset RunConfig::resolved_preset() const {
  Preset p = preset_by_name(preset);
  if (!alphas.empty()) p.alphas = alphas;
  if (!epsilons.empty()) {
    // keep the gamma table paired with its noise levels
    std::vector<double> gammas;
    for (double e : epsilons) gammas.push_back(p.gamma_for(e));
    p.epsilons = epsilons;
    p.gammas = std::move(gammas);
  }
  if (T) {
    require(*T > 0, "T must be positive");
    p.T = *T;
  }
  if (fine_M) p.fine_M = *fine_M;
  if (fine_N) p.fine_N = *fine_N;
  if (M || N) {
    auto base = p.grid_rule;
    const auto m = M;
    const auto n = N;
    p.grid_rule = [base, m, n](double eps) {
      GridChoice g = base(eps);
      if (m) g.M = *m;
      if (n) g.N = *n;
      return g;
    };
  }
  p.max_iters = max_iters;
  if (metric_set) p.metric = metric;
  if (transfer_set) {
    p.spatial = spatial;
    p.temporal = temporal;
  }
  if (!snapshot_times.empty()) p.snapshot_times = snapshot_times;
  return p;
}

void RunConfig::validate() const {
  static const std::vector<std::string> modes = {"forward",       "invert",     "experiment", "rates",
                                                 "adjoint-check", "positivity", "convergence"};
  require(std::find(modes.begin(), modes.end(), mode) != modes.end(), "unknown mode '" + mode + "'");
  const Preset p = resolved_preset();
  for (double a : p.alphas) require(a > 0 && a < 1, "alpha must lie in (0,1)");
  for (double e : p.epsilons) require(e >= 0 && std::isfinite(e), "epsilon must be nonnegative");
  require(!p.alphas.empty() && !p.epsilons.empty(), "alpha and epsilon lists must be nonempty");
  require(!seeds.empty(), "seed list must be nonempty");
  require(max_iters >= 1, "max_iters must be at least 1");
  require(p.fine_M >= 2 && p.fine_N >= 1, "fine grid must have M >= 2 and N >= 1");
  require(metric.time_length >= 0 && metric.space_length >= 0, "metric lengths must be nonnegative");
  if (gamma.kind == GammaSetting::Kind::Fixed) require(gamma.value >= 0, "gamma must be nonnegative");
  for (double e : p.epsilons) {
    const GridChoice g = p.grid_rule(e);
    require(g.M >= 2 && g.N >= 1, "inversion grid must have M >= 2 and N >= 1");
    require(p.fine_N % g.N == 0, "fine time grid must be a multiple of the inversion grid");
    if (p.spatial != SpatialTransfer::Interpolate)
      require(p.fine_M % g.M == 0, "fine mesh must nest the inversion mesh (or use spatial_transfer=interpolate)");
  }
}

ReferenceSolution make_reference(const Preset& p, double alpha) {
  Mesh<double> mesh = p.dim == 1 ? build_interval_mesh<double>(p.fine_M) : build_square_mesh<double>(p.fine_M);
  FemSpace<double> space(mesh);
  CQScheme<double> scheme(alpha, p.T, p.fine_N);
  ForwardSolver<double> solver(space, scheme, ProblemData<double>{p.u0, p.f});
  const auto q = CoefficientField<double>::sample(space.mesh(), scheme, p.q_true, p.c0, p.c1);
  auto traj = solver.solve(q);
  return ReferenceSolution{std::move(space), std::move(scheme), std::move(traj)};
}

SingleRun run_single(const Preset& p, const ReferenceSolution& ref, double alpha, double epsilon, double gamma,
                     std::uint64_t seed) {
  const GridChoice g = p.grid_rule(epsilon);
  Mesh<double> mesh = p.dim == 1 ? build_interval_mesh<double>(g.M) : build_square_mesh<double>(g.M);
  FemSpace<double> space(mesh);
  CQScheme<double> scheme(alpha, p.T, g.N);
  ForwardSolver<double> solver(space, scheme, ProblemData<double>{p.u0, p.f});
  ObservationSet obs = synthesize_observations(ref.space, ref.trajectory, space, scheme, epsilon, seed, p.spatial,
                                               p.temporal);
  DiscreteObjective<double> objective(solver, obs.z, gamma);
  OptimizerConfig oc;
  oc.max_iters = p.max_iters;
  oc.metric = p.metric;
  auto result = invert(objective, p.c0, p.c1, oc);

  ExperimentRow row;
  row.alpha = alpha;
  row.epsilon = epsilon;
  row.gamma = gamma;
  row.seed = seed;
  row.e_q = error_eq(space, scheme, result.q_star, p.q_true);
  row.e_u = error_eu(space, result.trajectory, obs.reference);
  row.delta = obs.delta_estimate;
  row.iterations = result.iterations_used;
  return SingleRun{row, std::move(space), std::move(scheme), std::move(result), std::move(obs)};
}

std::vector<ExperimentRow> run_experiment(const RunConfig& cfg, const std::function<void(const SingleRun&)>& on_run) {
  cfg.validate();
  const Preset p = cfg.resolved_preset();
  std::vector<ExperimentRow> rows;
  for (double alpha : p.alphas) {
    const ReferenceSolution ref = make_reference(p, alpha);
    for (double eps : p.epsilons) {
      const double gamma = cfg.gamma.resolve(p, eps);
      for (std::uint64_t seed : cfg.seeds) {
        SingleRun run = run_single(p, ref, alpha, eps, gamma, seed);
        if (on_run) on_run(run);
        rows.push_back(run.row);
      }
    }
  }
  return rows;
}

std::vector<ExperimentRow> median_rows(const std::vector<ExperimentRow>& rows) {
  std::vector<std::pair<double, double>> keys;
  std::map<std::pair<double, double>, std::vector<ExperimentRow>> groups;
  for (const auto& r : rows) {
    const auto k = std::make_pair(r.alpha, r.epsilon);
    if (!groups.count(k)) keys.push_back(k);
    groups[k].push_back(r);
  }
  std::vector<ExperimentRow> out;
  for (const auto& k : keys) {
    const auto& g = groups[k];
    std::vector<double> eq, eu, delta, it;
    for (const auto& r : g) {
      eq.push_back(r.e_q);
      eu.push_back(r.e_u);
      delta.push_back(r.delta);
      it.push_back(r.iterations);
    }
    ExperimentRow m;
    m.alpha = k.first;
    m.epsilon = k.second;
    m.gamma = g.front().gamma;
    m.seed = 0;
    m.e_q = median(eq);
    m.e_u = median(eu);
    m.delta = median(delta);
    m.iterations = static_cast<int>(std::lround(median(it)));
    out.push_back(m);
  }
  return out;
}

std::vector<RateRow> compute_rates(const std::vector<ExperimentRow>& rows) {
  const auto med = median_rows(rows);
  std::vector<double> alphas;
  for (const auto& r : med)
    if (std::find(alphas.begin(), alphas.end(), r.alpha) == alphas.end()) alphas.push_back(r.alpha);
  std::vector<RateRow> out;
  for (double a : alphas) {
    std::vector<std::pair<double, double>> pq, pu;
    for (const auto& r : med) {
      if (r.alpha != a || !(r.epsilon > 0)) continue;
      if (r.e_q > 0) pq.emplace_back(r.epsilon, r.e_q);
      if (r.e_u > 0) pu.emplace_back(r.epsilon, r.e_u);
    }
    for (const auto& [name, pts] : {std::pair{"e_q", pq}, std::pair{"e_u", pu}}) {
      if (pts.size() < 3) continue;
      const RateFit fit = fit_rate(pts);
      out.push_back(RateRow{a, name, fit.rate, fit.intercept, fit.residual, static_cast<int>(pts.size())});
    }
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os = open_out(path);
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << quote(cells[i]);
    os << "\r\n";
  };
  line(header);
  for (const auto& r : rows) {
    require(r.size() == header.size(), "write_csv: row width does not match the header");
    line(r);
  }
  check_written(os, path);
}

void write_table_csv(const std::filesystem::path& path, const std::vector<ExperimentRow>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows)
    cells.push_back({format_real(r.alpha), format_real(r.epsilon), format_real(r.gamma), std::to_string(r.seed),
                     format_real(r.e_q), format_real(r.e_u), format_real(r.delta), std::to_string(r.iterations)});
  write_csv(path, {"alpha", "epsilon", "gamma", "seed", "e_q", "e_u", "delta", "iterations"}, cells);
}

std::vector<ExperimentRow> read_table_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot read table '" + path.string() + "'");
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("table '" + path.string() + "' is empty");
  const auto header = split_csv_line(line);
  const std::vector<std::string> expect = {"alpha", "epsilon", "gamma", "seed", "e_q", "e_u", "delta", "iterations"};
  if (header != expect) throw std::invalid_argument("table '" + path.string() + "' has an unexpected header");
  std::vector<ExperimentRow> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto c = split_csv_line(line);
    if (c.size() != expect.size()) throw std::invalid_argument("malformed table row: " + line);
    ExperimentRow r;
    const bool ok = parse_cell(c[0], r.alpha) && parse_cell(c[1], r.epsilon) && parse_cell(c[2], r.gamma) &&
                    parse_cell(c[3], r.seed) && parse_cell(c[4], r.e_q) && parse_cell(c[5], r.e_u) &&
                    parse_cell(c[6], r.delta) && parse_cell(c[7], r.iterations);
    if (!ok) throw std::invalid_argument("malformed table row: " + line);
    rows.push_back(r);
  }
  return rows;
}

void write_rates_csv(const std::filesystem::path& path, const std::vector<RateRow>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows)
    cells.push_back({format_real(r.alpha), r.quantity, format_real(r.rate), format_real(r.intercept),
                     format_real(r.residual), std::to_string(r.levels)});
  write_csv(path, {"alpha", "quantity", "rate", "intercept", "residual", "levels"}, cells);
}

void write_snapshot_csv(const std::filesystem::path& path, const SingleRun& run, const Preset& p,
                        const std::vector<double>& times) {
  const auto& mesh = run.space.mesh();
  std::vector<std::string> header = {"t", "node", "x"};
  if (mesh.dim == 2) header.push_back("y");
  for (const char* h : {"q_star", "q_true", "error"}) header.push_back(h);
  std::vector<std::vector<std::string>> cells;
  for (double t : times) {
    const int n = closest_level(run.scheme, t);
    const double tn = run.scheme.time(n);
    for (int k = 0; k < mesh.num_nodes(); ++k) {
      const Point<double> x = mesh.node(k);
      const double qs = run.result.q_star.levels(k, n - 1);
      const double qt = p.q_true(x, tn);
      std::vector<std::string> r = {format_real(tn), std::to_string(k), format_real(x.x())};
      if (mesh.dim == 2) r.push_back(format_real(x.y()));
      for (double v : {qs, qt, qs - qt}) r.push_back(format_real(v));
      cells.push_back(std::move(r));
    }
  }
  write_csv(path, header, cells);
}

void write_state_csv(const std::filesystem::path& path, const FemSpace<double>& space, const CQScheme<double>& scheme,
                     const Trajectory<double>& traj, const std::vector<double>& times) {
  const auto& mesh = space.mesh();
  std::vector<std::string> header = {"t", "node", "x"};
  if (mesh.dim == 2) header.push_back("y");
  header.push_back("u");
  std::vector<std::vector<std::string>> cells;
  for (double t : times) {
    const int n = closest_level(scheme, t);
    const Vector<double> u = space.dofs().to_full<double>(traj.levels.col(n));
    for (int k = 0; k < mesh.num_nodes(); ++k) {
      const Point<double> x = mesh.node(k);
      std::vector<std::string> r = {format_real(scheme.time(n)), std::to_string(k), format_real(x.x())};
      if (mesh.dim == 2) r.push_back(format_real(x.y()));
      r.push_back(format_real(u(k)));
      cells.push_back(std::move(r));
    }
  }
  write_csv(path, header, cells);
}

std::string version_string() { return FRACINV_VERSION; }

void write_metadata(const std::filesystem::path& path, const RunConfig& cfg, const json& extra) {
  const Preset p = cfg.resolved_preset();
  json j;
  j["version"] = version_string();
  j["rng"] = GaussianStream::kName;
  j["config"] = cfg.to_json();
  std::vector<json> grids;
  for (double e : p.epsilons) {
    const GridChoice g = p.grid_rule(e);
    grids.push_back({{"epsilon", e}, {"M", g.M}, {"N", g.N}, {"gamma", cfg.gamma.resolve(p, e)}});
  }
  j["grids"] = grids;
  j["bounds"] = {p.c0, p.c1};
  j["dim"] = p.dim;
  if (!extra.is_null()) j["run"] = extra;
  std::ofstream os = open_out(path);
  os << j.dump(2) << "\n";
  check_written(os, path);
}

}  // namespace fracinv
