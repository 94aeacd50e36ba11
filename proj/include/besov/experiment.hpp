#pragma once

// Experiment runs: one flat JSON config per run, pipelines that compose the
// modules, and a manifest of every emitted file with its SHA-256.

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "besov/besov_analysis.hpp"
#include "besov/core.hpp"
#include "besov/geometry.hpp"
#include "besov/nterm.hpp"
#include "besov/picard.hpp"
#include "besov/stokes.hpp"
#include "besov/wavelet.hpp"

namespace besov {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"analyze-field", "solve-stokes", "solve-nse",  "nterm-compare",
                                          "embed-check",   "bounds-table", "dt-diagram"};
  return k;
}

struct ExperimentConfig {
  std::string experiment;
  std::string domain;                 // domain file, relative to the config file
  std::string force = "zero";         // zero | rotation | vortex | unit_x
  std::string boundary = "zero";      // zero | poiseuille
  std::string field = "velocity";     // velocity | corner | smooth
  int component = 0;
  std::optional<Point> center;        // singular point of the corner field
  double exponent = 0.4;              // corner field |x - center|^exponent
  int r = 3;
  int j_max = 6;
  double tol = 1e-8;
  double nu = 0;
  int max_iter = 50;
  int probes = 20;
  std::string extension = "even";
  double pad = 1.0;
  std::optional<int> sobolev_lo, sobolev_hi;
  std::vector<int> dims{3, 4, 5};
  int embed_dim = 3;
  std::string alpha0 = "3/2", alpha = "1";
  std::int64_t gamma = 2;
  std::string eps = "3/10", p = "4";
  std::string report;                 // dt-diagram: existing regularity.json
  std::string out = "out";
  std::uint64_t seed = 0;
  fs::path base_dir = ".";

  fs::path resolve(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q : base_dir / q;
  }
};

//-----------------------------------------------------------------------------
// Parsing and validation. Errors name the first failing key.
//-----------------------------------------------------------------------------

namespace detail {
template <typename T>
T config_value(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(concat("config key '", key, "': wrong type (", j.dump(), ")"));
  }
}

inline std::string rational_text(const nlohmann::json& j, const std::string& key) {
  std::string s = j.is_string() ? j.get<std::string>() : j.is_number() ? j.dump() : "";
  try {
    (void)Rational::parse(s);
  } catch (...) {
    throw ConfigError(concat("config key '", key, "': expected a rational such as 3/2, got ", j.dump()));
  }
  return s;
}
}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j, const fs::path& base_dir = ".") {
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  ExperimentConfig c;
  c.base_dir = base_dir;
  for (const auto& [key, v] : j.items()) {
    using detail::config_value;
    if (key == "experiment") c.experiment = config_value<std::string>(v, key);
    else if (key == "domain") c.domain = config_value<std::string>(v, key);
    else if (key == "force") c.force = config_value<std::string>(v, key);
    else if (key == "boundary") c.boundary = config_value<std::string>(v, key);
    else if (key == "field") c.field = config_value<std::string>(v, key);
    else if (key == "component") c.component = config_value<int>(v, key);
    else if (key == "center") {
      const auto xs = config_value<std::vector<double>>(v, key);
      if (xs.empty() || xs.size() > 3) throw ConfigError("config key 'center': expected 1 to 3 coordinates");
      Point p{0, 0, 0};
      std::copy(xs.begin(), xs.end(), p.begin());
      c.center = p;
    } else if (key == "exponent") c.exponent = config_value<double>(v, key);
    else if (key == "r") c.r = config_value<int>(v, key);
    else if (key == "j_max") c.j_max = config_value<int>(v, key);
    else if (key == "tol") c.tol = config_value<double>(v, key);
    else if (key == "nu") c.nu = config_value<double>(v, key);
    else if (key == "max_iter") c.max_iter = config_value<int>(v, key);
    else if (key == "probes") c.probes = config_value<int>(v, key);
    else if (key == "extension") c.extension = config_value<std::string>(v, key);
    else if (key == "pad") c.pad = config_value<double>(v, key);
    else if (key == "sobolev_lo") c.sobolev_lo = config_value<int>(v, key);
    else if (key == "sobolev_hi") c.sobolev_hi = config_value<int>(v, key);
    else if (key == "dims") c.dims = config_value<std::vector<int>>(v, key);
    else if (key == "embed_dim") c.embed_dim = config_value<int>(v, key);
    else if (key == "alpha0") c.alpha0 = detail::rational_text(v, key);
    else if (key == "alpha") c.alpha = detail::rational_text(v, key);
    else if (key == "gamma") c.gamma = config_value<std::int64_t>(v, key);
    else if (key == "eps") c.eps = detail::rational_text(v, key);
    else if (key == "p") c.p = detail::rational_text(v, key);
    else if (key == "report") c.report = config_value<std::string>(v, key);
    else if (key == "out") c.out = config_value<std::string>(v, key);
    else if (key == "seed") c.seed = config_value<std::uint64_t>(v, key);
    else throw ConfigError(concat("config key '", key, "': unknown key"));
  }
  return c;
}

inline ExperimentConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(concat("config key 'config': cannot open ", path));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(concat("config file ", path, ": ", e.what()));
  }
  return parse_config(j, fs::path(path).parent_path());
}

inline bool needs_domain(const std::string& kind) {
  return kind == "analyze-field" || kind == "solve-stokes" || kind == "solve-nse" || kind == "nterm-compare" ||
         kind == "dt-diagram";
}

inline void validate(const ExperimentConfig& c) {
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.experiment) == kinds.end())
    throw ConfigError(concat("config key 'experiment': unknown kind '", c.experiment, "'"));
  const bool from_report = c.experiment == "dt-diagram" && !c.report.empty();
  if (needs_domain(c.experiment) && !from_report) {
    if (c.domain.empty()) throw ConfigError("config key 'domain': required for " + c.experiment);
    if (!fs::exists(c.resolve(c.domain))) throw ConfigError(concat("config key 'domain': no such file ", c.domain));
  }
  if (from_report && !fs::exists(c.resolve(c.report)))
    throw ConfigError(concat("config key 'report': no such file ", c.report));
  const auto orders = available_orders();
  if (std::find(orders.begin(), orders.end(), c.r) == orders.end())
    throw ConfigError(concat("config key 'r': unsupported order ", c.r, ", available 1..6"));
  if (c.j_max < 1 || c.j_max > 12) throw ConfigError(concat("config key 'j_max': must lie in 1..12, got ", c.j_max));
  if (!(c.tol > 0)) throw ConfigError("config key 'tol': must be positive");
  if (!(c.nu >= 0)) throw ConfigError("config key 'nu': must be nonnegative");
  if (c.max_iter < 1) throw ConfigError("config key 'max_iter': must be positive");
  if (c.probes < 1) throw ConfigError("config key 'probes': must be positive");
  if (!(c.pad >= 0)) throw ConfigError("config key 'pad': must be nonnegative");
  if (!(c.exponent > 0)) throw ConfigError("config key 'exponent': must be positive");
  const std::vector<std::string> forces{"zero", "rotation", "vortex", "unit_x"};
  if (std::find(forces.begin(), forces.end(), c.force) == forces.end())
    throw ConfigError(concat("config key 'force': unknown preset '", c.force, "'"));
  if (c.boundary != "zero" && c.boundary != "poiseuille")
    throw ConfigError(concat("config key 'boundary': unknown preset '", c.boundary, "'"));
  if (c.field != "velocity" && c.field != "corner" && c.field != "smooth")
    throw ConfigError(concat("config key 'field': unknown field '", c.field, "'"));
  try {
    (void)parse_extension_rule(c.extension);
  } catch (const ConfigError&) {
    throw ConfigError(concat("config key 'extension': unknown rule '", c.extension, "'"));
  }
  if (c.experiment == "bounds-table" && c.dims.empty()) throw ConfigError("config key 'dims': empty");
}

/// Config echo for the manifest; `out` and `base_dir` are left out so that
/// runs into different directories agree.
inline ojson to_json(const ExperimentConfig& c) {
  ojson j;
  j["experiment"] = c.experiment;
  j["domain"] = c.domain;
  j["force"] = c.force;
  j["boundary"] = c.boundary;
  j["field"] = c.field;
  j["component"] = c.component;
  j["center"] = c.center ? ojson(std::vector<double>(c.center->begin(), c.center->end())) : ojson(nullptr);
  j["exponent"] = c.exponent;
  j["r"] = c.r;
  j["j_max"] = c.j_max;
  j["tol"] = c.tol;
  j["nu"] = c.nu;
  j["max_iter"] = c.max_iter;
  j["probes"] = c.probes;
  j["extension"] = c.extension;
  j["pad"] = c.pad;
  j["sobolev_lo"] = c.sobolev_lo ? ojson(*c.sobolev_lo) : ojson(nullptr);
  j["sobolev_hi"] = c.sobolev_hi ? ojson(*c.sobolev_hi) : ojson(nullptr);
  j["dims"] = c.dims;
  j["embed_dim"] = c.embed_dim;
  j["alpha0"] = c.alpha0;
  j["alpha"] = c.alpha;
  j["gamma"] = c.gamma;
  j["eps"] = c.eps;
  j["p"] = c.p;
  j["report"] = c.report;
  j["seed"] = c.seed;
  return j;
}

//-----------------------------------------------------------------------------
// Data presets
//-----------------------------------------------------------------------------

inline ScalarField vortex_stream(const Box& bb) {
  return [bb](const Point& x) {
    const double a = std::sin(M_PI * (x[0] - bb.lo[0]) / bb.side(0));
    const double b = std::sin(M_PI * (x[1] - bb.lo[1]) / bb.side(1));
    return a * a * b * b;
  };
}

/// u = curl of sin^2 sin^2 over the bounding box, pi = cos cos. 2D only.
inline std::pair<VectorField, ScalarField> vortex_solution(const Box& bb) {
  const double kx = M_PI / bb.side(0), ky = M_PI / bb.side(1);
  VectorField u = [bb, kx, ky](const Point& x) {
    const double X = kx * (x[0] - bb.lo[0]), Y = ky * (x[1] - bb.lo[1]);
    const double sx = std::sin(X), sy = std::sin(Y), cx = std::cos(X), cy = std::cos(Y);
    return Point{2 * ky * sx * sx * sy * cy, -2 * kx * sy * sy * sx * cx, 0};
  };
  ScalarField p = [bb, kx, ky](const Point& x) {
    return std::cos(kx * (x[0] - bb.lo[0])) * std::cos(ky * (x[1] - bb.lo[1]));
  };
  return {u, p};
}

inline VectorField force_preset(const std::string& name, const Domain& dom) {
  if (name == "zero") return zero_field();
  if (name == "unit_x") return [](const Point&) { return Point{1, 0, 0}; };
  if (name == "rotation") return [](const Point& x) { return Point{x[1], -x[0], 0}; };
  if (name == "vortex") {
    if (dom.dim() != 2) throw ConfigError("config key 'force': the vortex preset is two-dimensional");
    const Box bb = dom.bounding_box();
    const auto [u, p] = vortex_solution(bb);
    return manufactured_forcing(2, u, p, bb);
  }
  throw ConfigError(concat("config key 'force': unknown preset '", name, "'"));
}

/// Poiseuille profile across axis 1 of the bounding box, flow along axis 0.
inline VectorField boundary_preset(const std::string& name, const Domain& dom) {
  if (name == "zero") return zero_field();
  if (name == "poiseuille") {
    const Box bb = dom.bounding_box();
    return [bb](const Point& x) {
      const double t = (x[1] - bb.lo[1]) / bb.side(1);
      return Point{t * (1 - t), 0, 0};
    };
  }
  throw ConfigError(concat("config key 'boundary': unknown preset '", name, "'"));
}

//-----------------------------------------------------------------------------
// Artifacts and manifest
//-----------------------------------------------------------------------------

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw ResourceError("sha256 failed", 0);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

struct ArtifactEntry {
  std::string path;
  std::uint64_t bytes = 0;
  std::string sha256;
};

class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    std::ofstream f(dir_ / name, std::ios::binary);
    f.write(content.data(), std::streamsize(content.size()));
    if (!f) throw ResourceError(concat("cannot write ", (dir_ / name).string()), 0);
    entries_.push_back({name, content.size(), sha256_hex(content)});
  }
  template <typename Fn>
  void emit(const std::string& name, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    write(name, os.str());
  }
  void emit_json(const std::string& name, const ojson& j) { write(name, j.dump(2) + "\n"); }

  const std::vector<ArtifactEntry>& entries() const { return entries_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<ArtifactEntry> entries_;
};

//-----------------------------------------------------------------------------
// DeVore-Triebel diagram geometry
//-----------------------------------------------------------------------------

/// kind,inv_tau,s,label rows: the adaptivity ray from (1/2, 0) to s = 2, the
/// H^{3/2} point, the target (1/tau*, s1_max) when bounds apply, and the
/// measured Sobolev and adaptivity points. An empty report gives the header.
inline std::string export_devore_triebel_data(const RegularityReport& rep, int d) {
  std::ostringstream os;
  os.precision(17);
  os << "kind,inv_tau,s,label\n";
  if (rep.sobolev.level_norms.empty()) return os.str();
  auto inv_tau = [d](double s) { return s / d + 0.5; };
  os << "ray," << 0.5 << ',' << 0 << ",start\n";
  os << "ray," << inv_tau(2.0) << ',' << 2 << ",end\n";
  os << "sobolev," << 0.5 << ',' << 1.5 << ",H^{3/2}\n";
  if (rep.bounds) {
    const Rational s1 = rep.bounds->s1_max;
    const Rational it = Rational(1) / adaptivity_tau(s1, d);
    os << "target," << it.to_double() << ',' << s1.to_double() << ",s1_max=" << s1 << '\n';
  }
  os << "measured," << 0.5 << ',' << rep.sobolev.s << ",s_sob\n";
  os << "measured," << inv_tau(rep.adaptive.s) << ',' << rep.adaptive.s << ",s_adapt\n";
  return os.str();
}

inline RegularityReport report_from_json(const nlohmann::json& j) {
  RegularityReport r;
  try {
    r.dim = j.at("d").get<int>();
    r.seed = j.value("seed", std::uint64_t{0});
    r.sobolev.s = j.at("s_sob").get<double>();
    r.adaptive.s = j.at("s_adapt").get<double>();
    r.adaptive.tau = j.at("tau").get<double>();
    r.sobolev.level_norms = j.value("level_norms", std::vector<double>{});
    if (r.dim >= 3) r.bounds = stokes_regularity_bounds(r.dim);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(concat("malformed regularity report: ", e.what()));
  }
  return r;
}

inline std::string bounds_table_csv(const std::vector<int>& dims, Rational alpha0, Rational alpha,
                                    std::int64_t gamma) {
  std::ostringstream os;
  os << "d,s1_max,s2_max,embed_max\n";
  for (int d : dims) {
    const auto b = stokes_regularity_bounds(d);
    os << d << ',' << b.s1_max << ',' << b.s2_max << ',' << embedding_smoothness_bound(alpha0, alpha, gamma, d)
       << '\n';
  }
  return os.str();
}

//-----------------------------------------------------------------------------
// Pipelines
//-----------------------------------------------------------------------------

struct FieldAnalysis {
  Domain domain;
  WaveletBasis basis;
  IndexSetFamily family;
  CoefficientField coeffs;
  std::optional<FlowState> flow;
};

inline double grid_spacing(const ExperimentConfig& c) { return std::ldexp(1.0, -(c.j_max + 1)); }

inline StokesSolver make_solver(const ExperimentConfig& c, const Domain& dom) {
  const double h = grid_spacing(c);
  const double ratio = dom.cell_size() / h;
  if (ratio < 1 || ratio != std::floor(ratio))
    throw ConfigError(concat("config key 'j_max': grid spacing 2^-", c.j_max + 1, " does not divide the cell size ",
                             dom.cell_size()));
  return StokesSolver(dom, h);
}

inline ProblemData problem_data(const ExperimentConfig& c, const Domain& dom) {
  ProblemData pd;
  pd.f = force_preset(c.force, dom);
  pd.g = boundary_preset(c.boundary, dom);
  pd.nu = c.nu;
  return pd;
}

/// Coefficients of the configured field on the analysis box, restricted to
/// the cubes meeting Omega.
inline FieldAnalysis analyze_field(const ExperimentConfig& c) {
  const Domain dom = read_domain_file(c.resolve(c.domain).string());
  const int d = dom.dim();
  if (c.component < 0 || c.component >= d) throw ConfigError(concat("config key 'component': out of range for d = ", d));
  WaveletBasis basis = build_basis(d, c.r);
  const AnalysisBox box = analysis_box(dom, c.pad);
  const ExtensionRule rule = parse_extension_rule(c.extension);
  std::optional<FlowState> flow;
  GridField samples;
  if (c.field == "velocity") {
    const StokesSolver solver = make_solver(c, dom);
    const ProblemData pd = problem_data(c, dom);
    flow = solver.solve(pd, c.tol);
    const GridField nodes = flow->node_velocity(c.component, pd.g);
    const double h = nodes.spacing;
    auto lookup = [&](const Point& x) {
      Shift i{0, 0, 0};
      for (int a = 0; a < d; ++a) i[a] = std::llround((x[a] - nodes.origin[a]) / h);
      return nodes.at(i);
    };
    samples = sample_extended(dom, box, c.j_max, lookup, rule);
  } else if (c.field == "corner") {
    const Point x0 = c.center.value_or(dom.origin());
    const double e = c.exponent;
    samples = sample_extended(dom, box, c.j_max, [&](const Point& x) {
      double r2 = 0;
      for (int a = 0; a < d; ++a) r2 += (x[a] - x0[a]) * (x[a] - x0[a]);
      return std::pow(r2, e / 2);
    }, rule);
  } else {
    const Box bb = dom.bounding_box();
    samples = sample_extended(dom, box, c.j_max, [&](const Point& x) {
      double v = 1;
      for (int a = 0; a < d; ++a) v *= std::cos(M_PI * (x[a] - bb.lo[a]) / bb.side(a));
      return v;
    }, rule);
  }
  IndexSetFamily fam = build_index_sets(dom, basis.support(), c.j_max);
  CoefficientField coeffs = analyze(samples, basis, c.j_max).restricted(fam);
  return {dom, std::move(basis), std::move(fam), std::move(coeffs), std::move(flow)};
}

inline RegularityReport regularity_report(const ExperimentConfig& c, const FieldAnalysis& fa) {
  RegularityReport rep;
  rep.dim = fa.domain.dim();
  rep.seed = c.seed;
  rep.sobolev = estimate_sobolev_smoothness(fa.coeffs, {c.sobolev_lo.value_or(2), c.sobolev_hi.value_or(c.j_max - 1)});
  rep.adaptive = estimate_adaptivity_smoothness(fa.coeffs);
  if (rep.dim >= 3) {
    rep.bounds = stokes_regularity_bounds(rep.dim);
    rep.embed_max = embedding_smoothness_bound(Rational::parse(c.alpha0), Rational::parse(c.alpha), c.gamma, rep.dim);
  }
  return rep;
}

inline ojson flow_json(const FlowState& s, const ExperimentConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["h"] = s.grid().h();
  j["iterations"] = s.iterations;
  j["momentum_residual"] = s.momentum_residual;
  j["divergence"] = s.divergence;
  j["notes"] = s.notes;
  return j;
}

inline void run_solve_stokes(const ExperimentConfig& c, Artifacts& out) {
  const Domain dom = read_domain_file(c.resolve(c.domain).string());
  const StokesSolver solver = make_solver(c, dom);
  const FlowState s = solver.solve(problem_data(c, dom), c.tol);
  out.emit("solution.bin", [&](std::ostream& os) { write_state_binary(os, s); });
  out.emit("summary.csv", [&](std::ostream& os) { write_state_summary_csv(os, s); });
  out.emit_json("stokes.json", flow_json(s, c));
}

inline void run_analyze(const ExperimentConfig& c, Artifacts& out) {
  const FieldAnalysis fa = analyze_field(c);
  if (fa.flow) out.emit("summary.csv", [&](std::ostream& os) { write_state_summary_csv(os, *fa.flow); });
  out.emit("index_counts.csv", [&](std::ostream& os) { write_index_counts_csv(os, fa.family); });
  out.emit("index_members.csv", [&](std::ostream& os) { write_index_members_csv(os, fa.family, 3); });
  out.emit("coefficients.csv", [&](std::ostream& os) { write_coefficients_csv(os, fa.coeffs); });
  out.emit("coefficients.bin", [&](std::ostream& os) { write_coefficients_binary(os, fa.coeffs); });
  out.emit("decay.csv", [&](std::ostream& os) { write_decay_csv(os, fa.coeffs.all_values()); });
  out.emit_json("regularity.json", to_json(regularity_report(c, fa)));
}

inline void run_nterm(const ExperimentConfig& c, Artifacts& out) {
  const FieldAnalysis fa = analyze_field(c);
  const RateFit rf = approximation_rates(fa.coeffs, fa.family);
  out.emit("curves.csv", [&](std::ostream& os) { write_curves_csv(os, {rf.uniform_curve, rf.adaptive_curve}); });
  const auto est = estimate_adaptivity_smoothness(fa.coeffs);
  const auto all = fa.coeffs.all_values();
  const auto nmax = static_cast<std::int64_t>(all.size()) / 4;
  ojson j;
  j["seed"] = c.seed;
  j["norm"] = rf.uniform_curve.norm;
  j["uniform_rate"] = rf.uniform;
  j["adaptive_rate"] = rf.adaptive;
  j["stderr"] = {{"uniform", rf.uniform_stderr}, {"adaptive", rf.adaptive_stderr}};
  j["fit_levels"] = {rf.level_lo, rf.level_hi};
  j["s_adapt"] = est.s;
  ojson eq = ojson::array();
  for (double f : {0.5, 1.5}) {
    const auto e = equivalence_sum(all, f * est.s, fa.domain.dim(), nmax);
    eq.push_back({{"s", f * est.s}, {"tau", e.tau}, {"partial_sum", e.partial_sum}, {"tail_slope", e.tail_slope},
                  {"convergent", e.convergent}});
  }
  j["equivalence"] = eq;
  out.emit_json("rates.json", j);
}

inline void run_nse(const ExperimentConfig& c, Artifacts& out) {
  const Domain dom = read_domain_file(c.resolve(c.domain).string());
  const StokesSolver solver = make_solver(c, dom);
  const StateNorm norm(solver.grid_ptr(), 1.0, 2, c.pad);
  PicardOptions opt;
  opt.tol = c.tol;
  opt.max_iter = c.max_iter;
  opt.surrogates = measure_surrogates(solver, norm, c.seed, c.probes, c.tol);
  const PicardResult res = solve_navier_stokes(solver, norm, problem_data(c, dom), opt);
  const auto& tr = res.trace;
  out.emit("trace.csv", [&](std::ostream& os) { write_trace_csv(os, tr); });
  ojson j;
  j["seed"] = c.seed;
  j["termination"] = to_string(tr.termination);
  j["outside_guaranteed_regime"] = tr.outside_guaranteed_regime;
  j["condition"] = {{"holds", tr.condition.holds}, {"lhs", tr.condition.lhs}, {"rhs", tr.condition.rhs},
                    {"margin", tr.condition.margin}};
  j["surrogates"] = {{"L_norm", opt.surrogates.L_norm}, {"C", opt.surrogates.C}, {"C_grad", opt.surrogates.C_grad},
                     {"C_inf", opt.surrogates.C_inf}, {"probes", opt.surrogates.probes}};
  j["radius"] = std::isfinite(tr.radius) ? ojson(tr.radius) : ojson(nullptr);
  j["f_norm"] = tr.f_norm;
  j["g_norm"] = tr.g_norm;
  j["weak_residual"] = tr.weak_residual;
  j["steps"] = tr.steps.size();
  out.emit_json("nse.json", j);
  if (tr.termination != Termination::converged) {
    std::vector<double> hist;
    for (const auto& s : tr.steps) hist.push_back(s.diff_norm);
    throw ConvergenceError(concat("Picard iteration stopped: ", to_string(tr.termination), " after ", tr.steps.size(),
                                  " steps"),
                           hist);
  }
  out.emit("solution.bin", [&](std::ostream& os) { write_state_binary(os, res.state); });
  out.emit_json("stokes.json", flow_json(res.state, c));
}

inline void run_embed_check(const ExperimentConfig& c, Artifacts& out) {
  ojson j;
  j["seed"] = c.seed;
  j["d"] = c.embed_dim;
  const Rational b = embedding_smoothness_bound(Rational::parse(c.alpha0), Rational::parse(c.alpha), c.gamma, c.embed_dim);
  j["embed_max"] = concat(b);
  j["embed_max_value"] = b.to_double();
  ojson rng;
  try {
    const auto r = admissible_range(c.embed_dim, Rational::parse(c.eps), Rational::parse(c.p));
    if (r) rng = {{"lo", concat(r->lo)}, {"hi", concat(r->hi)}};
    else rng = {{"empty", true}};
  } catch (const DomainTooRough& e) {
    rng = {{"domain_too_rough", e.what()}};
  }
  j["admissible_range"] = rng;
  out.emit_json("embed.json", j);
}

inline void run_bounds(const ExperimentConfig& c, Artifacts& out) {
  out.write("bounds.csv", bounds_table_csv(c.dims, Rational::parse(c.alpha0), Rational::parse(c.alpha), c.gamma));
}

inline void run_dt_diagram(const ExperimentConfig& c, Artifacts& out) {
  RegularityReport rep;
  if (!c.report.empty()) {
    std::ifstream in(c.resolve(c.report));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(concat("report ", c.report, ": ", e.what()));
    }
    rep = report_from_json(j);
  } else {
    rep = regularity_report(c, analyze_field(c));
    out.emit_json("regularity.json", to_json(rep));
  }
  out.write("dt_diagram.csv", export_devore_triebel_data(rep, rep.dim));
}

//-----------------------------------------------------------------------------
// Run
//-----------------------------------------------------------------------------

enum ExitCode { kExitOk = 0, kExitValidation = 2, kExitNumerical = 3 };

/// Bad input and unmet hypotheses are validation failures; everything the
/// numerics raise is a numerical failure.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e) ||
      dynamic_cast<const DomainError*>(&e) || dynamic_cast<const CompatibilityError*>(&e) ||
      dynamic_cast<const PreconditionError*>(&e) || dynamic_cast<const ConsistencyError*>(&e))
    return kExitValidation;
  return kExitNumerical;
}

struct RunResult {
  int status = kExitOk;
  std::string error;
  ojson manifest;
};

inline RunResult run(const ExperimentConfig& c) {
  RunResult res;
  try {
    validate(c);
  } catch (const std::exception& e) {
    res.status = exit_code_for(e);
    res.error = e.what();
    return res;  // nothing runs, nothing is written
  }
  Artifacts out(c.out);
  try {
    if (c.experiment == "analyze-field") run_analyze(c, out);
    else if (c.experiment == "solve-stokes") run_solve_stokes(c, out);
    else if (c.experiment == "solve-nse") run_nse(c, out);
    else if (c.experiment == "nterm-compare") run_nterm(c, out);
    else if (c.experiment == "embed-check") run_embed_check(c, out);
    else if (c.experiment == "bounds-table") run_bounds(c, out);
    else run_dt_diagram(c, out);
  } catch (const std::exception& e) {
    res.status = exit_code_for(e);
    res.error = e.what();
  }
  ojson m;
  m["experiment"] = c.experiment;
  m["seed"] = c.seed;
  m["status"] = res.status == kExitOk ? "complete" : "partial";
  m["error"] = res.error.empty() ? ojson(nullptr) : ojson(res.error);
  m["config"] = to_json(c);
  ojson files = ojson::array();
  for (const auto& f : out.entries()) files.push_back({{"path", f.path}, {"bytes", f.bytes}, {"sha256", f.sha256}});
  m["files"] = files;
  res.manifest = m;
  std::error_code ec;
  fs::create_directories(c.out, ec);
  std::ofstream mf(fs::path(c.out) / "manifest.json", std::ios::binary);
  mf << m.dump(2) << '\n';
  if (!mf && res.status == kExitOk) {
    res.status = kExitNumerical;
    res.error = "cannot write manifest";
  }
  return res;
}

}  // namespace besov
