#include "cli_commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace shyp::cli {

namespace {

json system_defaults(const std::string& kind) {
  if (kind == "cyclic_hyperbolic") return {{"kind", kind}, {"m", 2.0}};
  if (kind == "covered_cyclic") return {{"kind", kind}, {"m", 2.0}, {"k", 3}};
  if (kind == "schottky") return {{"kind", kind}, {"m", 3.0}, {"shrink", 0.02}};
  if (kind == "free_boundary") return {{"kind", kind}, {"k", 2}, {"a", 2.0}};
  if (kind == "zn_projective") return {{"kind", kind}, {"diagonals", {{9.0, 1.0, 3.0}, {9.0, 3.0, 1.0}}}};
  if (kind == "product")
    return {{"kind", kind}, {"first", {{"kind", "schottky"}}}, {"second", {{"kind", "schottky"}}}, {"swap", true}};
  return nullptr;
}

double default_lambda(const std::string& kind) {
  return kind == "cyclic_hyperbolic" || kind == "covered_cyclic" ? 1.5 : 2.0;
}

json perturbation_defaults(const std::string& family) {
  if (family == "none") return {{"family", family}};
  if (family == "jitter") return {{"family", family}, {"magnitude", 0.0}, {"seed", 7}, {"diagonal_only", false}};
  if (family == "bump") return {{"family", family}, {"center", 0.0}, {"width", 0.05}, {"height", 0.0}};
  if (family == "translate") return {{"family", family}, {"t", 0.0}};
  return nullptr;
}

std::string type_name(const json& j) {
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  return j.type_name();
}

// Overlay `raw` onto `def`, rejecting unknown fields and type mismatches.
void merge(json& def, const json& raw, const std::string& path) {
  if (!raw.is_object()) throw SchemaError(path.empty() ? "/" : path, "expected object, got " + type_name(raw));
  for (auto it = raw.begin(); it != raw.end(); ++it) {
    std::string p = path + "/" + it.key();
    if (!def.contains(it.key())) throw SchemaError(p, "unknown field");
    json& slot = def[it.key()];
    const json& v = it.value();
    bool ok = slot.is_number_integer() ? v.is_number_integer()
              : slot.is_number()       ? v.is_number()
                                       : slot.type() == v.type();
    if (!ok) throw SchemaError(p, "expected " + type_name(slot) + ", got " + type_name(v));
    if (slot.is_object()) {
      merge(slot, v, p);
    } else if (slot.is_number_float()) {
      slot = v.get<double>();
    } else {
      slot = v;
    }
  }
}

json materialize_system(const json& raw, const std::string& path) {
  if (!raw.is_object()) throw SchemaError(path, "expected object, got " + type_name(raw));
  if (raw.contains("kind") && !raw["kind"].is_string()) throw SchemaError(path + "/kind", "expected string");
  std::string kind = raw.value("kind", "schottky");
  json def = system_defaults(kind);
  if (def.is_null()) throw SchemaError(path + "/kind", "unknown system '" + kind + "'");
  json nested = raw;
  // factors of a product are systems in their own right
  if (kind == "product") {
    for (const char* f : {"first", "second"}) {
      std::string fp = path + "/" + f;
      def[f] = materialize_system(raw.contains(f) ? raw[f] : json{{"kind", "schottky"}}, fp);
      if (def[f]["kind"] == "product") throw SchemaError(fp, "products nest one level only");
      nested.erase(f);
    }
  }
  merge(def, nested, path);
  auto positive = [&](const char* key, double lo) {
    if (def.contains(key) && !(def[key].get<double>() > lo))
      throw SchemaError(path + "/" + key, "must exceed " + std::to_string(lo));
  };
  if (kind != "free_boundary") positive("m", 1);
  if (kind == "free_boundary") {
    if (def["k"].get<int>() < 2) throw SchemaError(path + "/k", "rank must be at least 2");
    double a = def["a"].get<double>();
    if (!(a > 1 && a <= 2)) throw SchemaError(path + "/a", "must lie in (1, 2]");
  }
  if (kind == "covered_cyclic" && def["k"].get<int>() < 1) throw SchemaError(path + "/k", "must be at least 1");
  if (kind == "zn_projective") {
    const auto& ds = def["diagonals"];
    if (ds.empty()) throw SchemaError(path + "/diagonals", "need at least one generator");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::string dp = path + "/diagonals/" + std::to_string(i);
      if (!ds[i].is_array() || ds[i].size() != ds.size() + 1) throw SchemaError(dp, "expected " + std::to_string(ds.size() + 1) + " numbers");
      for (const auto& x : ds[i])
        if (!x.is_number() || !(x.get<double>() > 0)) throw SchemaError(dp, "entries must be positive numbers");
    }
  }
  return def;
}

std::shared_ptr<const ActionSystem> shared(ActionSystem s) { return std::make_shared<const ActionSystem>(std::move(s)); }

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

std::string letters_string(const Letters& w) {
  std::string s;
  for (int l : w) s += letter_char(l);
  return s;
}

json check(const std::string& name, double value, double bound, std::size_t samples, bool pass,
           const std::string& witness = "") {
  // slack > 0 means the claim holds with room to spare
  json j{{"name", name}, {"value", value}, {"bound", bound}, {"slack", bound - value}, {"samples", samples}, {"pass", pass}};
  if (!witness.empty()) j["witness"] = witness;
  return j;
}

json check_from(const CheckResult& c, std::size_t samples) {
  json j{{"name", c.check}, {"slack", c.slack}, {"samples", samples}, {"pass", c.pass}};
  if (!c.witness.empty()) j["witness"] = c.witness;
  return j;
}

bool all_pass(const json& checks) {
  for (const auto& c : checks)
    if (!c["pass"].get<bool>()) return false;
  return true;
}

json datum_json(const ExpansionDatum& d) {
  json regions = json::array();
  for (std::size_t a = 0; a < d.size(); ++a)
    regions.push_back({{"symbol", d.symbol[a]}, {"label", d.regions[a].label}, {"empty", d.regions[a].empty}});
  return {{"delta", d.delta}, {"L", d.L}, {"lambda", d.lambda}, {"lebesgue", d.lebesgue}, {"net_size", d.net.size()},
          {"regions", regions}};
}

// Plots on the unit circle; `ring` offsets a layer radially.
class CirclePlot {
 public:
  void dots(const std::vector<Point>& pts, const std::string& color, double ring = 0, double r = 2) {
    for (const auto& p : pts) {
      auto [x, y] = at(p, ring);
      body_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\"" << color
            << "\"/>\n";
    }
  }
  void arc(double from, double to, double ring, const std::string& color) {
    body_ << "<polyline fill=\"none\" stroke-width=\"3\" stroke=\"" << color << "\" points=\"";
    const int steps = std::max(2, static_cast<int>((to - from) / 0.02));
    for (int i = 0; i <= steps; ++i) {
      auto [x, y] = at(circle_point(from + (to - from) * i / steps), ring);
      body_ << num(x) << "," << num(y) << " ";
    }
    body_ << "\"/>\n";
  }
  std::string str() const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * kHalf << "\" height=\"" << 2 * kHalf << "\">\n"
       << "<circle cx=\"" << kHalf << "\" cy=\"" << kHalf << "\" r=\"" << kRadius
       << "\" fill=\"none\" stroke=\"#bbb\"/>\n"
       << body_.str() << "</svg>\n";
    return os.str();
  }

 private:
  static constexpr int kHalf = 300;
  static constexpr double kRadius = 200;
  std::ostringstream body_;

  static std::string num(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
    return os.str();
  }
  static std::pair<double, double> at(const Point& p, double ring) {
    double r = kRadius + ring;
    double t = angle(p);
    return {kHalf + r * std::cos(t), kHalf - r * std::sin(t)};
  }
};

const char* kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};

std::string cover_svg(const ExpansionDatum& d) {
  CirclePlot plot;
  const int grid = 2880;
  for (std::size_t a = 0; a < d.size(); ++a) {
    if (d.regions[a].empty) continue;
    const double ring = 20.0 + 6.0 * static_cast<double>(a);
    int start = -1;
    for (int i = 0; i <= grid; ++i) {
      bool in = i < grid && d.regions[a].contains(circle_point(kTwoPi * i / grid));
      if (in && start < 0) start = i;
      if (!in && start >= 0) {
        plot.arc(kTwoPi * start / grid, kTwoPi * (i - 1) / grid, ring, kPalette[a % 8]);
        start = -1;
      }
    }
  }
  plot.dots(d.net_points(), "#000");
  return plot.str();
}

struct Run {
  const Config& cfg;
  const json& s;
  ActionSystem sys;
  ExpansionDatum d;

  explicit Run(const Config& c) : cfg(c), s(c.settings), sys(build_system(s["system"])) {
    BuildOptions bo;
    bo.net_depth = s["net_depth"].get<int>();
    d = build_expansion_datum(sys, s["lambda_target"].get<double>(), bo);
  }
  std::vector<LimitSample> sample() const {
    std::vector<LimitSample> out;
    for (auto i : spread_indices(d.net.size(), s["points"].get<std::size_t>())) out.push_back(d.net[i]);
    return out;
  }
  std::vector<Point> sample_points() const {
    std::vector<Point> out;
    for (const auto& x : sample()) out.push_back(x.point);
    return out;
  }
  bool svg() const { return s["svg"].get<bool>() && sys.space.is_circle_like(); }
};

Outcome verify_cmd(const Config& cfg) {
  Run r(cfg);
  VerifyOptions vo;
  vo.samples = r.s["samples"].get<int>();
  vo.tol = r.s["tol"].get<double>();
  vo.invariance_tol = r.s["invariance_tol"].get<double>();
  auto rep = verify_expansion(r.sys, r.d, vo);
  Outcome o;
  json checks = json::array();
  for (const auto& c : rep.checks) checks.push_back(check_from(c, r.d.net.size()));
  o.report["datum"] = datum_json(r.d);
  o.report["checks"] = checks;
  o.status = rep.pass() ? kPass : kCheckFailed;
  o.artifacts.push_back({"checks.csv", rep.csv()});
  if (r.svg()) o.artifacts.push_back({"cover.svg", cover_svg(r.d)});
  return o;
}

Outcome codes_cmd(const Config& cfg) {
  Run r(cfg);
  CodingContext ctx(r.sys, r.d);
  const auto depth = r.s["depth"].get<std::size_t>();
  const auto cap = r.s["cap"].get<std::size_t>();
  std::ostringstream csv;
  csv << "point,code,alpha,ray_end,qg_worst_slack,final_diameter,final_bound\n";
  double nest_slack = std::numeric_limits<double>::infinity(), rate_slack = nest_slack, qg_slack = nest_slack;
  std::size_t steps = 0, pairs = 0, ncodes = 0, truncated = 0;
  bool nested = true, shrinking = true, qg = true;
  std::string nest_w, rate_w, qg_w;
  auto pts = r.sample_points();
  for (std::size_t k = 0; k < pts.size(); ++k) {
    auto set = enumerate_codes(ctx, r.d.delta, pts[k], depth, cap);
    truncated += set.truncated;
    for (std::size_t c = 0; c < set.codes.size(); ++c, ++ncodes) {
      const auto& code = set.codes[c];
      auto ns = nested_images(ctx, code, r.d.delta, depth);
      for (const auto& st : ns) {
        ++steps;
        nested = nested && st.nested;
        shrinking = shrinking && st.shrinking;
        if (st.containment_slack < nest_slack) {
          nest_slack = st.containment_slack;
          nest_w = "point " + std::to_string(k) + " code " + std::to_string(c) + " step " + std::to_string(st.i);
        }
        if (st.bound - st.diameter < rate_slack) {
          rate_slack = st.bound - st.diameter;
          rate_w = "point " + std::to_string(k) + " code " + std::to_string(c) + " step " + std::to_string(st.i);
        }
      }
      auto ray = make_ray(ctx, code);
      auto q = quasigeodesic_check(r.sys.alphabet, r.d, ray);
      pairs += q.pairs;
      qg = qg && q.pass;
      if (q.worst_slack < qg_slack) {
        qg_slack = q.worst_slack;
        qg_w = "point " + std::to_string(k) + " code " + std::to_string(c);
      }
      std::string alpha;
      for (std::size_t i = 0; i < code.alpha.size(); ++i) alpha += (i ? " " : "") + std::to_string(code.alpha[i]);
      csv << k << "," << c << "," << alpha << "," << r.sys.alphabet.to_string(ray.words.back()) << "," << fmt(q.worst_slack)
          << "," << fmt(ns.empty() ? 0 : ns.back().diameter) << "," << fmt(ns.empty() ? 0 : ns.back().bound) << "\n";
    }
  }
  Outcome o;
  json checks = json::array();
  checks.push_back({{"name", "nested"}, {"slack", nest_slack}, {"samples", steps}, {"pass", nested}, {"witness", nest_w}});
  checks.push_back({{"name", "shrinking"}, {"slack", rate_slack}, {"samples", steps}, {"pass", shrinking}, {"witness", rate_w}});
  checks.push_back({{"name", "quasigeodesic"}, {"slack", qg_slack}, {"samples", pairs}, {"pass", qg}, {"witness", qg_w}});
  o.report["datum"] = datum_json(r.d);
  o.report["codes"] = ncodes;
  o.report["points"] = pts.size();
  o.report["truncated_points"] = truncated;
  o.report["qg_slope"] = qg_slope(r.d.lambda, r.d.L);
  o.report["checks"] = checks;
  o.status = all_pass(checks) ? kPass : kCheckFailed;
  o.artifacts.push_back({"codes.csv", csv.str()});
  if (r.svg() && !pts.empty()) {
    // the greedy code orbit of the first sampled point over the net
    CirclePlot plot;
    plot.dots(r.d.net_points(), "#000");
    plot.dots(make_code(ctx, r.d.delta, pts[0], depth).points, "#d95f02", 10, 3);
    o.artifacts.push_back({"codes.svg", plot.str()});
  }
  return o;
}

Outcome certify_cmd(const Config& cfg) {
  Run r(cfg);
  CodingContext ctx(r.sys, r.d);
  auto pts = r.sample_points();
  auto cert = shyp_certificate(ctx, pts, r.s["depth"].get<std::size_t>(), r.s["cap"].get<std::size_t>(),
                               r.s["n_max"].get<long>(), r.s["max_chain"].get<std::size_t>());
  std::ostringstream csv;
  csv << "point,codes,truncated,fellow_travel,max_chain,meandering\n";
  std::size_t rays = 0;
  for (const auto& p : cert.points) {
    rays += p.codes;
    csv << p.point << "," << p.codes << "," << p.truncated << "," << p.fellow_travel << "," << p.max_chain << ","
        << p.meandering << "\n";
  }
  Outcome o;
  const double nmax = static_cast<double>(cert.N_max);
  json checks = json::array();
  checks.push_back(check("fellow_travel", static_cast<double>(cert.N), nmax, rays, cert.fellow_travel_ok,
                         "point " + std::to_string(cert.worst_point)));
  checks.push_back(check("meandering_chain", static_cast<double>(cert.max_chain), r.s["max_chain"].get<double>(), rays,
                         cert.meandering_ok));
  o.report["datum"] = datum_json(r.d);
  o.report["N"] = cert.N;
  o.report["N_max"] = cert.N_max;
  o.report["fellow_travel_ok"] = cert.fellow_travel_ok;
  o.report["meandering_ok"] = cert.meandering_ok;
  o.report["max_chain"] = cert.max_chain;
  o.report["truncated"] = cert.truncated;
  o.report["verdict"] = cert.fellow_travel_ok ? "fellow-travel" : cert.meandering_ok ? "meandering" : "none";
  o.report["checks"] = checks;
  o.status = cert.fellow_travel_ok || cert.meandering_ok ? kPass : kCheckFailed;
  o.artifacts.push_back({"certificate.csv", csv.str()});
  return o;
}

Outcome coding_map_cmd(const Config& cfg) {
  Run r(cfg);
  CodingContext ctx(r.sys, r.d);
  const auto pd = r.s["prefix_depth"].get<std::size_t>();
  auto sample = r.sample();
  std::ostringstream csv;
  csv << "point,x,prefix,stable,code_depth\n";
  std::map<std::string, std::size_t> fibers;
  std::size_t unstable = 0;
  std::vector<Letters> prefixes;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    auto res = coding_map(ctx, sample[k].point, pd);
    prefixes.push_back(res.prefix);
    ++fibers[letters_string(res.prefix)];
    unstable += !res.stable;
    csv << k << "," << to_string(sample[k].point) << "," << letters_string(res.prefix) << "," << res.stable << ","
        << res.code_depth << "\n";
  }
  // pi(rho(s) x) against s . pi(x), compared on pd - 1 letters to allow one cancellation
  std::size_t eq_samples = 0, eq_fail = 0;
  std::string eq_w;
  const int top = r.s["net_depth"].get<int>();
  for (std::size_t k = 0; k < sample.size(); ++k) {
    if (sample[k].depth >= top) continue;
    for (int sym = 0; sym < r.sys.alphabet.num_symbols(); ++sym) {
      ++eq_samples;
      auto y = ctx.snap(r.sys.maps[sym](sample[k].point));
      auto py = coding_map(ctx, y, pd).prefix;
      Letters sx{r.sys.alphabet.symbol_letter(sym)};
      sx.insert(sx.end(), prefixes[k].begin(), prefixes[k].end());
      sx = free_reduce(sx);
      std::size_t n = pd > 0 ? pd - 1 : 0;
      bool ok = sx.size() >= n && py.size() >= n && std::equal(sx.begin(), sx.begin() + n, py.begin());
      if (!ok && eq_w.empty()) eq_w = "point " + std::to_string(k) + " symbol " + r.sys.alphabet.symbol_name(sym);
      eq_fail += !ok;
    }
  }
  std::size_t largest = 0;
  for (const auto& [w, n] : fibers) largest = std::max(largest, n);
  Outcome o;
  json checks = json::array();
  checks.push_back(check("stable", static_cast<double>(unstable), 0, sample.size(), unstable == 0));
  checks.push_back(check("equivariance", static_cast<double>(eq_fail), 0, eq_samples, eq_fail == 0, eq_w));
  o.report["datum"] = datum_json(r.d);
  o.report["prefix_depth"] = pd;
  o.report["distinct_prefixes"] = fibers.size();
  o.report["largest_fiber"] = largest;
  o.report["injective"] = largest == 1;
  o.report["checks"] = checks;
  o.status = all_pass(checks) ? kPass : kCheckFailed;
  o.artifacts.push_back({"coding_map.csv", csv.str()});
  return o;
}

Perturbation perturbation_from(const json& p) {
  const auto family = p["family"].get<std::string>();
  if (family == "jitter")
    return MatrixJitter{p["magnitude"].get<double>(), p["seed"].get<std::uint64_t>(), p["diagonal_only"].get<bool>()};
  if (family == "bump") return BumpCompose{p["center"].get<double>(), p["width"].get<double>(), p["height"].get<double>()};
  if (family == "translate") return TranslateConjugate{p["t"].get<double>()};
  return MatrixJitter{0, 0, false};
}

Outcome stability_cmd(const Config& cfg) {
  Run r(cfg);
  CodingContext ctx(r.sys, r.d);
  PerturbOptions po;
  po.pair_seed = r.s["seed"].get<std::uint64_t>();
  const int N = r.s["N"].get<int>();
  auto ps = make_perturbed(r.sys, perturbation_from(r.s["perturbation"]), r.d, N, po);
  Outcome o;
  json realized = json::object();
  for (std::size_t sym = 0; sym < ps.realized.size(); ++sym)
    realized[r.sys.alphabet.symbol_name(static_cast<int>(sym))] = ps.realized[sym];
  o.report["datum"] = datum_json(r.d);
  o.report["epsilon"] = ps.epsilon;
  o.report["realized_distance"] = realized;
  o.report["K_size"] = ps.K.size();
  json checks = json::array();
  checks.push_back(check("admissible", ps.distance(), ps.epsilon, ps.K.size(), ps.admissible(),
                         r.sys.alphabet.symbol_name(ps.worst_symbol())));
  if (!ps.admissible()) {
    o.report["checks"] = checks;
    o.status = kCheckFailed;
    return o;
  }
  ConjugacyOptions co;
  co.tol = r.s["tol"].get<double>();
  co.max_depth = r.s["max_depth"].get<std::size_t>();
  auto table = conjugacy_map(ps, ctx, r.sample(), co);
  const auto n = table.entries.size();
  std::size_t unconverged = 0;
  for (const auto& e : table.entries) unconverged += !e.converged;
  checks.push_back(check("converged", table.max_stop_diameter, co.tol, n, table.all_converged && unconverged == 0));
  double rate_slack = std::numeric_limits<double>::infinity();
  for (const auto& e : table.entries) rate_slack = std::min(rate_slack, e.bound - e.diameter);
  checks.push_back({{"name", "rate"}, {"slack", rate_slack}, {"samples", n}, {"pass", table.all_rate_ok}});
  const double etol = r.s["equivariance_tol"].get<double>();
  checks.push_back(check("equivariance", table.equivariance.max_residual, etol,
                         n * static_cast<std::size_t>(r.sys.alphabet.num_symbols()), table.equivariance.max_residual < etol,
                         table.equivariance.worst_symbol < 0
                             ? ""
                             : "entry " + std::to_string(table.equivariance.worst_entry) + " symbol " +
                                   r.sys.alphabet.symbol_name(table.equivariance.worst_symbol)));
  auto disp = check_displacement(r.sys.space, table.entries, ps.epsilon, r.d.delta);
  checks.push_back(check("displacement_epsilon", disp.max_displacement, ps.epsilon, n, disp.below_epsilon));
  checks.push_back(check("displacement_delta_fifth", disp.max_displacement, r.d.delta / 5, n, disp.below_delta_fifth));
  auto inj = check_injectivity(r.sys.space, table.entries, co.tol, 1e-12, &ctx);
  checks.push_back({{"name", "injective"},
                    {"min_image_distance", inj.min_image_distance},
                    {"slack", inj.min_image_distance - 1e-12},
                    {"samples", n * (n - 1) / 2},
                    {"pass", inj.injective}});
  for (std::size_t k : {5, 10}) {
    auto cont = check_continuity(ps, ctx, table.entries, k, co);
    checks.push_back({{"name", "continuity_k" + std::to_string(k)},
                      {"slack", cont.worst_slack},
                      {"samples", cont.pairs},
                      {"pass", cont.pass}});
  }
  try {
    auto dp = perturbed_datum(ps, r.d, table, r.s["shrink_fraction"].get<double>() * r.d.delta);
    VerifyOptions vo;
    vo.samples = r.s["samples"].get<int>();
    vo.tol = r.s["tol"].get<double>();
    vo.invariance_tol = std::max(r.s["invariance_tol"].get<double>(), 1e-7);
    auto rep = verify_expansion(ps.perturbed, dp, vo);
    o.report["perturbed_datum"] = datum_json(dp);
    for (const auto& c : rep.checks) {
      auto j = check_from(c, dp.net.size());
      j["name"] = "perturbed_" + c.check;
      checks.push_back(j);
    }
  } catch (const ConstructionError& e) {
    checks.push_back({{"name", "perturbed_datum"}, {"samples", n}, {"pass", false}, {"witness", e.witness}});
  }
  o.report["displacement"] = table.displacement;
  o.report["checks"] = checks;
  o.status = all_pass(checks) ? kPass : kCheckFailed;

  std::ostringstream csv;
  csv << "x,phi,depth,iterations,diameter,bound,converged\n";
  for (const auto& e : table.entries)
    csv << to_string(e.x) << "," << to_string(e.phi) << "," << e.depth << "," << e.iterations << "," << fmt(e.diameter)
        << "," << fmt(e.bound) << "," << e.converged << "\n";
  o.artifacts.push_back({"conjugacy.csv", csv.str()});
  if (r.svg()) {
    CirclePlot plot;
    plot.dots(r.d.net_points(), "#000");
    plot.dots(table.image(), "#d95f02", 10, 2);
    o.artifacts.push_back({"overlay.svg", plot.str()});
  }
  return o;
}

Outcome zoo_list_cmd(const Config&) {
  Outcome o;
  json systems = json::array();
  for (const auto& name : zoo_names())
    systems.push_back({{"kind", name}, {"defaults", system_defaults(name)}, {"lambda_target", default_lambda(name)}});
  o.report["systems"] = systems;
  return o;
}

}  // namespace

json defaults() {
  return {{"system", system_defaults("schottky")},
          {"lambda_target", default_lambda("schottky")},
          {"net_depth", 5},
          {"seed", 1},
          {"points", 100},
          {"depth", 20},
          {"cap", 200},
          {"n_max", 4},
          {"max_chain", 3},
          {"prefix_depth", 20},
          {"samples", 200},
          {"tol", 1e-9},
          {"invariance_tol", 1e-9},
          {"equivariance_tol", 1e-6},
          {"max_depth", 200},
          {"N", 1},
          {"shrink_fraction", 0.1},
          {"perturbation", perturbation_defaults("jitter")},
          {"svg", true}};
}

Config materialize(const json& raw) {
  if (!raw.is_object()) throw SchemaError("/", "config must be a JSON object");
  json def = defaults();
  json rest = raw;
  def["system"] = materialize_system(raw.contains("system") ? raw["system"] : json::object(), "/system");
  rest.erase("system");
  def["lambda_target"] = default_lambda(def["system"]["kind"].get<std::string>());
  if (raw.contains("perturbation")) {
    const auto& p = raw["perturbation"];
    if (!p.is_object()) throw SchemaError("/perturbation", "expected object, got " + type_name(p));
    if (p.contains("family") && !p["family"].is_string()) throw SchemaError("/perturbation/family", "expected string");
    std::string family = p.value("family", "jitter");
    def["perturbation"] = perturbation_defaults(family);
    if (def["perturbation"].is_null()) throw SchemaError("/perturbation/family", "unknown family '" + family + "'");
  }
  merge(def, rest, "");

  if (!(def["lambda_target"].get<double>() > 1)) throw SchemaError("/lambda_target", "must exceed 1");
  for (const char* key : {"net_depth", "points", "depth", "cap", "n_max", "max_chain", "prefix_depth", "samples",
                          "max_depth", "N"})
    if (def[key].get<long>() < 1) throw SchemaError(std::string("/") + key, "must be at least 1");
  if (def["seed"].get<long>() < 0) throw SchemaError("/seed", "must be non-negative");
  for (const char* key : {"tol", "invariance_tol", "equivariance_tol"})
    if (!(def[key].get<double>() > 0)) throw SchemaError(std::string("/") + key, "must be positive");
  double f = def["shrink_fraction"].get<double>();
  if (!(f > 0 && f < 0.8)) throw SchemaError("/shrink_fraction", "must lie in (0, 0.8)");
  const auto& p = def["perturbation"];
  if (p.contains("magnitude") && p["magnitude"].get<double>() < 0) throw SchemaError("/perturbation/magnitude", "must be >= 0");
  if (p.contains("seed") && p["seed"].get<long>() < 0) throw SchemaError("/perturbation/seed", "must be non-negative");
  if (p.contains("width") && !(p["width"].get<double>() > 0)) throw SchemaError("/perturbation/width", "must be positive");
  return Config{def, ""};
}

Config parse_config(const std::string& text) {
  json raw;
  try {
    raw = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw SchemaError(std::to_string(line) + ":" + std::to_string(col), "malformed JSON");
  }
  return materialize(raw);
}

ActionSystem build_system(const json& node) {
  const auto kind = node["kind"].get<std::string>();
  if (kind == "cyclic_hyperbolic") return make_cyclic_hyperbolic(node["m"].get<double>());
  if (kind == "covered_cyclic")
    return make_covered_cyclic(shared(make_cyclic_hyperbolic(node["m"].get<double>())), node["k"].get<int>());
  if (kind == "schottky") return make_schottky(default_schottky_generators(node["m"].get<double>()), node["shrink"].get<double>());
  if (kind == "free_boundary") return make_free_boundary(node["k"].get<int>(), node["a"].get<double>());
  if (kind == "zn_projective") return make_zn_projective(node["diagonals"].get<std::vector<Vec>>());
  if (kind == "product")
    return make_product(shared(build_system(node["first"])), shared(build_system(node["second"])), node["swap"].get<bool>());
  throw SchemaError("/system/kind", "unknown system '" + kind + "'");
}

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"zoo-list", "verify-expansion", "codes", "certify-shyp", "coding-map", "stability"};
  return c;
}

Outcome run(const std::string& command, const Config& cfg) {
  Outcome o;
  try {
    if (command == "zoo-list") o = zoo_list_cmd(cfg);
    else if (command == "verify-expansion") o = verify_cmd(cfg);
    else if (command == "codes") o = codes_cmd(cfg);
    else if (command == "certify-shyp") o = certify_cmd(cfg);
    else if (command == "coding-map") o = coding_map_cmd(cfg);
    else if (command == "stability") o = stability_cmd(cfg);
    else throw SchemaError("command", "unknown command '" + command + "'");
  } catch (const SchemaError&) {
    throw;
  } catch (const ConstructionError& e) {
    o = Outcome{kCheckFailed, {{"error", {{"type", "construction"}, {"message", e.what()}, {"witness", e.witness}}}}, {}};
  } catch (const Unsupported& e) {
    o = Outcome{kRuntime, {{"error", {{"type", "unsupported"}, {"message", e.what()}}}}, {}};
  } catch (const Error& e) {
    o = Outcome{kCheckFailed, {{"error", {{"type", "failed"}, {"message", e.what()}}}}, {}};
  }
  o.report["schema_version"] = kSchemaVersion;
  o.report["command"] = command;
  o.report["config"] = cfg.settings;
  o.report["pass"] = o.status == kPass;
  return o;
}

void write_outcome(const Outcome& o, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& content) {
    std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
    if (!f) throw Error("cannot write " + name + " under " + dir);
    f << content;
  };
  put("report.json", o.report.dump(2) + "\n");
  for (const auto& a : o.artifacts) put(a.name, a.content);
}

int main(int argc, char** argv) {
  CLI::App app{"Expanding group actions: expansion data, codings and stability checks"};
  std::string command, config_path, out = "shyp-out";
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> depth, cap;
  std::optional<double> tol;
  app.add_option("command", command, "One of: zoo-list, verify-expansion, codes, certify-shyp, coding-map, stability")
      ->required()
      ->check(CLI::IsMember(commands()));
  app.add_option("--config", config_path, "JSON config file (defaults are used for missing fields)");
  app.add_option("--out", out, "Output directory for report.json, CSV and SVG files");
  app.add_option("--seed", seed, "Seed, overrides the config");
  app.add_option("--depth", depth, "Code depth, overrides the config");
  app.add_option("--cap", cap, "Code enumeration cap, overrides the config");
  app.add_option("--tol", tol, "Tolerance, overrides the config");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsage;
  }

  Config cfg;
  try {
    std::string text = "{}";
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw SchemaError(config_path, "cannot open config");
      std::ostringstream ss;
      ss << f.rdbuf();
      text = ss.str();
    }
    cfg = parse_config(text);
    // flags override the file, then the result is validated again
    json raw = cfg.settings;
    if (seed) raw["seed"] = *seed;
    if (depth) raw["depth"] = *depth;
    if (cap) raw["cap"] = *cap;
    if (tol) raw["tol"] = *tol;
    cfg = materialize(raw);
  } catch (const SchemaError& e) {
    std::cerr << "config error at " << e.what() << "\n";
    return kUsage;
  }
  cfg.out = out;

  Outcome o;
  try {
    o = run(command, cfg);
  } catch (const SchemaError& e) {
    std::cerr << "config error at " << e.what() << "\n";
    return kUsage;
  }
  try {
    write_outcome(o, out);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kRuntime;
  }
  if (command == "zoo-list")
    for (const auto& s : o.report["systems"]) std::cout << s["kind"].get<std::string>() << "\n";
  std::cout << command << ": " << (o.status == kPass ? "PASS" : "FAIL") << " (" << (std::filesystem::path(out) / "report.json").string()
            << ")\n";
  if (o.report.contains("error")) std::cerr << o.report["error"]["message"].get<std::string>() << "\n";
  return o.status;
}

}  // namespace shyp::cli
