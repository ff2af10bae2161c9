#pragma once

#include "shyp/coding.hpp"

namespace shyp {

/// epsilon = (lambda - 1)/2 * min(delta / ((N+1) L^N), 1).
inline double perturbation_epsilon(double lambda, double L, double delta, int N) {
  if (N < 1) throw PreconditionError("N must be at least 1");
  if (!(lambda > 1) || !(L >= lambda) || !(delta > 0)) throw PreconditionError("need lambda > 1, L >= lambda, delta > 0");
  return 0.5 * (lambda - 1) * std::min(delta / ((N + 1) * std::pow(L, N)), 1.0);
}

inline double perturbation_epsilon(const ExpansionDatum& d, int N) { return perturbation_epsilon(d.lambda, d.L, d.delta, N); }

/// Sample of K = closed delta-neighborhood of the net: ball nets around spread centers.
inline std::vector<Point> k_net(const ActionSystem& sys, const ExpansionDatum& d, std::size_t centers = 200, int per_ball = 9) {
  std::vector<Point> out;
  for (auto i : spread_indices(d.net.size(), centers))
    for (auto& p : sys.space.ball_net(d.net[i].point, d.delta, per_ball)) out.push_back(std::move(p));
  return out;
}

/// Sampled d_Lip,K(f, g): sup of pointwise distance plus sup of difference-quotient discrepancy.
/// Pairs are consecutive K points (local quotients) and `random_pairs` seeded random pairs.
inline double lipschitz_distance(const MetricSpace& m, const PointMap& f, const PointMap& g, const std::vector<Point>& K,
                                 std::size_t random_pairs = 10000, std::uint64_t seed = 1) {
  if (K.size() < 2) throw PreconditionError("K-net needs at least two points");
  std::vector<Point> fk, gk;
  fk.reserve(K.size());
  gk.reserve(K.size());
  double sup_pt = 0;
  for (const auto& x : K) {
    fk.push_back(f(x));
    gk.push_back(g(x));
    sup_pt = std::max(sup_pt, m.distance(fk.back(), gk.back()));
  }
  double sup_q = 0;
  auto pair = [&](std::size_t a, std::size_t b) {
    double dx = m.distance(K[a], K[b]);
    if (dx <= 1e-14) return;
    sup_q = std::max(sup_q, std::abs(m.distance(fk[a], fk[b]) - m.distance(gk[a], gk[b])) / dx);
  };
  for (std::size_t a = 0; a + 1 < K.size(); ++a) pair(a, a + 1);
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::size_t> pick(0, K.size() - 1);
  for (std::size_t k = 0; k < random_pairs; ++k) pair(pick(gen), pick(gen));
  return sup_pt + sup_q;
}

/// rho' together with the base action, K, and the realized distances per symbol.
struct PerturbedSystem {
  ActionSystem base;
  ActionSystem perturbed;
  std::vector<Point> K;
  std::vector<double> realized;
  double epsilon = 0;
  int N = 1;

  double distance() const { return realized.empty() ? 0 : *std::max_element(realized.begin(), realized.end()); }
  int worst_symbol() const {
    return static_cast<int>(std::max_element(realized.begin(), realized.end()) - realized.begin());
  }
  bool admissible() const { return distance() < epsilon; }
  void require_admissible() const {
    if (!admissible())
      throw PreconditionError("perturbation not admissible: symbol " + base.alphabet.symbol_name(worst_symbol()) +
                              " has d_Lip,K = " + std::to_string(distance()) + " >= epsilon = " + std::to_string(epsilon));
  }
};

struct PerturbOptions {
  std::size_t centers = 200;
  int per_ball = 9;
  std::size_t random_pairs = 10000;
  std::uint64_t pair_seed = 1;
};

inline PerturbedSystem make_perturbed(const ActionSystem& base, ActionSystem perturbed, const ExpansionDatum& d, int N,
                                      const PerturbOptions& opt = {}) {
  if (perturbed.maps.size() != base.maps.size()) throw PreconditionError("perturbed system has a different generating set");
  PerturbedSystem ps;
  ps.base = base;
  ps.perturbed = std::move(perturbed);
  ps.N = N;
  ps.epsilon = perturbation_epsilon(d, N);
  ps.K = k_net(base, d, opt.centers, opt.per_ball);
  for (std::size_t s = 0; s < base.maps.size(); ++s)
    ps.realized.push_back(lipschitz_distance(base.space, base.maps[s], ps.perturbed.maps[s], ps.K, opt.random_pairs,
                                             opt.pair_seed + s));
  return ps;
}

inline PerturbedSystem make_perturbed(const ActionSystem& base, const Perturbation& p, const ExpansionDatum& d, int N,
                                      const PerturbOptions& opt = {}) {
  return make_perturbed(base, perturb(base, p), d, N, opt);
}

struct ConjugacyOptions {
  double tol = 1e-9;
  std::size_t max_depth = 200;
  int ball_count = 16;
};

struct ConjugacyEntry {
  Point x;
  Point phi;
  int depth = 0;  // net depth label of x
  std::size_t iterations = 0;
  double diameter = 0;  // measured diameter of the last image
  double bound = 0;     // 2 delta (L + eps) / lambda'^i at the last step
  bool converged = false;
  bool rate_ok = true;  // measured diameter never exceeded the bound
};

namespace detail {

/// rho'(s_0) o ... o rho'(s_i) applied to y, letters taken in code order.
inline Point compose_code(const ActionSystem& sys, const std::vector<int>& symbols, std::size_t upto, Point y) {
  for (std::size_t k = upto + 1; k-- > 0;) y = sys.maps[symbols[k]](y);
  return y;
}

inline ConjugacyEntry conjugacy_along(const PerturbedSystem& ps, const CodingContext& ctx, const Point& x,
                                      const CodePolicy& policy, const ConjugacyOptions& opt) {
  ps.require_admissible();
  const auto& d = *ctx.datum;
  const auto& m = ps.base.space;
  const double lam = d.lambda - ps.epsilon;
  const double Lp = d.L + ps.epsilon;
  ConjugacyEntry e;
  e.x = x;
  Code code = make_code(ctx, d.delta, x, 0, policy);
  std::vector<int> symbols;
  for (std::size_t i = 0; i < opt.max_depth; ++i) {
    // extend the code by one step
    int a;
    if (i == 0 && !policy.special) {
      a = policy.initial;
    } else {
      a = best_region(d, code.points[i], d.delta, policy.reverse_ties);
      if (a < 0) throw ConstructionError("code cannot be extended", to_string(code.points[i]));
    }
    code.alpha.push_back(a);
    code.points.push_back(ctx.step(a, code.points[i]));
    symbols.push_back(d.symbol[a]);
    const Point& p = code.points[i + 1];
    auto ball = m.ball_net(p, d.delta, opt.ball_count);
    std::vector<Point> img;
    img.reserve(ball.size());
    for (const auto& z : ball) img.push_back(compose_code(ps.perturbed, symbols, i, z));
    double diam = 0;
    for (std::size_t u = 0; u < img.size(); ++u)
      for (std::size_t v = u + 1; v < img.size(); ++v) diam = std::max(diam, m.distance(img[u], img[v]));
    e.phi = img.front();  // ball nets start at the center
    e.iterations = i + 1;
    e.diameter = diam;
    e.bound = 2 * d.delta * Lp / std::pow(lam, static_cast<double>(i));
    if (diam > e.bound * (1 + 1e-9) + 1e-15) e.rate_ok = false;
    if (diam < opt.tol) {
      e.converged = true;
      break;
    }
  }
  return e;
}

}  // namespace detail

/// phi(x) as the limit of rho'(c_i)(p_{i+1}) along a special delta-code of x for rho.
inline ConjugacyEntry conjugacy_point(const PerturbedSystem& ps, const CodingContext& ctx, const Point& x,
                                      const ConjugacyOptions& opt = {}) {
  return detail::conjugacy_along(ps, ctx, x, CodePolicy{}, opt);
}

/// Same limit along a different code: non-special initial index, reversed ties.
inline ConjugacyEntry conjugacy_point_alternative(const PerturbedSystem& ps, const CodingContext& ctx, const Point& x,
                                                  int initial, const ConjugacyOptions& opt = {}) {
  CodePolicy p;
  p.special = false;
  p.initial = initial;
  p.reverse_ties = true;
  return detail::conjugacy_along(ps, ctx, x, p, opt);
}

struct EquivarianceReport {
  double max_residual = 0;
  std::size_t worst_entry = 0;
  int worst_symbol = -1;
  double interpolation_error = 0;  // phi(rho(s) x) is computed directly, so no net matching is involved
};

/// max over s and table entries of d(rho'(s) phi(x), phi(rho(s) x)).
inline EquivarianceReport check_equivariance(const PerturbedSystem& ps, const CodingContext& ctx,
                                             const std::vector<ConjugacyEntry>& entries, const ConjugacyOptions& opt = {}) {
  EquivarianceReport r;
  const auto& m = ps.base.space;
  const int nsym = ps.base.alphabet.num_symbols();
  for (std::size_t k = 0; k < entries.size(); ++k)
    for (int s = 0; s < nsym; ++s) {
      Point lhs = ps.perturbed.maps[s](entries[k].phi);
      Point y = ctx.snap(ps.base.maps[s](entries[k].x));
      Point rhs = conjugacy_point(ps, ctx, y, opt).phi;
      double res = m.distance(lhs, rhs);
      if (res > r.max_residual) {
        r.max_residual = res;
        r.worst_entry = k;
        r.worst_symbol = s;
      }
    }
  return r;
}

struct ConjugacyTable {
  std::vector<ConjugacyEntry> entries;
  double displacement = 0;       // max d(x, phi(x))
  double max_stop_diameter = 0;
  bool all_converged = true;
  bool all_rate_ok = true;
  EquivarianceReport equivariance;

  std::vector<Point> image() const {
    std::vector<Point> out;
    for (const auto& e : entries) out.push_back(e.phi);
    return out;
  }
};

inline ConjugacyTable conjugacy_map(const PerturbedSystem& ps, const CodingContext& ctx, const std::vector<LimitSample>& net,
                                    const ConjugacyOptions& opt = {}, bool with_equivariance = true) {
  ps.require_admissible();
  ConjugacyTable t;
  for (const auto& s : net) {
    auto e = conjugacy_point(ps, ctx, s.point, opt);
    e.depth = s.depth;
    t.displacement = std::max(t.displacement, ps.base.space.distance(e.x, e.phi));
    t.max_stop_diameter = std::max(t.max_stop_diameter, e.diameter);
    t.all_converged = t.all_converged && e.converged;
    t.all_rate_ok = t.all_rate_ok && e.rate_ok;
    t.entries.push_back(std::move(e));
  }
  if (with_equivariance) t.equivariance = check_equivariance(ps, ctx, t.entries, opt);
  return t;
}

struct InjectivityReport {
  bool injective = true;
  std::size_t i = 0, j = 0;       // worst pair
  double min_image_distance = std::numeric_limits<double>::infinity();
  std::optional<ExpansivityWitness> witness;  // replay of the expansivity argument for a violating pair
};

/// Distinct entries at distance >= resolution must have images further apart than `collapse_tol`.
inline InjectivityReport check_injectivity(const MetricSpace& m, const std::vector<ConjugacyEntry>& entries, double resolution,
                                           double collapse_tol = 1e-12, const CodingContext* ctx = nullptr) {
  InjectivityReport r;
  for (std::size_t a = 0; a < entries.size(); ++a)
    for (std::size_t b = a + 1; b < entries.size(); ++b) {
      if (m.distance(entries[a].x, entries[b].x) < resolution) continue;
      double dphi = m.distance(entries[a].phi, entries[b].phi);
      if (dphi < r.min_image_distance) {
        r.min_image_distance = dphi;
        r.i = a;
        r.j = b;
      }
    }
  if (r.min_image_distance <= collapse_tol) {
    r.injective = false;
    if (ctx) r.witness = expansivity_witness(*ctx, entries[r.i].x, entries[r.j].x);
  }
  return r;
}

struct DisplacementReport {
  double max_displacement = 0;
  bool below_epsilon = false;
  bool below_delta_fifth = false;
};

inline DisplacementReport check_displacement(const MetricSpace& m, const std::vector<ConjugacyEntry>& entries, double epsilon,
                                             double delta) {
  DisplacementReport r;
  for (const auto& e : entries) r.max_displacement = std::max(r.max_displacement, m.distance(e.x, e.phi));
  r.below_epsilon = r.max_displacement < epsilon;
  r.below_delta_fifth = r.max_displacement < delta / 5;
  return r;
}

struct ContinuityReport {
  std::size_t k = 0;
  std::size_t pairs = 0;
  double max_source_distance = 0;  // largest d(x, y) among tested pairs
  double worst_slack = std::numeric_limits<double>::infinity();
  bool pass = true;
};

/// Modulus of continuity at scale k. For an entry x with special code (alpha, p), a second limit
/// point y = rho(c_k)(q) is built from a net point q near p_{k+1}; y shares the code of x through
/// index k and phi(y) = rho'(c_k)(phi(q)). Both phi-values lie in rho'(c_k)[B_{delta + d(p_{k+1}, q)}(p_{k+1})],
/// whose diameter is at most 2 (delta + d)(L + eps) / lambda'^k.
inline ContinuityReport check_continuity(const PerturbedSystem& ps, const CodingContext& ctx,
                                         const std::vector<ConjugacyEntry>& entries, std::size_t k,
                                         const ConjugacyOptions& opt = {}) {
  const auto& m = ps.base.space;
  const auto& d = *ctx.datum;
  const double lam = d.lambda - ps.epsilon;
  const double Lp = d.L + ps.epsilon;
  const auto& net = ctx.index.points();
  ContinuityReport r;
  r.k = k;
  for (const auto& e : entries) {
    Code code = make_code(ctx, d.delta, e.x, k + 1);
    const Point& p = code.points[k + 1];
    std::optional<std::size_t> near;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < net.size(); ++i) {
      double dist = m.distance(net[i], p);
      if (dist > 0 && dist < gap && detail::best_region(d, net[i], d.delta, false) >= 0) {
        gap = dist;
        near = i;
      }
    }
    if (!near || gap > d.delta) continue;
    std::vector<int> symbols;
    for (int a : code.alpha) symbols.push_back(d.symbol[a]);
    const Point& q = net[*near];
    Point y = detail::compose_code(ps.base, symbols, k, q);
    Point phi_y = detail::compose_code(ps.perturbed, symbols, k, conjugacy_point(ps, ctx, q, opt).phi);
    double bound = 2 * (d.delta + gap) * Lp / std::pow(lam, static_cast<double>(k));
    double slack = bound - m.distance(e.phi, phi_y);
    ++r.pairs;
    r.max_source_distance = std::max(r.max_source_distance, m.distance(e.x, y));
    r.worst_slack = std::min(r.worst_slack, slack);
    if (slack < 0) r.pass = false;
  }
  if (r.pairs == 0) r.worst_slack = 0;
  return r;
}

/// Datum for rho': regions int U_alpha^r cut down to N_{delta - r}(Lambda), lambda' = lambda - e,
/// L' = L + e with e the realized distance (< eps), delta' = 0.9 min(Lebesgue number over Lambda', 4 delta / 5).
inline ExpansionDatum perturbed_datum(const PerturbedSystem& ps, const ExpansionDatum& d, const ConjugacyTable& table, double r) {
  if (!(r > 0 && r < 0.8 * d.delta)) throw PreconditionError("r must lie in (0, 4 delta / 5)");
  ps.require_admissible();
  auto index = std::make_shared<NetIndex>(ps.base.space, d.net_points());
  const double reach = d.delta - r;
  Region near{[index, reach](const Point& x) { return reach - index->nearest(x).second; }, "N(Lambda)", false, 0};
  ExpansionDatum out;
  out.symbol = d.symbol;
  for (const auto& u : d.regions) out.regions.push_back(u.empty ? u : intersect(shrink_region(u, r), near));
  out.lambda = d.lambda - ps.distance();
  out.L = d.L + ps.distance();
  int top = 0;
  for (const auto& s : d.net) top = std::max(top, s.depth);
  // depth labels only carry over when the table covers the whole net, so the sample stays closed
  const bool closed = table.entries.size() == d.net.size();
  for (const auto& e : table.entries) out.net.push_back({e.phi, closed ? e.depth : top});
  auto [leb, w] = sampled_lebesgue(out.regions, out.net);
  if (!(leb > 0)) throw ConstructionError("shrunk cover misses a point of the perturbed limit set", to_string(out.net[w].point));
  out.lebesgue = leb;
  out.delta = 0.9 * std::min(leb, 0.8 * d.delta);
  return out;
}

}  // namespace shyp
