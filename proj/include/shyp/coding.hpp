#pragma once

#include <deque>
#include <optional>

#include "shyp/expansion.hpp"

namespace shyp {

/// A system together with a datum and a nearest-point index of the datum's net.
/// Backward orbits are unstable, so each step is snapped onto the net when it lands within `snap_tol`.
struct CodingContext {
  const ActionSystem* sys = nullptr;
  const ExpansionDatum* datum = nullptr;
  NetIndex index;
  double snap_tol = 1e-11;

  CodingContext(const ActionSystem& s, const ExpansionDatum& d) : sys(&s), datum(&d), index(s.space, d.net_points()) {}

  const Alphabet& alphabet() const { return sys->alphabet; }
  const MetricSpace& space() const { return sys->space; }

  /// rho(s_alpha^-1)(p), snapped.
  Point step(int alpha, const Point& p) const {
    Point q = sys->maps[sys->alphabet.inverse_symbol(datum->symbol.at(alpha))](p);
    return snap(std::move(q));
  }
  Point snap(Point q) const {
    if (index.empty()) return q;
    auto [i, d] = index.nearest(q);
    if (d <= snap_tol) return index.points()[i];
    return q;
  }
};

struct Code {
  std::vector<int> alpha;     // alpha(0..n-1)
  std::vector<Point> points;  // p_0 = x, ..., p_n
  bool special = false;
  double eta = 0;

  std::size_t depth() const { return alpha.size(); }
};

struct Ray {
  std::vector<Word> words;  // c_i = s_alpha(0) ... s_alpha(i), canonical
  std::size_t size() const { return words.size(); }
};

struct CodePolicy {
  bool special = true;
  int initial = -1;          // alpha(0) when not special
  bool reverse_ties = false;  // break margin ties toward the largest index instead of the smallest
};

namespace detail {

inline int best_region(const ExpansionDatum& d, const Point& p, double eta, bool reverse, double* margin_out = nullptr) {
  int best = -1;
  double bm = -std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(d.size());
  for (int k = 0; k < n; ++k) {
    int a = reverse ? n - 1 - k : k;
    if (d.regions[a].empty) continue;
    double m = d.regions[a].margin(p);
    if (m > bm) {
      bm = m;
      best = a;
    }
  }
  if (margin_out) *margin_out = bm;
  if (best < 0 || bm < eta) return -1;
  return best;
}

}  // namespace detail

/// Greedy (D, eta)-code: at each constrained step take the region of largest margin, smallest index on ties.
inline Code make_code(const CodingContext& ctx, double eta, const Point& x, std::size_t depth, const CodePolicy& policy = {}) {
  const auto& d = *ctx.datum;
  if (!(eta > 0 && eta <= d.delta * (1 + 1e-12))) throw PreconditionError("eta must lie in (0, delta]");
  ctx.space().check(x);
  Code c;
  c.eta = eta;
  c.special = policy.special;
  c.points.push_back(x);
  for (std::size_t i = 0; i < depth; ++i) {
    int a;
    if (i == 0 && !policy.special) {
      a = policy.initial;
      if (a < 0 || a >= static_cast<int>(d.size())) throw PreconditionError("initial index out of range");
    } else {
      double m = 0;
      a = detail::best_region(d, c.points[i], eta, policy.reverse_ties, &m);
      if (a < 0)
        throw ConstructionError("no region contains the eta-ball (best margin " + std::to_string(m) + ")",
                                std::to_string(i) + ":" + to_string(c.points[i]));
    }
    c.alpha.push_back(a);
    c.points.push_back(ctx.step(a, c.points[i]));
  }
  return c;
}

/// Re-checks the defining conditions of a code at a given eta; used for monotonicity in eta.
inline bool is_code(const CodingContext& ctx, const Code& c, double eta, double tol = 1e-9) {
  const auto& d = *ctx.datum;
  if (c.points.size() != c.alpha.size() + 1) return false;
  for (std::size_t i = 0; i < c.alpha.size(); ++i) {
    const auto& r = d.regions.at(c.alpha[i]);
    if ((i >= 1 || c.special) && (r.empty || r.margin(c.points[i]) < eta - tol)) return false;
    Point q = ctx.sys->maps[ctx.alphabet().inverse_symbol(d.symbol[c.alpha[i]])](c.points[i]);
    if (ctx.space().distance(q, c.points[i + 1]) > tol) return false;
  }
  return true;
}

inline Ray make_ray(const CodingContext& ctx, const Code& c) {
  const auto& A = ctx.alphabet();
  Ray r;
  Word w = A.identity();
  for (int a : c.alpha) {
    w = A.multiply(w, A.symbol(ctx.datum->symbol[a]));
    r.words.push_back(w);
  }
  return r;
}

struct CodeSet {
  std::vector<Code> codes;
  bool truncated = false;
};

/// Breadth-first enumeration of all (D, eta)-codes for x to the given depth; alpha(0) ranges over all of I.
inline CodeSet enumerate_codes(const CodingContext& ctx, double eta, const Point& x, std::size_t depth, std::size_t cap) {
  const auto& d = *ctx.datum;
  if (cap < 1) throw PreconditionError("cap must be positive");
  if (!(eta > 0 && eta <= d.delta * (1 + 1e-12))) throw PreconditionError("eta must lie in (0, delta]");
  CodeSet out;
  std::vector<Code> level;
  for (std::size_t a = 0; a < d.size(); ++a) {
    Code c;
    c.eta = eta;
    c.points.push_back(x);
    c.special = !d.regions[a].empty && d.regions[a].margin(x) >= eta;
    c.alpha.push_back(static_cast<int>(a));
    c.points.push_back(ctx.step(static_cast<int>(a), x));
    level.push_back(std::move(c));
  }
  if (depth == 0) {
    level.clear();
    Code c;
    c.eta = eta;
    c.points.push_back(x);
    level.push_back(c);
  }
  if (level.size() > cap) {
    level.resize(cap);
    out.truncated = true;
  }
  for (std::size_t i = 1; i < depth; ++i) {
    std::vector<Code> next;
    for (const auto& c : level) {
      const Point& p = c.points[i];
      for (std::size_t a = 0; a < d.size(); ++a) {
        if (d.regions[a].empty || d.regions[a].margin(p) < eta) continue;
        Code e = c;
        e.alpha.push_back(static_cast<int>(a));
        e.points.push_back(ctx.step(static_cast<int>(a), p));
        next.push_back(std::move(e));
        if (next.size() > cap) break;
      }
      if (next.size() > cap) break;
    }
    if (next.size() > cap) {
      next.resize(cap);
      out.truncated = true;
    }
    level = std::move(next);
  }
  out.codes = std::move(level);
  return out;
}

struct NestedStep {
  std::size_t i = 0;
  double containment_slack = 0;  // eta - max d(rho(s_i) z, p_i) over the net of B_eta(p_{i+1})
  double diameter = 0;           // of rho(c_i)[B_eta(p_{i+1})], measured on the pushed net
  double bound = 0;              // 2 L eta / lambda^i
  double center_residual = 0;    // d(rho(c_i) p_{i+1}, x)
  bool nested = false;
  bool shrinking = false;
};

/// Images rho(c_i)[B_eta(p_{i+1})] represented by pushing a ball net forward through rho(c_i).
inline std::vector<NestedStep> nested_images(const CodingContext& ctx, const Code& c, double eta, std::size_t depth,
                                             int net_count = 64, double tol = 1e-9) {
  const auto& sys = *ctx.sys;
  const auto& d = *ctx.datum;
  const auto& m = sys.space;
  depth = std::min(depth, c.depth());
  Ray ray = make_ray(ctx, c);
  std::vector<NestedStep> out;
  for (std::size_t i = 0; i < depth; ++i) {
    NestedStep st;
    st.i = i;
    auto ball = m.ball_net(c.points[i + 1], eta, net_count);
    const int s = d.symbol[c.alpha[i]];
    double worst = 0;
    for (const auto& z : ball) worst = std::max(worst, m.distance(sys.maps[s](z), c.points[i]));
    st.containment_slack = eta - worst;
    std::vector<Point> img;
    img.reserve(ball.size());
    for (const auto& z : ball) img.push_back(apply(sys, ray.words[i], z));
    double diam = 0;
    for (std::size_t a = 0; a < img.size(); ++a)
      for (std::size_t b = a + 1; b < img.size(); ++b) diam = std::max(diam, m.distance(img[a], img[b]));
    st.diameter = diam;
    st.bound = 2 * d.L * eta / std::pow(d.lambda, static_cast<double>(i));
    st.center_residual = m.distance(img.front(), c.points[0]);
    st.nested = i == 0 || st.containment_slack >= -tol;
    st.shrinking = st.diameter <= st.bound * (1 + 1e-12) + tol;
    out.push_back(st);
  }
  return out;
}

struct ExpansivityWitness {
  std::size_t n = 0;
  double separation = 0;
};

/// Follows a greedy delta-code of x and returns the first n with d(p_n, q_n) >= delta (1 - 1e-6),
/// where q is the same backward orbit applied to y.
inline ExpansivityWitness expansivity_witness(const CodingContext& ctx, const Point& x, const Point& y,
                                              std::size_t max_depth = 200) {
  const auto& d = *ctx.datum;
  const auto& m = ctx.space();
  if (m.distance(x, y) == 0) throw PreconditionError("expansivity needs distinct points");
  const double target = d.delta * (1 - 1e-6);
  Point p = x, q = y;
  for (std::size_t n = 0; n <= max_depth; ++n) {
    double sep = m.distance(p, q);
    if (sep >= target) return {n, sep};
    int a = detail::best_region(d, p, d.delta, false);
    if (a < 0) throw ConstructionError("no region contains the delta-ball", to_string(p));
    p = ctx.step(a, p);
    q = ctx.step(a, q);
  }
  throw NotFound("no separating element within depth " + std::to_string(max_depth));
}

struct QuasigeodesicReport {
  double slope = 0;  // log lambda / log L
  double worst_slack = std::numeric_limits<double>::infinity();
  std::size_t worst_i = 0, worst_j = 0;
  std::size_t pairs = 0;
  bool partial = false;  // some word-metric values were unknown
  bool pass = true;
};

inline double qg_slope(double lambda, double L) { return L <= lambda ? 1.0 : std::log(lambda) / std::log(L); }

/// Checks slope (i-j) <= d(c_i, c_j) <= i - j for every pair along the ray.
inline QuasigeodesicReport quasigeodesic_check(const Alphabet& A, const ExpansionDatum& d, const Ray& ray) {
  QuasigeodesicReport r;
  r.slope = qg_slope(d.lambda, d.L);
  for (std::size_t i = 0; i < ray.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      auto dist = A.word_metric(ray.words[i], ray.words[j]);
      if (!dist) {
        r.partial = true;
        continue;
      }
      double gap = static_cast<double>(i - j);
      double slack = std::min(static_cast<double>(*dist) - r.slope * gap, gap - static_cast<double>(*dist));
      ++r.pairs;
      if (slack < r.worst_slack) {
        r.worst_slack = slack;
        r.worst_i = i;
        r.worst_j = j;
      }
      if (slack < -1e-12) r.pass = false;
    }
  if (r.pairs == 0) r.worst_slack = 0;
  return r;
}

/// Hausdorff distance of the two word-image sets in the word metric. The identity is
/// included in both sets by default (rays start at distance one from it). Truncation would
/// strand the last few words of one ray, so only the first `window` fraction of each ray
/// is measured against the whole of the other.
inline std::optional<long> fellow_travel_distance(const Alphabet& A, const Ray& a, const Ray& b, bool include_identity = true,
                                                  double window = 0.75) {
  std::vector<Word> sa = a.words, sb = b.words;
  if (include_identity) {
    sa.insert(sa.begin(), A.identity());
    sb.insert(sb.begin(), A.identity());
  }
  if (sa.empty() || sb.empty()) return std::nullopt;
  long h = 0;
  for (int pass = 0; pass < 2; ++pass) {
    const auto& u = pass ? sb : sa;
    const auto& v = pass ? sa : sb;
    std::size_t upto = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(window * u.size())));
    for (std::size_t k = 0; k < upto && k < u.size(); ++k) {
      const auto& w = u[k];
      long best = std::numeric_limits<long>::max();
      for (const auto& z : v) {
        auto dist = A.word_metric(w, z);
        if (!dist) return std::nullopt;
        best = std::min(best, *dist);
        if (best == 0) break;
      }
      h = std::max(h, best);
    }
  }
  return h;
}

/// One step of the generating relation: tails P of a and Q of b with Hausdorff distance <= N.
/// Tails stand in for infinite subsets: both must have two or more elements, one in the last quarter.
inline bool approx_equivalent(const Alphabet& A, const Ray& a, const Ray& b, long N) {
  const std::size_t na = a.size(), nb = b.size();
  if (na < 4 || nb < 4) return false;
  auto near = [&](const Word& w, const Ray& r, const std::vector<std::size_t>& ids) {
    for (auto j : ids) {
      auto dist = A.word_metric(w, r.words[j]);
      if (dist && *dist <= N) return true;
    }
    return false;
  };
  std::vector<std::size_t> ta, tb;
  for (std::size_t i = na / 2; i < na; ++i) ta.push_back(i);
  for (std::size_t i = nb / 2; i < nb; ++i) tb.push_back(i);
  std::vector<std::size_t> P, Q;
  for (auto i : ta)
    if (near(a.words[i], b, tb)) P.push_back(i);
  for (auto j : tb)
    if (near(b.words[j], a, P)) Q.push_back(j);
  auto unbounded = [](const std::vector<std::size_t>& s, std::size_t n) { return s.size() >= 2 && s.back() >= (3 * n) / 4; };
  return unbounded(P, na) && unbounded(Q, nb);
}

struct EquivalenceResult {
  bool equivalent = false;
  std::vector<std::size_t> chain;  // pool indices from a to b
  std::size_t length() const { return chain.empty() ? 0 : chain.size() - 1; }
};

/// Shortest chain a = r_0, r_1, ..., r_k = b through the pool with consecutive rays related, k <= max_chain.
inline EquivalenceResult n_equivalence(const Alphabet& A, std::size_t a, std::size_t b, const std::vector<Ray>& pool,
                                       long N, std::size_t max_chain = 3) {
  if (a >= pool.size() || b >= pool.size()) throw PreconditionError("pool must contain both rays");
  EquivalenceResult res;
  if (a == b) {
    res.equivalent = true;
    res.chain = {a};
    return res;
  }
  std::vector<long> parent(pool.size(), -1);
  std::vector<std::size_t> dist(pool.size(), std::numeric_limits<std::size_t>::max());
  std::deque<std::size_t> queue{a};
  dist[a] = 0;
  while (!queue.empty()) {
    auto u = queue.front();
    queue.pop_front();
    if (dist[u] >= max_chain) continue;
    for (std::size_t v = 0; v < pool.size(); ++v) {
      if (dist[v] != std::numeric_limits<std::size_t>::max()) continue;
      if (!approx_equivalent(A, pool[u], pool[v], N)) continue;
      dist[v] = dist[u] + 1;
      parent[v] = static_cast<long>(u);
      if (v == b) {
        res.equivalent = true;
        for (long w = static_cast<long>(b); w >= 0; w = parent[w]) res.chain.push_back(static_cast<std::size_t>(w));
        std::reverse(res.chain.begin(), res.chain.end());
        return res;
      }
      queue.push_back(v);
    }
  }
  return res;
}

struct PointCertificate {
  std::size_t point = 0;
  std::size_t codes = 0;
  bool truncated = false;
  long fellow_travel = 0;   // max pairwise distance, -1 when unknown
  std::size_t worst_a = 0, worst_b = 0;
  std::size_t max_chain = 0;  // longest chain needed among pairs, 0 if some pair is not equivalent
  bool meandering = true;
};

struct ShypCertificate {
  std::vector<PointCertificate> points;
  long N = 0;            // fellow-travel constant over all points
  long N_max = 0;
  bool fellow_travel_ok = false;  // S-hyperbolicity verdict
  bool meandering_ok = false;     // chain-equivalence verdict at N_max
  std::size_t max_chain = 0;
  bool truncated = false;
  std::size_t depth = 0, cap = 0;
  std::size_t worst_point = 0;
};

/// Desk-scale certificate: enumerate codes at each net point, compare all rays pairwise.
inline ShypCertificate shyp_certificate(const CodingContext& ctx, const std::vector<Point>& net, std::size_t depth,
                                        std::size_t cap, long N_max, std::size_t max_chain = 3) {
  const auto& A = ctx.alphabet();
  ShypCertificate cert;
  cert.N_max = N_max;
  cert.depth = depth;
  cert.cap = cap;
  cert.fellow_travel_ok = true;
  cert.meandering_ok = true;
  for (std::size_t k = 0; k < net.size(); ++k) {
    auto set = enumerate_codes(ctx, ctx.datum->delta, net[k], depth, cap);
    std::vector<Ray> rays;
    for (const auto& c : set.codes) rays.push_back(make_ray(ctx, c));
    PointCertificate pc;
    pc.point = k;
    pc.codes = rays.size();
    pc.truncated = set.truncated;
    pc.max_chain = rays.size() > 1 ? 1 : 0;
    bool unknown = false;
    for (std::size_t a = 0; a < rays.size(); ++a)
      for (std::size_t b = a + 1; b < rays.size(); ++b) {
        auto ft = fellow_travel_distance(A, rays[a], rays[b]);
        if (!ft) {
          unknown = true;
          continue;
        }
        if (*ft > pc.fellow_travel) {
          pc.fellow_travel = *ft;
          pc.worst_a = a;
          pc.worst_b = b;
        }
        if (*ft > N_max) {
          auto eq = n_equivalence(A, a, b, rays, N_max, max_chain);
          if (!eq.equivalent)
            pc.meandering = false;
          else
            pc.max_chain = std::max(pc.max_chain, eq.length());
        }
      }
    if (unknown) pc.fellow_travel = -1;
    if (!pc.meandering) pc.max_chain = 0;
    cert.truncated = cert.truncated || pc.truncated;
    if (pc.fellow_travel < 0 || pc.fellow_travel > N_max) cert.fellow_travel_ok = false;
    if (!pc.meandering) cert.meandering_ok = false;
    if (pc.fellow_travel > cert.N || pc.fellow_travel < 0) {
      cert.N = pc.fellow_travel < 0 ? cert.N : pc.fellow_travel;
      cert.worst_point = k;
    }
    cert.max_chain = std::max(cert.max_chain, pc.max_chain);
    cert.points.push_back(pc);
  }
  return cert;
}

struct RecurrenceWitness {
  std::size_t i1 = 0;
  std::vector<std::size_t> returns;  // i_j, j >= 2
  std::vector<Word> h;               // h_j = c_{i_j} c_{i_1}^-1
  std::vector<double> residuals;     // d(rho(h_j) x, x)
};

/// Nearest-return search along a code: for each i_1 the later indices whose p_{i+1} sets a new
/// minimum distance to p_{i_1+1}; keeps the i_1 whose last residual is smallest.
inline RecurrenceWitness recurrence_witness(const CodingContext& ctx, const Point& x, double eta, std::size_t depth) {
  const auto& d = *ctx.datum;
  if (!(eta > 0 && eta <= d.delta)) throw PreconditionError("eta must lie in (0, delta]");
  const auto& sys = *ctx.sys;
  const auto& A = sys.alphabet;
  Code c = make_code(ctx, eta, x, depth);
  Ray ray = make_ray(ctx, c);
  std::optional<RecurrenceWitness> best;
  for (std::size_t i1 = 0; i1 + 1 < depth / 2 + 1; ++i1) {
    RecurrenceWitness w;
    w.i1 = i1;
    const Point& q = c.points[i1 + 1];
    double record = eta / 2;
    for (std::size_t i = i1 + 1; i < depth; ++i) {
      double dist = sys.space.distance(c.points[i + 1], q);
      if (dist < record || (dist == 0 && record == 0)) {
        record = dist;
        w.returns.push_back(i);
        Word h = A.multiply(ray.words[i], A.inverse(ray.words[i1]));
        w.h.push_back(h);
        // rho(h_j) x = rho(c_{i_j}) p_{i_1+1}: evaluated forward
        w.residuals.push_back(sys.space.distance(apply(sys, ray.words[i], q), x));
      }
    }
    if (w.residuals.empty()) continue;
    if (!best || w.residuals.back() < best->residuals.back() ||
        (w.residuals.back() == best->residuals.back() && w.residuals.size() > best->residuals.size()))
      best = std::move(w);
  }
  if (!best) throw NotFound("no near return within depth " + std::to_string(depth));
  return *best;
}

struct CodingResult {
  Letters prefix;
  Letters alternative;  // from a second code with reversed ties and another initial index
  bool stable = true;
  std::size_t code_depth = 0;
};

/// pi(x) truncated to prefix_depth letters, from a greedy special code long enough for the ray tail to agree.
inline CodingResult coding_map(const CodingContext& ctx, const Point& x, std::size_t prefix_depth) {
  const auto& A = ctx.alphabet();
  const auto& d = *ctx.datum;
  if (!A.is_free()) throw Unsupported("coding map needs a free or cyclic presentation");
  double slope = qg_slope(d.lambda, d.L);
  std::size_t depth = std::min<std::size_t>(2 * static_cast<std::size_t>(std::ceil(prefix_depth / slope)) + 4, 600);
  CodingResult r;
  r.code_depth = depth;
  Code c = make_code(ctx, d.delta, x, depth);
  r.prefix = boundary_prefix(A, make_ray(ctx, c).words, prefix_depth);
  CodePolicy alt;
  alt.special = false;
  alt.reverse_ties = true;
  alt.initial = (c.alpha[0] + 1) % static_cast<int>(d.size());
  Code c2 = make_code(ctx, d.delta, x, depth, alt);
  r.alternative = boundary_prefix(A, make_ray(ctx, c2).words, prefix_depth);
  std::size_t k = std::min(r.prefix.size(), r.alternative.size());
  r.stable = k + 2 >= prefix_depth && std::equal(r.prefix.begin(), r.prefix.begin() + (k > 2 ? k - 2 : 0), r.alternative.begin());
  return r;
}

}  // namespace shyp
