#pragma once

#include <iomanip>

#include "shyp/zoo.hpp"

namespace shyp {

/// Nearest-point lookup on a finite sample; sorted search on circles, linear scan elsewhere.
class NetIndex {
 public:
  NetIndex() = default;
  NetIndex(MetricSpace m, std::vector<Point> pts) : m_(std::move(m)), pts_(std::move(pts)) {
    if (m_.kind() == SpaceKind::DisjointUnion) {
      std::vector<std::vector<Point>> split(m_.components().size());
      std::vector<std::vector<std::size_t>> ids(split.size());
      for (std::size_t i = 0; i < pts_.size(); ++i) {
        split.at(pts_[i].component).push_back(Point{0, pts_[i].coord});
        ids[pts_[i].component].push_back(i);
      }
      for (std::size_t c = 0; c < split.size(); ++c) parts_.emplace_back(m_.component(c), split[c]);
      part_ids_ = std::move(ids);
    } else if (m_.is_circle_like()) {
      order_.resize(pts_.size());
      std::iota(order_.begin(), order_.end(), 0);
      std::sort(order_.begin(), order_.end(), [&](auto a, auto b) { return angle(pts_[a]) < angle(pts_[b]); });
      for (auto i : order_) angles_.push_back(angle(pts_[i]));
    }
  }

  const std::vector<Point>& points() const { return pts_; }
  bool empty() const { return pts_.empty(); }

  /// (index, distance) of the nearest sample.
  std::pair<std::size_t, double> nearest(const Point& x) const {
    if (pts_.empty()) throw PreconditionError("nearest point in an empty net");
    if (m_.kind() == SpaceKind::DisjointUnion) {
      const auto& part = parts_.at(x.component);
      if (part.empty()) return {0, m_.gap()};
      auto [i, d] = part.nearest(Point{0, x.coord});
      return {part_ids_[x.component][i], d};
    }
    if (m_.is_circle_like()) {
      double t = angle(x);
      std::size_t n = angles_.size();
      std::size_t k = std::lower_bound(angles_.begin(), angles_.end(), t) - angles_.begin();
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c : {k % n, (k + n - 1) % n}) {
        double d = m_.raw_distance(x, pts_[order_[c]]);
        if (d < bd) {
          bd = d;
          best = order_[c];
        }
      }
      return {best, bd};
    }
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      double d = m_.raw_distance(x, pts_[i]);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return {best, bd};
  }

 private:
  MetricSpace m_;
  std::vector<Point> pts_;
  std::vector<std::size_t> order_;
  std::vector<double> angles_;
  std::vector<NetIndex> parts_;
  std::vector<std::vector<std::size_t>> part_ids_;
};

/// D = (I, U, Sigma, delta, L, lambda): region U_alpha with symbol s_alpha for each index alpha.
struct ExpansionDatum {
  std::vector<int> symbol;
  std::vector<Region> regions;
  double delta = 0;
  double L = 0;
  double lambda = 0;
  double lebesgue = 0;
  std::vector<LimitSample> net;

  std::size_t size() const { return symbol.size(); }
  std::vector<Point> net_points() const {
    std::vector<Point> out;
    for (const auto& s : net) out.push_back(s.point);
    return out;
  }
};

struct BuildOptions {
  int net_depth = 5;
  int grid = 20000;
  double delta_fraction = 0.9;
  double lipschitz_margin = 1.01;
  int lipschitz_samples = 400;
};

/// Sampled Lebesgue number over the net: min_x max_alpha margin_alpha(x), with its witness.
inline std::pair<double, std::size_t> sampled_lebesgue(const std::vector<Region>& regions,
                                                       const std::vector<LimitSample>& net) {
  double leb = std::numeric_limits<double>::infinity();
  std::size_t witness = 0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : regions) best = std::max(best, r.margin(net[i].point));
    if (best < leb) {
      leb = best;
      witness = i;
    }
  }
  return {leb, witness};
}

inline std::vector<std::size_t> spread_indices(std::size_t n, std::size_t count) {
  std::vector<std::size_t> out;
  if (n == 0) return out;
  if (count >= n) {
    out.resize(n);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  for (std::size_t i = 0; i < count; ++i) out.push_back(i * n / count);
  return out;
}

namespace detail {

/// Components of {theta : eps(rho(s^-1), theta) > lambda} meeting the net, as open arcs.
inline std::vector<Region> sublevel_arcs(const ActionSystem& sys, int s, double lambda_target,
                                         const std::vector<LimitSample>& net, int grid) {
  const int f = sys.alphabet.inverse_symbol(s);
  auto eps = [&](double t) { return sys.lipschitz(f, circle_point(t)); };
  std::vector<char> mask(grid);
  for (int i = 0; i < grid; ++i) mask[i] = eps(kTwoPi * i / grid) > lambda_target;
  std::vector<Region> out;
  if (std::all_of(mask.begin(), mask.end(), [](char c) { return c; }))
    throw ConstructionError("expansion region is the whole circle", sys.alphabet.symbol_name(s));
  if (std::none_of(mask.begin(), mask.end(), [](char c) { return c; })) return out;
  int start = 0;
  while (mask[start]) ++start;  // a point outside every run
  auto edge = [&](double lo, double hi) {
    // eps crosses lambda_target between lo and hi
    bool lo_in = eps(lo) > lambda_target;
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (lo + hi);
      if ((eps(mid) > lambda_target) == lo_in)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  };
  for (int k = 1; k <= grid; ++k) {
    int i = (start + k) % grid;
    int prev = (i + grid - 1) % grid;
    if (mask[i] && !mask[prev]) {
      int j = i;
      int len = 0;
      while (mask[(j + 1) % grid]) {
        j = (j + 1) % grid;
        ++len;
      }
      double a0 = kTwoPi * (start + k - 1) / grid;
      double lo = edge(a0, a0 + kTwoPi / grid);
      double b0 = kTwoPi * (start + k + len) / grid;
      double hi = edge(b0, b0 + kTwoPi / grid);
      Region arc = arc_between(sys.space, lo, hi);
      bool meets = false;
      for (const auto& p : net)
        if (arc.contains(p.point)) {
          meets = true;
          break;
        }
      if (meets) out.push_back(arc);
    }
  }
  return out;
}

inline ExpansionDatum finish_datum(const ActionSystem& sys, std::vector<int> symbol, std::vector<Region> regions,
                                   std::vector<LimitSample> net, double lambda, const BuildOptions& opt) {
  ExpansionDatum d;
  d.symbol = std::move(symbol);
  d.regions = std::move(regions);
  d.net = std::move(net);
  d.lambda = lambda;
  auto [leb, w] = sampled_lebesgue(d.regions, d.net);
  if (!(leb > 0)) throw ConstructionError("limit point not covered by any expansion region", to_string(d.net[w].point));
  d.lebesgue = leb;
  d.delta = opt.delta_fraction * leb;
  double L = 0;
  for (auto i : spread_indices(d.net.size(), opt.lipschitz_samples))
    for (const auto& y : sys.space.ball_net(d.net[i].point, d.delta, 16))
      for (int s = 0; s < sys.alphabet.num_symbols(); ++s) L = std::max(L, sys.lipschitz(s, y));
  d.L = std::max(L * opt.lipschitz_margin, lambda);
  return d;
}

}  // namespace detail

inline ExpansionDatum build_expansion_datum(const ActionSystem& sys, double lambda_target, const BuildOptions& opt = {}) {
  if (!(lambda_target > 1)) throw PreconditionError("lambda target must exceed 1");
  if (!sys.limit_net) throw Unsupported("system has no limit-set sampler: " + sys.name);
  auto net = sys.limit_net(opt.net_depth);
  if (net.empty()) throw PreconditionError("empty limit net");
  const int nsym = sys.alphabet.num_symbols();
  std::vector<int> symbol;
  std::vector<Region> regions;
  auto add_empty = [&](int s) {
    symbol.push_back(s);
    regions.push_back(empty_region(sys.space));
  };

  switch (sys.strategy) {
    case RegionStrategy::SublevelArcs: {
      for (int s = 0; s < nsym; ++s) {
        auto arcs = detail::sublevel_arcs(sys, s, lambda_target, net, opt.grid);
        if (arcs.empty()) add_empty(s);
        for (auto& a : arcs) {
          symbol.push_back(s);
          regions.push_back(std::move(a));
        }
      }
      return detail::finish_datum(sys, symbol, regions, net, lambda_target, opt);
    }
    case RegionStrategy::AnchoredBalls: {
      std::vector<char> used(nsym, 0);
      for (const auto& a : sys.anchors) {
        const int f = sys.alphabet.inverse_symbol(a.symbol);
        const Word fw = sys.alphabet.symbol(f);
        auto ok = [&](double r) {
          for (double frac : {0.25, 0.5, 0.75, 1.0})
            for (const auto& y : sys.space.ball_net(a.center, r * frac, 32))
              if (!(sys.expansion(fw, y) > lambda_target)) return false;
          return true;
        };
        if (!ok(1e-9)) throw ConstructionError("anchor is not expanded beyond the target", to_string(a.center));
        double lo = 1e-9, hi = sys.space.diameter() / 2;
        if (ok(hi)) lo = hi;
        for (int it = 0; it < 50 && hi - lo > 1e-12; ++it) {
          double mid = 0.5 * (lo + hi);
          if (ok(mid))
            lo = mid;
          else
            hi = mid;
        }
        symbol.push_back(a.symbol);
        regions.push_back(ball_region(sys.space, a.center, lo));
        used[a.symbol] = 1;
      }
      for (int s = 0; s < nsym; ++s)
        if (!used[s]) add_empty(s);
      return detail::finish_datum(sys, symbol, regions, net, lambda_target, opt);
    }
    case RegionStrategy::Cylinders: {
      const double a = sys.space.visual_parameter();
      if (lambda_target > a) throw ConstructionError("free boundary expands by exactly a", std::to_string(a));
      for (int s = 0; s < nsym; ++s) {
        symbol.push_back(s);
        regions.push_back(cylinder_region(sys.space, {sys.alphabet.symbol_letter(s)}));
      }
      ExpansionDatum d;
      d.symbol = symbol;
      d.regions = regions;
      d.net = net;
      d.lebesgue = sampled_lebesgue(regions, net).first;
      d.delta = opt.delta_fraction / (a * a);
      d.L = a;
      d.lambda = a;
      return d;
    }
    case RegionStrategy::Product: {
      const auto& pm = std::get<ProductModel>(sys.model);
      ExpansionDatum parts[2] = {build_expansion_datum(*pm.first, lambda_target, opt),
                                 build_expansion_datum(*pm.second, lambda_target, opt)};
      const int n1 = pm.first->alphabet.num_symbols();
      ExpansionDatum d;
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < parts[c].size(); ++i) {
          d.symbol.push_back(parts[c].symbol[i] + (c ? n1 : 0));
          d.regions.push_back(lift_region(sys.space, c, parts[c].regions[i]));
        }
        for (auto s : parts[c].net) {
          s.point.component = c;
          d.net.push_back(s);
        }
      }
      if (sys.alphabet.with_swap()) {
        d.symbol.push_back(sys.alphabet.swap_symbol());
        d.regions.push_back(empty_region(sys.space));
      }
      d.delta = std::min(parts[0].delta, parts[1].delta);
      d.L = std::max({parts[0].L, parts[1].L, 1.0});
      d.lambda = std::min(parts[0].lambda, parts[1].lambda);
      d.lebesgue = sampled_lebesgue(d.regions, d.net).first;
      return d;
    }
  }
  throw Unsupported("unknown region strategy");
}

/// Same datum with a strictly smaller delta.
inline ExpansionDatum refine_datum(ExpansionDatum d, double delta) {
  if (!(delta > 0 && delta < d.delta)) throw PreconditionError("refined delta must lie in (0, delta)");
  d.delta = delta;
  return d;
}

struct CheckResult {
  std::string check;
  std::string witness;
  double slack = 0;
  bool pass = false;
};

struct VerificationReport {
  std::vector<CheckResult> checks;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }
  const CheckResult& get(const std::string& name) const {
    for (const auto& c : checks)
      if (c.check == name) return c;
    throw NotFound("no check named " + name);
  }
  std::string csv() const {
    std::ostringstream os;
    os << "check,witness,slack,pass\n";
    os << std::setprecision(17);
    for (const auto& c : checks) os << c.check << ",\"" << c.witness << "\"," << c.slack << "," << (c.pass ? 1 : 0) << "\n";
    return os.str();
  }
  std::string summary() const {
    std::ostringstream os;
    std::size_t ok = std::count_if(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
    os << ok << "/" << checks.size() << " checks pass";
    for (const auto& c : checks)
      if (!c.pass) os << "; " << c.check << " fails at " << c.witness;
    return os.str();
  }
};

struct VerifyOptions {
  int samples = 200;
  double tol = 1e-9;
  double invariance_tol = 1e-9;  // nets of perturbed systems are only invariant to the conjugacy accuracy
};

/// Sampled verification of every condition in the definition of an expansion datum.
inline VerificationReport verify_expansion(const ActionSystem& sys, const ExpansionDatum& d, const VerifyOptions& opt = {}) {
  VerificationReport rep;
  const auto& m = sys.space;
  const int nsym = sys.alphabet.num_symbols();
  auto worst = [](CheckResult& c, double slack, const std::string& w) {
    if (slack < c.slack) {
      c.slack = slack;
      c.witness = w;
    }
  };

  {
    CheckResult c{"constants", "", std::min({d.lambda - 1.0, d.L - d.lambda, d.delta}), false};
    c.pass = d.lambda > 1 && d.L >= d.lambda && d.delta > 0;
    if (!c.pass) c.witness = "lambda>1, L>=lambda, delta>0";
    rep.checks.push_back(c);
  }
  {
    std::vector<char> seen(nsym, 0);
    for (int s : d.symbol) seen.at(s) = 1;
    CheckResult c{"sigma_symmetric", "", 0, true};
    for (int s = 0; s < nsym; ++s)
      if (!seen[s] || !seen[sys.alphabet.inverse_symbol(s)]) {
        c.pass = false;
        c.slack = -1;
        c.witness = sys.alphabet.symbol_name(s);
      }
    rep.checks.push_back(c);
  }
  {
    auto [leb, w] = sampled_lebesgue(d.regions, d.net);
    CheckResult c{"lebesgue", to_string(d.net[w].point), leb - d.delta, false};
    c.pass = c.slack >= -opt.tol;
    rep.checks.push_back(c);
  }
  auto idx = spread_indices(d.net.size(), opt.samples);
  {
    CheckResult c{"lipschitz", "", std::numeric_limits<double>::infinity(), false};
    for (auto i : idx) {
      auto pts = m.ball_net(d.net[i].point, d.delta, 16);
      for (int s = 0; s < nsym; ++s) {
        std::vector<Point> img;
        for (const auto& p : pts) img.push_back(sys.maps[s](p));
        for (std::size_t a = 0; a < pts.size(); ++a)
          for (std::size_t b : {std::size_t(0), a + 1}) {
            if (b >= pts.size() || b == a) continue;
            double dx = m.distance(pts[a], pts[b]);
            if (dx < 1e-14) continue;
            double ratio = m.distance(img[a], img[b]) / dx;
            worst(c, d.L - ratio, sys.alphabet.symbol_name(s) + "@" + to_string(pts[a]));
          }
      }
    }
    c.pass = c.slack >= -opt.tol * d.L;
    rep.checks.push_back(c);
  }
  {
    // pairwise lambda-expansion of rho(s_alpha^-1) on sampled pairs inside U_alpha
    CheckResult c{"pairwise_expansion", "", std::numeric_limits<double>::infinity(), false};
    for (std::size_t a = 0; a < d.size(); ++a) {
      if (d.regions[a].empty) continue;
      const auto& f = sys.maps[sys.alphabet.inverse_symbol(d.symbol[a])];
      for (auto i : idx) {
        auto pts = m.ball_net(d.net[i].point, d.delta, 16);
        std::vector<Point> in;
        for (auto& p : pts)
          if (d.regions[a].contains(p)) in.push_back(p);
        for (std::size_t u = 0; u + 1 < in.size(); ++u)
          for (std::size_t v : {u + 1, std::size_t(0)}) {
            if (v == u) continue;
            double dx = m.distance(in[u], in[v]);
            if (dx < 1e-14) continue;
            double ratio = m.distance(f(in[u]), f(in[v])) / dx;
            worst(c, ratio - d.lambda, std::to_string(a) + "@" + to_string(in[u]));
          }
      }
    }
    if (std::isinf(c.slack)) c.slack = 0;
    c.pass = c.slack >= -opt.tol;
    rep.checks.push_back(c);
  }
  {
    CheckResult c{"expanding", "", std::numeric_limits<double>::infinity(), false};
    for (std::size_t a = 0; a < d.size(); ++a) {
      if (d.regions[a].empty) continue;
      const int s = d.symbol[a];
      const auto& f = sys.maps[sys.alphabet.inverse_symbol(s)];
      const auto& g = sys.maps[s];
      for (auto i : idx) {
        for (const auto& x : m.ball_net(d.net[i].point, d.delta, 8)) {
          double mx = d.regions[a].margin(x);
          for (double eta : {d.delta, d.delta / 2, d.delta / 4}) {
            if (mx < eta) continue;
            Point fx = f(x);
            for (const auto& y : m.ball_net(fx, d.lambda * eta, 16)) {
              double back = m.distance(g(y), x);
              worst(c, eta - back, std::to_string(a) + "@" + to_string(x));
            }
          }
        }
      }
    }
    if (std::isinf(c.slack)) c.slack = 0;
    c.pass = c.slack >= -opt.tol;
    rep.checks.push_back(c);
  }
  {
    int top = 0;
    for (const auto& s : d.net) top = std::max(top, s.depth);
    NetIndex index(m, d.net_points());
    CheckResult c{"limit_invariance", "", std::numeric_limits<double>::infinity(), false};
    // samples of maximal depth may leave the net; they only count when they happen to stay
    for (const auto& smp : d.net) {
      for (int s = 0; s < nsym; ++s) {
        double dist = index.nearest(sys.maps[s](smp.point)).second;
        if (smp.depth >= top && dist > opt.invariance_tol) continue;
        worst(c, opt.invariance_tol - dist, sys.alphabet.symbol_name(s) + "@" + to_string(smp.point));
      }
    }
    if (std::isinf(c.slack)) c.slack = opt.invariance_tol;
    c.pass = c.slack >= 0;
    rep.checks.push_back(c);
  }
  return rep;
}

}  // namespace shyp
