#pragma once

#include <Eigen/Dense>
#include <complex>
#include <map>
#include <memory>
#include <set>

#include "shyp/geometry.hpp"
#include "shyp/groups.hpp"

namespace shyp {

// ---------------------------------------------------------------------------
// SL(2,R) acting on the circle through the chart x = tan(theta/2).

struct Mat2 {
  double a = 1, b = 0, c = 0, d = 1;
  double det() const { return a * d - b * c; }
  double trace() const { return a + d; }
  Mat2 operator*(const Mat2& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
  Mat2 inverse() const {
    double k = det();
    return {d / k, -b / k, -c / k, a / k};
  }
  bool operator==(const Mat2&) const = default;
};

inline Mat2 unimodular(Mat2 m) {
  double k = m.det();
  if (!(k > 0)) throw PreconditionError("matrix must have positive determinant");
  double s = 1.0 / std::sqrt(k);
  return {m.a * s, m.b * s, m.c * s, m.d * s};
}

/// Rotation of the circle by angle t, as an element of SO(2).
inline Mat2 rotation_matrix(double t) {
  return {std::cos(t / 2), std::sin(t / 2), -std::sin(t / 2), std::cos(t / 2)};
}

/// Disk-model coefficients (alpha, beta) with z -> (alpha z + beta)/(conj(beta) z + conj(alpha)).
inline std::pair<std::complex<double>, std::complex<double>> disk_coefficients(const Mat2& m) {
  using C = std::complex<double>;
  return {C((m.a + m.d) / 2, (m.b - m.c) / 2), C((m.d - m.a) / 2, (m.b + m.c) / 2)};
}

inline double mobius_angle(const Mat2& m, double theta) {
  auto [al, be] = disk_coefficients(m);
  std::complex<double> z = std::polar(1.0, theta);
  std::complex<double> w = (al * z + be) / (std::conj(be) * z + std::conj(al));
  return wrap_angle(std::arg(w));
}

/// |d theta'/d theta| of a unimodular matrix.
inline double mobius_derivative(const Mat2& m, double theta) {
  auto [al, be] = disk_coefficients(m);
  return 1.0 / std::norm(std::conj(be) * std::polar(1.0, theta) + std::conj(al));
}

/// Attracting fixed point on the circle of a hyperbolic matrix.
inline double attracting_fixed_point(const Mat2& m) {
  double tr = m.trace();
  double disc = tr * tr - 4.0 * m.det();
  if (!(disc > 0)) throw PreconditionError("matrix is not hyperbolic");
  double mu = (tr + (tr >= 0 ? 1.0 : -1.0) * std::sqrt(disc)) / 2;
  // eigenvector of mu; pick the better conditioned of the two formulas
  double v1 = m.b, v2 = mu - m.a;
  if (std::hypot(mu - m.d, m.c) > std::hypot(v1, v2)) {
    v1 = mu - m.d;
    v2 = m.c;
  }
  return wrap_angle(2.0 * std::atan2(v1, v2));
}

/// Arc where the matrix expands the circle metric: (center, half-width).
inline std::pair<double, double> isometric_arc(const Mat2& m) {
  auto [al, be] = disk_coefficients(unimodular(m));
  if (std::abs(be) < 1e-15) throw PreconditionError("rotation has no isometric circle");
  double center = wrap_angle(std::arg(-std::conj(al) / std::conj(be)));
  double w = std::acos(std::min(1.0, std::abs(be) / std::abs(al)));
  return {center, w};
}

// ---------------------------------------------------------------------------
// Action systems.

using PointMap = std::function<Point(const Point&)>;

struct LimitSample {
  Point point;
  int depth = 0;  // word length producing the sample; images of depth < max stay in the net
};

enum class RegionStrategy { SublevelArcs, AnchoredBalls, Cylinders, Product };

struct Anchor {
  int symbol;
  Point center;
};

struct ActionSystem;

struct MobiusModel {
  std::vector<Mat2> generators;
};
struct CoverModel {
  std::shared_ptr<const ActionSystem> base;
  int k;
};
struct ProjectiveModel {
  std::vector<Vec> diagonals;
  Eigen::MatrixXd conjugator;
};
struct BoundaryModel {
  int k;
  double a;
};
struct ProductModel {
  std::shared_ptr<const ActionSystem> first, second;
  bool swap;
};
using Model = std::variant<std::monostate, MobiusModel, CoverModel, ProjectiveModel, BoundaryModel, ProductModel>;

struct ActionSystem {
  std::string name;
  Alphabet alphabet;
  MetricSpace space;
  std::vector<PointMap> maps;                                     // rho(s), indexed by symbol
  std::function<double(int, const Point&)> lipschitz;            // local Lipschitz constant of rho(s) at x
  std::function<double(const Word&, const Point&)> expansion;    // eps(rho(g), x)
  std::function<std::vector<LimitSample>(int)> limit_net;
  RegionStrategy strategy = RegionStrategy::SublevelArcs;
  std::vector<Anchor> anchors;
  std::vector<Region> natural_regions;
  Model model;
};

/// rho(g)(x) for g = s_1 ... s_m, i.e. rho(s_1) o ... o rho(s_m) applied to x.
inline Point apply(const ActionSystem& sys, const Word& g, const Point& x) {
  sys.space.check(x);
  auto letters = sys.alphabet.spell(g);
  Point y = x;
  for (auto it = letters.rbegin(); it != letters.rend(); ++it) y = sys.maps[*it](y);
  return y;
}

inline Point apply_symbol(const ActionSystem& sys, int s, const Point& x) { return sys.maps.at(s)(x); }

inline double expansion_factor(const ActionSystem& sys, const Word& g, const Point& x) {
  sys.space.check(x);
  return sys.expansion(g, x);
}

/// Chain rule along the spelled word; exact for one-dimensional systems.
inline double chain_stretch(const ActionSystem& sys, const Word& g, const Point& x) {
  auto letters = sys.alphabet.spell(g);
  double f = 1.0;
  Point y = x;
  for (auto it = letters.rbegin(); it != letters.rend(); ++it) {
    f *= sys.lipschitz(*it, y);
    y = sys.maps[*it](y);
  }
  return f;
}

/// Deduplicated limit-net samples keyed by a string form of the point.
inline std::vector<LimitSample> dedupe_samples(std::vector<LimitSample> in, const MetricSpace& m, double tol) {
  std::vector<LimitSample> out;
  if (m.is_circle_like()) {
    std::sort(in.begin(), in.end(), [](const LimitSample& a, const LimitSample& b) {
      double x = angle(a.point), y = angle(b.point);
      return x != y ? x < y : a.depth < b.depth;
    });
    for (auto& s : in) {
      if (!out.empty() && m.raw_distance(out.back().point, s.point) <= tol) {
        out.back().depth = std::min(out.back().depth, s.depth);
        continue;
      }
      out.push_back(s);
    }
    if (out.size() > 1 && m.raw_distance(out.front().point, out.back().point) <= tol) {
      out.front().depth = std::min(out.front().depth, out.back().depth);
      out.pop_back();
    }
    return out;
  }
  for (auto& s : in) {
    bool dup = false;
    for (auto& o : out)
      if (o.point.component == s.point.component && m.raw_distance(o.point, s.point) <= tol) {
        o.depth = std::min(o.depth, s.depth);
        dup = true;
        break;
      }
    if (!dup) out.push_back(s);
  }
  return out;
}

/// Reduced words of length 1..depth over rank k, not ending in a doubled letter (except length 1).
inline std::vector<Letters> net_words(int k, int depth) {
  std::vector<Letters> out;
  std::vector<Letters> level;
  for (int g = 1; g <= k; ++g)
    for (int l : {g, -g}) level.push_back({l});
  for (int n = 1; n <= depth; ++n) {
    for (const auto& w : level)
      if (w.size() < 2 || w[w.size() - 1] != w[w.size() - 2]) out.push_back(w);
    if (n == depth) break;
    std::vector<Letters> next;
    for (const auto& w : level)
      for (int g = 1; g <= k; ++g)
        for (int l : {g, -g}) {
          if (l == -w.back()) continue;
          Letters e = w;
          e.push_back(l);
          next.push_back(std::move(e));
        }
    level = std::move(next);
  }
  return out;
}

/// Free group acting on the circle by unimodular matrices.
inline ActionSystem make_mobius_system(std::string name, std::vector<Mat2> generators) {
  if (generators.empty()) throw PreconditionError("need at least one generator");
  for (auto& g : generators) {
    g = unimodular(g);
    if (!(std::abs(g.trace()) > 2.0)) throw PreconditionError("generator is not hyperbolic");
  }
  const int r = static_cast<int>(generators.size());
  ActionSystem sys;
  sys.name = std::move(name);
  sys.alphabet = r == 1 ? Alphabet::cyclic() : Alphabet::free(r);
  sys.space = MetricSpace::circle();
  std::vector<Mat2> mats;
  for (const auto& g : generators) {
    mats.push_back(g);
    mats.push_back(g.inverse());
  }
  for (const auto& m : mats) sys.maps.push_back([m](const Point& x) { return circle_point(mobius_angle(m, angle(x))); });
  sys.lipschitz = [mats](int s, const Point& x) { return mobius_derivative(mats.at(s), angle(x)); };
  sys.expansion = [alphabet = sys.alphabet, mats](const Word& g, const Point& x) {
    double f = 1.0, t = angle(x);
    auto letters = alphabet.spell(g);
    for (auto it = letters.rbegin(); it != letters.rend(); ++it) {
      f *= mobius_derivative(mats[*it], t);
      t = mobius_angle(mats[*it], t);
    }
    return f;
  };
  std::vector<double> fixed;
  for (const auto& m : mats) fixed.push_back(attracting_fixed_point(m));
  auto alphabet = sys.alphabet;
  sys.limit_net = [mats, fixed, r, alphabet](int depth) {
    if (depth < 1) depth = 1;
    std::vector<LimitSample> raw;
    for (const auto& w : net_words(r, depth)) {
      double t = fixed[alphabet.letter_symbol(w.back())];
      for (std::size_t i = w.size() - 1; i-- > 0;) t = mobius_angle(mats[alphabet.letter_symbol(w[i])], t);
      raw.push_back({circle_point(t), static_cast<int>(w.size())});
    }
    return dedupe_samples(std::move(raw), MetricSpace::circle(), 1e-13);
  };
  for (std::size_t s = 0; s < mats.size(); ++s) {
    auto [c, w] = isometric_arc(mats[s ^ 1]);
    sys.natural_regions.push_back(arc_region(sys.space, c, w));
  }
  sys.strategy = RegionStrategy::SublevelArcs;
  sys.model = MobiusModel{generators};
  return sys;
}

/// Hyperbolic cyclic group x -> m^2 x with repelling point 0 and attracting point infinity.
inline ActionSystem make_cyclic_hyperbolic(double m) {
  if (!(m > 1)) throw PreconditionError("multiplier parameter must exceed 1");
  std::ostringstream os;
  os << "cyclic(m=" << m << ")";
  return make_mobius_system(os.str(), {Mat2{m, 0, 0, 1 / m}});
}

/// Schottky group; validates ping-pong and records isometric arcs shrunk by `shrink` of their width.
inline ActionSystem make_schottky(std::vector<Mat2> generators, double shrink = 0.02) {
  if (generators.empty()) throw PreconditionError("Schottky needs at least one generator");
  // a single generator is the cyclic hyperbolic case
  if (generators.size() == 1) return make_mobius_system("schottky(rank=1)", generators);
  std::vector<std::pair<double, double>> arcs;
  for (auto& g : generators) {
    g = unimodular(g);
    arcs.push_back(isometric_arc(g));
    arcs.push_back(isometric_arc(g.inverse()));
  }
  for (std::size_t i = 0; i < arcs.size(); ++i)
    for (std::size_t j = i + 1; j < arcs.size(); ++j) {
      double gap = std::abs(wrap_difference(arcs[i].first - arcs[j].first));
      if (gap <= arcs[i].second + arcs[j].second)
        throw ConstructionError("ping-pong fails: isometric arcs overlap",
                                "arcs " + std::to_string(i) + " and " + std::to_string(j));
    }
  auto sys = make_mobius_system("schottky(rank=" + std::to_string(generators.size()) + ")", generators);
  sys.natural_regions.clear();
  for (std::size_t s = 0; s < arcs.size(); ++s) {
    auto [c, w] = arcs[s ^ 1];
    sys.natural_regions.push_back(arc_region(sys.space, c, w * (1.0 - shrink)));
  }
  return sys;
}

/// Default rank-2 Schottky group: diag(3, 1/3) and its conjugate by a quarter turn.
inline std::vector<Mat2> default_schottky_generators(double m = 3.0) {
  Mat2 g{m, 0, 0, 1 / m};
  Mat2 r = rotation_matrix(kPi / 2);
  return {g, r * g * r.inverse()};
}

/// Lift of a degree-one circle map fixing theta0, evaluated through a continuation table.
class CircleLift {
 public:
  CircleLift(std::function<double(double)> f, double theta0, int steps = 10000)
      : f_(std::move(f)), theta0_(theta0), steps_(steps), table_(steps + 1) {
    table_[0] = theta0 + wrap_difference(f_(theta0) - theta0);
    double prev = f_(theta0);
    for (int g = 1; g <= steps; ++g) {
      double cur = f_(theta0 + kTwoPi * g / steps);
      table_[g] = table_[g - 1] + wrap_difference(cur - prev);
      prev = cur;
    }
    double turn = table_[steps] - table_[0];
    if (std::abs(turn - kTwoPi) > 1e-6) throw ConstructionError("map is not a degree-one homeomorphism", std::to_string(turn));
  }

  double operator()(double theta) const {
    double u = theta - theta0_;
    double m = std::floor(u / kTwoPi);
    double r = u - kTwoPi * m;
    long g = std::lround(r / kTwoPi * steps_);
    g = std::clamp<long>(g, 0, steps_);
    double base = theta0_ + kTwoPi * g / steps_;
    return table_[g] + wrap_difference(f_(theta0_ + r) - f_(base)) + kTwoPi * m;
  }

 private:
  std::function<double(double)> f_;
  double theta0_;
  int steps_;
  std::vector<double> table_;
};

/// k-fold cover of a cyclic circle system; every lifted fixed point stays fixed.
inline ActionSystem make_covered_cyclic(std::shared_ptr<const ActionSystem> base, int k) {
  if (!base) throw PreconditionError("missing base system");
  if (base->alphabet.kind() != AlphabetKind::Cyclic || !base->space.is_circle_like())
    throw PreconditionError("base must be a cyclic action on the circle");
  if (k < 1) throw PreconditionError("covering degree must be >= 1");
  auto base_net = base->limit_net(1);
  if (base_net.empty()) throw PreconditionError("base has no limit samples");
  double theta0 = angle(base_net.front().point);
  for (const auto& s : base_net)
    for (int g = 0; g < 2; ++g)
      if (base->space.raw_distance(base->maps[g](s.point), s.point) > 1e-9)
        throw PreconditionError("base limit set must consist of fixed points");

  ActionSystem sys;
  sys.name = base->name + "/cover(k=" + std::to_string(k) + ")";
  sys.alphabet = Alphabet::cyclic();
  sys.space = MetricSpace::covered_circle(k);
  for (int g = 0; g < 2; ++g) {
    auto lift = std::make_shared<CircleLift>(
        [base, g](double t) { return angle(base->maps[g](circle_point(t))); }, theta0);
    sys.maps.push_back([lift, k](const Point& x) { return circle_point((*lift)(k * angle(x)) / k); });
  }
  sys.lipschitz = [base, k](int s, const Point& x) { return base->lipschitz(s, circle_point(k * angle(x))); };
  sys.expansion = [alphabet = sys.alphabet, maps = sys.maps, lip = sys.lipschitz](const Word& g, const Point& x) {
    double f = 1.0;
    Point y = x;
    auto letters = alphabet.spell(g);
    for (auto it = letters.rbegin(); it != letters.rend(); ++it) {
      f *= lip(*it, y);
      y = maps[*it](y);
    }
    return f;
  };
  sys.limit_net = [base, k](int depth) {
    std::vector<LimitSample> out;
    for (const auto& s : base->limit_net(depth)) {
      double t = angle(s.point);
      if (t < 0) t += kTwoPi;
      for (int j = 0; j < k; ++j) out.push_back({circle_point((t + kTwoPi * j) / k), s.depth});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return angle(a.point) < angle(b.point); });
    return out;
  };
  sys.strategy = RegionStrategy::SublevelArcs;
  sys.model = CoverModel{base, k};
  return sys;
}

/// Free group F_k acting on its boundary with the visual metric a^-(x.y).
inline ActionSystem make_free_boundary(int k, double a) {
  if (k < 2) throw PreconditionError("free boundary needs rank >= 2");
  if (!(a > 1 && a <= 2)) throw PreconditionError("visual parameter must lie in (1, 2]");
  ActionSystem sys;
  std::ostringstream os;
  os << "free_boundary(k=" << k << ",a=" << a << ")";
  sys.name = os.str();
  sys.alphabet = Alphabet::free(k);
  sys.space = MetricSpace::free_boundary(k, a);
  for (int s = 0; s < 2 * k; ++s) {
    int l = sys.alphabet.symbol_letter(s);
    sys.maps.push_back([l](const Point& x) { return Point{0, left_multiply(l, boundary_word(x))}; });
  }
  sys.lipschitz = [a, alphabet = sys.alphabet](int s, const Point& x) {
    return boundary_word(x).letter(0) == -alphabet.symbol_letter(s) ? a : 1.0 / a;
  };
  sys.expansion = [a](const Word& g, const Point& x) {
    const Letters& w = std::get<Letters>(g);
    const BoundaryWord& b = boundary_word(x);
    std::size_t cancel = 0;
    while (cancel < w.size() && b.letter(cancel) == -w[w.size() - 1 - cancel]) ++cancel;
    return std::pow(a, 2.0 * cancel - static_cast<double>(w.size()));
  };
  sys.limit_net = [k](int depth) {
    std::vector<LimitSample> out;
    std::set<std::string> seen;
    for (const auto& w : net_words(k, std::max(depth, 1))) {
      BoundaryWord b{Letters(w.begin(), w.end() - 1), {w.back()}};
      b = canonical(b);
      if (seen.insert(to_string(b)).second) out.push_back({Point{0, b}, static_cast<int>(w.size())});
    }
    return out;
  };
  for (int s = 0; s < 2 * k; ++s)
    sys.natural_regions.push_back(cylinder_region(sys.space, {sys.alphabet.symbol_letter(s)}));
  sys.strategy = RegionStrategy::Cylinders;
  sys.model = BoundaryModel{k, a};
  return sys;
}

inline Vec eigen_to_vec(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vec_to_eigen(const Vec& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

/// Singular values of the derivative of [v] -> [G v] on the tangent space at [v] (angle metric).
inline std::pair<double, double> projective_stretch(const Eigen::MatrixXd& g, const Vec& v) {
  const Eigen::Index dim = g.rows();
  Eigen::VectorXd x = vec_to_eigen(v);
  Eigen::VectorXd w = g * x;
  double nw = w.norm();
  Eigen::VectorXd wh = w / nw;
  // orthonormal basis of x^perp
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(dim, dim) - x * x.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> basis(q, Eigen::ComputeFullU);
  Eigen::MatrixXd t = basis.matrixU().leftCols(dim - 1);
  Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(dim, dim) - wh * wh.transpose();
  Eigen::MatrixXd dmap = proj * g * t / nw;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dmap);
  auto s = svd.singularValues();
  return {s.minCoeff(), s.maxCoeff()};
}

/// Z^n acting on P^n by commuting diagonalizable matrices P diag(d_j) P^-1.
inline ActionSystem make_zn_projective(std::vector<Vec> diagonals, Eigen::MatrixXd conjugator = Eigen::MatrixXd()) {
  const int n = static_cast<int>(diagonals.size());
  if (n < 1) throw PreconditionError("need at least one generator");
  const int dim = n + 1;
  for (int j = 0; j < n; ++j) {
    const Vec& d = diagonals[j];
    if (static_cast<int>(d.size()) != dim) throw PreconditionError("diagonal has the wrong length");
    for (int i = 0; i < dim; ++i) {
      if (i == 0) continue;
      if (!(std::abs(d[0]) > std::abs(d[i]))) throw PreconditionError("top eigenvalue of generator is not dominant");
      if (i != j + 1 && !(std::abs(d[j + 1]) < std::abs(d[i])))
        throw PreconditionError("bottom eigenvalue of generator is not dominated");
    }
  }
  if (conjugator.size() == 0) conjugator = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::MatrixXd pinv = conjugator.inverse();
  std::vector<Eigen::MatrixXd> mats;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd dv = vec_to_eigen(diagonals[j]);
    mats.push_back(conjugator * dv.asDiagonal() * pinv);
    mats.push_back(conjugator * dv.cwiseInverse().asDiagonal() * pinv);
  }
  ActionSystem sys;
  std::ostringstream os;
  os << "zn_projective(n=" << n << ")";
  sys.name = os.str();
  sys.alphabet = Alphabet::free_abelian(n);
  sys.space = MetricSpace::projective(n);
  for (const auto& m : mats)
    sys.maps.push_back([m](const Point& x) { return line_point(eigen_to_vec(m * vec_to_eigen(line(x)))); });
  sys.lipschitz = [mats](int s, const Point& x) { return projective_stretch(mats.at(s), line(x)).second; };
  sys.expansion = [diagonals, conjugator, pinv, dim](const Word& g, const Point& x) {
    const auto& e = std::get<Exponents>(g);
    Eigen::VectorXd dv = Eigen::VectorXd::Ones(dim);
    for (std::size_t j = 0; j < e.size(); ++j)
      for (int i = 0; i < dim; ++i) dv[i] *= std::pow(diagonals[j][i], static_cast<double>(e[j]));
    Eigen::MatrixXd m = conjugator * dv.asDiagonal() * pinv;
    return projective_stretch(m, line(x)).first;
  };
  std::vector<Point> fixed;
  for (int i = 0; i < dim; ++i) fixed.push_back(line_point(eigen_to_vec(conjugator.col(i))));
  sys.limit_net = [fixed](int) {
    std::vector<LimitSample> out;
    for (const auto& p : fixed) out.push_back({p, 0});
    return out;
  };
  // g_1^-1 expands near e_0 (symbol g_1); g_j expands near e_j (symbol g_j^-1); nothing for g_j^-1, j >= 2.
  sys.anchors.push_back({0, fixed[0]});
  for (int j = 1; j <= n; ++j) sys.anchors.push_back({2 * (j - 1) + 1, fixed[j]});
  sys.strategy = RegionStrategy::AnchoredBalls;
  sys.model = ProjectiveModel{diagonals, conjugator};
  return sys;
}

/// Product action of G1 x G2 on the disjoint union, optionally extended by the factor swap.
inline ActionSystem make_product(std::shared_ptr<const ActionSystem> first, std::shared_ptr<const ActionSystem> second,
                                 bool with_swap) {
  if (!first || !second) throw PreconditionError("missing factor");
  for (const auto* f : {first.get(), second.get()}) {
    if (!f->alphabet.is_free()) throw PreconditionError("factors must carry free or cyclic presentations");
    if (!f->space.is_circle_like() && f->space.kind() != SpaceKind::FreeBoundary)
      throw PreconditionError("factors must act on circles or free boundaries");
  }
  if (with_swap && first->name != second->name) throw PreconditionError("swap needs two copies of one system");
  ActionSystem sys;
  sys.name = "product(" + first->name + "," + second->name + (with_swap ? ",swap" : "") + ")";
  sys.alphabet = Alphabet::product(first->alphabet, second->alphabet, with_swap);
  sys.space = MetricSpace::disjoint_union({first->space, second->space});
  const int n1 = first->alphabet.num_symbols();
  std::vector<std::shared_ptr<const ActionSystem>> parts{first, second};
  for (int s = 0; s < sys.alphabet.num_symbols(); ++s) {
    if (s == sys.alphabet.swap_symbol()) {
      sys.maps.push_back([](const Point& x) { return Point{1 - x.component, x.coord}; });
      continue;
    }
    std::size_t comp = s < n1 ? 0 : 1;
    int inner = s < n1 ? s : s - n1;
    auto part = parts[comp];
    sys.maps.push_back([part, comp, inner](const Point& x) {
      if (x.component != comp) return x;
      Point y = part->maps[inner](Point{0, x.coord});
      return Point{comp, y.coord};
    });
  }
  sys.lipschitz = [parts, n1, swap = sys.alphabet.swap_symbol()](int s, const Point& x) {
    if (s == swap) return 1.0;
    std::size_t comp = s < n1 ? 0 : 1;
    if (x.component != comp) return 1.0;
    return parts[comp]->lipschitz(s < n1 ? s : s - n1, Point{0, x.coord});
  };
  sys.expansion = [parts](const Word& g, const Point& x) {
    const auto& p = std::get<PairWord>(g);
    std::size_t comp = p.swap ? 1 - x.component : x.component;
    const Letters& w = comp == 0 ? p.first : p.second;
    return parts[comp]->expansion(w, Point{0, x.coord});
  };
  sys.limit_net = [parts](int depth) {
    std::vector<LimitSample> out;
    for (std::size_t c = 0; c < 2; ++c)
      for (auto s : parts[c]->limit_net(depth)) {
        s.point.component = c;
        out.push_back(s);
      }
    return out;
  };
  sys.strategy = RegionStrategy::Product;
  sys.model = ProductModel{first, second, with_swap};
  return sys;
}

// ---------------------------------------------------------------------------
// Perturbations.

struct MatrixJitter {
  double magnitude = 0;
  std::uint64_t seed = 0;
  bool diagonal_only = false;
};

/// Post-composition of every generator with a compactly supported circle diffeomorphism.
struct BumpCompose {
  double center = 0;
  double width = 0.1;
  double height = 0;
};

/// Conjugation by the chart translation x -> x + t.
struct TranslateConjugate {
  double t = 0;
};

using Perturbation = std::variant<MatrixJitter, BumpCompose, TranslateConjugate>;

/// Uniform in [-1, 1] from the raw 64-bit engine output, independent of library distributions.
inline double signed_unit(std::mt19937_64& gen) {
  return 2.0 * static_cast<double>(gen() >> 11) * 0x1.0p-53 - 1.0;
}

/// Smooth bump with b(0) = 1 and support (-1, 1).
inline double bump(double u) {
  if (std::abs(u) >= 1) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

inline double bump_slope(double u) {
  if (std::abs(u) >= 1) return 0.0;
  double q = 1.0 - u * u;
  return bump(u) * (-2.0 * u / (q * q));
}

inline constexpr double kBumpMaxSlope = 1.5;  // sup |b'| is about 1.45

inline ActionSystem perturb(const ActionSystem& sys, const Perturbation& p);

namespace detail {

inline ActionSystem jitter(const ActionSystem& sys, const MatrixJitter& j) {
  std::mt19937_64 gen(j.seed);
  auto tag = [&](const std::string& base) {
    std::ostringstream os;
    os << base << "~jitter(" << j.magnitude << "," << j.seed << ")";
    return os.str();
  };
  if (auto m = std::get_if<MobiusModel>(&sys.model)) {
    std::vector<Mat2> gens;
    for (auto g : m->generators) {
      g.a += j.magnitude * signed_unit(gen);
      double nb = signed_unit(gen), nc = signed_unit(gen);
      if (!j.diagonal_only) {
        g.b += j.magnitude * nb;
        g.c += j.magnitude * nc;
      }
      g.d += j.magnitude * signed_unit(gen);
      gens.push_back(unimodular(g));
    }
    auto out = sys.alphabet.kind() == AlphabetKind::Free && sys.name.rfind("schottky", 0) == 0 ? make_schottky(gens)
                                                                                                : make_mobius_system(sys.name, gens);
    out.name = j.magnitude == 0 ? sys.name : tag(sys.name);
    return out;
  }
  if (auto c = std::get_if<CoverModel>(&sys.model)) {
    auto base = std::make_shared<const ActionSystem>(perturb(*c->base, j));
    auto out = make_covered_cyclic(base, c->k);
    out.name = j.magnitude == 0 ? sys.name : tag(sys.name);
    return out;
  }
  if (auto pm = std::get_if<ProjectiveModel>(&sys.model)) {
    auto diags = pm->diagonals;
    for (auto& d : diags)
      for (double& x : d) x *= 1.0 + j.magnitude * signed_unit(gen);
    Eigen::MatrixXd conj = pm->conjugator;
    if (!j.diagonal_only)
      for (Eigen::Index r = 0; r < conj.rows(); ++r)
        for (Eigen::Index c = 0; c < conj.cols(); ++c) conj(r, c) += j.magnitude * signed_unit(gen);
    auto out = make_zn_projective(diags, conj);
    out.name = j.magnitude == 0 ? sys.name : tag(sys.name);
    return out;
  }
  if (auto pr = std::get_if<ProductModel>(&sys.model)) {
    MatrixJitter j2 = j;
    j2.seed = j.seed + 1;
    auto a = std::make_shared<const ActionSystem>(perturb(*pr->first, j));
    auto b = std::make_shared<const ActionSystem>(perturb(*pr->second, pr->swap ? j : j2));
    return make_product(a, b, pr->swap);
  }
  throw Unsupported("no matrix model to jitter on " + sys.name);
}

inline ActionSystem bump_compose(const ActionSystem& sys, const BumpCompose& b) {
  if (!sys.space.is_circle_like()) throw Unsupported("bump composition needs a circle action");
  if (!(b.width > 0 && b.width < kPi)) throw PreconditionError("bump width must lie in (0, pi)");
  if (std::abs(b.height) * kBumpMaxSlope / b.width >= 0.5)
    throw PreconditionError("bump too steep to stay a diffeomorphism");
  if (!sys.alphabet.is_free()) throw Unsupported("bump composition needs a free presentation");
  auto h = [b](double t) { return t + b.height * bump(wrap_difference(t - b.center) / b.width); };
  auto dh = [b](double t) { return 1.0 + b.height / b.width * bump_slope(wrap_difference(t - b.center) / b.width); };
  auto hinv = [h, b](double t) {
    double lo = t - std::abs(b.height) - 1e-12, hi = t + std::abs(b.height) + 1e-12;
    for (int i = 0; i < 200 && hi - lo > 1e-17; ++i) {
      double mid = 0.5 * (lo + hi);
      if (h(mid) < t)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  };
  ActionSystem out = sys;
  std::ostringstream os;
  os << sys.name << "~bump(" << b.center << "," << b.width << "," << b.height << ")";
  out.name = os.str();
  auto base_maps = sys.maps;
  auto base_lip = sys.lipschitz;
  out.maps.clear();
  for (int s = 0; s < sys.alphabet.num_symbols(); ++s) {
    auto f = base_maps[s];
    if (s % 2 == 0)
      out.maps.push_back([f, h](const Point& x) { return circle_point(h(angle(f(x)))); });
    else
      out.maps.push_back([f, hinv](const Point& x) { return f(circle_point(hinv(angle(x)))); });
  }
  out.lipschitz = [base_maps, base_lip, dh, hinv](int s, const Point& x) {
    if (s % 2 == 0) return std::abs(dh(angle(base_maps[s](x)))) * base_lip(s, x);
    double y = hinv(angle(x));
    return base_lip(s, circle_point(y)) / std::abs(dh(y));
  };
  out.expansion = [alphabet = out.alphabet, maps = out.maps, lip = out.lipschitz](const Word& g, const Point& x) {
    double f = 1.0;
    Point y = x;
    auto letters = alphabet.spell(g);
    for (auto it = letters.rbegin(); it != letters.rend(); ++it) {
      f *= lip(*it, y);
      y = maps[*it](y);
    }
    return f;
  };
  out.limit_net = nullptr;
  out.model = std::monostate{};
  return out;
}

inline ActionSystem translate_conjugate(const ActionSystem& sys, const TranslateConjugate& t) {
  if (auto m = std::get_if<MobiusModel>(&sys.model)) {
    Mat2 tr{1, t.t, 0, 1};
    std::vector<Mat2> gens;
    for (const auto& g : m->generators) gens.push_back(tr * g * tr.inverse());
    auto out = make_mobius_system(sys.name, gens);
    std::ostringstream os;
    os << sys.name << "~translate(" << t.t << ")";
    out.name = t.t == 0 ? sys.name : os.str();
    return out;
  }
  throw Unsupported("translation conjugacy needs a matrix model on the circle");
}

}  // namespace detail

inline ActionSystem perturb(const ActionSystem& sys, const Perturbation& p) {
  // zero-size perturbations return the action itself, bit for bit
  if (auto j = std::get_if<MatrixJitter>(&p)) {
    if (j->magnitude < 0) throw PreconditionError("jitter magnitude must be >= 0");
    return j->magnitude == 0 ? sys : detail::jitter(sys, *j);
  }
  if (auto b = std::get_if<BumpCompose>(&p)) return b->height == 0 ? sys : detail::bump_compose(sys, *b);
  const auto& t = std::get<TranslateConjugate>(p);
  return t.t == 0 ? sys : detail::translate_conjugate(sys, t);
}

inline std::vector<std::string> zoo_names() {
  return {"cyclic_hyperbolic", "covered_cyclic", "schottky", "free_boundary", "zn_projective", "product"};
}

}  // namespace shyp
