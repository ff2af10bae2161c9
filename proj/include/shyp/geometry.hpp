#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "shyp/errors.hpp"

namespace shyp {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Wrap an angle into [0, 2pi).
inline double wrap_angle(double t) {
  double r = std::fmod(t, kTwoPi);
  if (r < 0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Wrap an angle difference into (-pi, pi].
inline double wrap_difference(double t) {
  double r = wrap_angle(t);
  return r > kPi ? r - kTwoPi : r;
}

/// Chart x in R u {inf} to circle angle, theta = 2 atan(x).
inline double chart_to_angle(double x) {
  if (std::isinf(x)) return kPi;
  return wrap_angle(2.0 * std::atan(x));
}

inline double angle_to_chart(double theta) {
  double t = wrap_difference(theta);
  if (std::abs(std::abs(t) - kPi) < 1e-300) return std::numeric_limits<double>::infinity();
  return std::tan(0.5 * t);
}

// ---------------------------------------------------------------------------
// Boundary words of free groups.

/// Letters are signed generator indices: +(g+1) for the g-th generator, -(g+1) for its inverse.
using Letters = std::vector<int>;

inline char letter_char(int l) {
  return l > 0 ? static_cast<char>('a' + l - 1) : static_cast<char>('A' - l - 1);
}

inline int char_letter(char c) {
  if (c >= 'a' && c <= 'z') return c - 'a' + 1;
  if (c >= 'A' && c <= 'Z') return -(c - 'A' + 1);
  throw PreconditionError(std::string("not a letter: ") + c);
}

/// Eventually periodic reduced infinite word prefix . cycle . cycle . ...
/// Kept in canonical form, so equality of points is structural equality.
struct BoundaryWord {
  Letters prefix;
  Letters cycle;

  int letter(std::size_t i) const {
    if (i < prefix.size()) return prefix[i];
    return cycle[(i - prefix.size()) % cycle.size()];
  }
  bool operator==(const BoundaryWord&) const = default;
};

inline void rotate_right(Letters& c) { std::rotate(c.rbegin(), c.rbegin() + 1, c.rend()); }
inline void rotate_left(Letters& c) { std::rotate(c.begin(), c.begin() + 1, c.end()); }

inline BoundaryWord canonical(BoundaryWord w) {
  if (w.cycle.empty()) throw PreconditionError("boundary word needs a non-empty cycle");
  for (int l : w.prefix)
    if (l == 0) throw PreconditionError("letter 0");
  for (int l : w.cycle)
    if (l == 0) throw PreconditionError("letter 0");
  for (std::size_t i = 0; i + 1 < w.prefix.size(); ++i)
    if (w.prefix[i + 1] == -w.prefix[i]) throw PreconditionError("boundary prefix not reduced");
  const std::size_t n = w.cycle.size();
  for (std::size_t i = 0; i < n; ++i)
    if (w.cycle[(i + 1) % n] == -w.cycle[i]) throw PreconditionError("boundary cycle not cyclically reduced");
  if (!w.prefix.empty() && w.prefix.back() == -w.cycle.front())
    throw PreconditionError("boundary word not reduced at the junction");
  for (std::size_t p = 1; p <= n; ++p) {
    if (n % p) continue;
    bool periodic = true;
    for (std::size_t i = p; i < n && periodic; ++i) periodic = w.cycle[i] == w.cycle[i - p];
    if (periodic) {
      w.cycle.resize(p);
      break;
    }
  }
  while (!w.prefix.empty() && w.prefix.back() == w.cycle.back()) {
    rotate_right(w.cycle);
    w.prefix.pop_back();
  }
  return w;
}

/// s . w for a single letter s, with free cancellation.
inline BoundaryWord left_multiply(int s, BoundaryWord w) {
  if (w.letter(0) == -s) {
    if (!w.prefix.empty())
      w.prefix.erase(w.prefix.begin());
    else
      rotate_left(w.cycle);
  } else {
    w.prefix.insert(w.prefix.begin(), s);
  }
  return canonical(std::move(w));
}

/// Common prefix length; -1 when the two infinite words coincide.
inline long common_prefix(const BoundaryWord& x, const BoundaryWord& y) {
  const std::size_t bound = std::max(x.prefix.size(), y.prefix.size()) +
                            std::lcm(x.cycle.size(), y.cycle.size());
  for (std::size_t i = 0; i < bound; ++i)
    if (x.letter(i) != y.letter(i)) return static_cast<long>(i);
  return -1;
}

inline std::string to_string(const BoundaryWord& w) {
  std::string s;
  for (int l : w.prefix) s += letter_char(l);
  s += '(';
  for (int l : w.cycle) s += letter_char(l);
  s += ')';
  return s;
}

/// Parses "ab(B)" as a b B B B ...
inline BoundaryWord parse_boundary_word(const std::string& s) {
  BoundaryWord w;
  auto open = s.find('(');
  auto close = s.find(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw PreconditionError("boundary word needs a (cycle): " + s);
  for (std::size_t i = 0; i < open; ++i) w.prefix.push_back(char_letter(s[i]));
  for (std::size_t i = open + 1; i < close; ++i) w.cycle.push_back(char_letter(s[i]));
  return canonical(std::move(w));
}

// ---------------------------------------------------------------------------
// Points and spaces.

using Vec = std::vector<double>;

struct Point {
  std::size_t component = 0;
  std::variant<double, Vec, BoundaryWord> coord;

  bool operator==(const Point&) const = default;
};

inline Point circle_point(double theta, std::size_t component = 0) {
  return Point{component, wrap_angle(theta)};
}

inline double angle(const Point& p) {
  if (auto a = std::get_if<double>(&p.coord)) return *a;
  throw SpaceMismatch("point carries no angle");
}

inline const Vec& line(const Point& p) {
  if (auto v = std::get_if<Vec>(&p.coord)) return *v;
  throw SpaceMismatch("point carries no line");
}

inline const BoundaryWord& boundary_word(const Point& p) {
  if (auto w = std::get_if<BoundaryWord>(&p.coord)) return *w;
  throw SpaceMismatch("point carries no boundary word");
}

inline double dot(const Vec& u, const Vec& v) {
  double s = 0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

/// Unit representative with first significant coordinate positive.
inline Vec normalize_line(Vec v) {
  double n = norm(v);
  if (!(n > 0)) throw PreconditionError("zero vector is not a line");
  std::size_t lead = 0;
  double big = 0;
  for (std::size_t i = 0; i < v.size(); ++i) big = std::max(big, std::abs(v[i]));
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > 1e-12 * big) {
      lead = i;
      break;
    }
  double s = v[lead] < 0 ? -1.0 : 1.0;
  for (double& x : v) x *= s / n;
  return v;
}

inline Point line_point(Vec v, std::size_t component = 0) { return Point{component, normalize_line(std::move(v))}; }

inline Point boundary_point(BoundaryWord w, std::size_t component = 0) {
  return Point{component, canonical(std::move(w))};
}

enum class SpaceKind { Circle, ProjectiveSpace, FreeBoundary, CoveredCircle, DisjointUnion };

inline const char* to_string(SpaceKind k) {
  switch (k) {
    case SpaceKind::Circle: return "Circle";
    case SpaceKind::ProjectiveSpace: return "ProjectiveSpace";
    case SpaceKind::FreeBoundary: return "FreeBoundary";
    case SpaceKind::CoveredCircle: return "CoveredCircle";
    case SpaceKind::DisjointUnion: return "DisjointUnion";
  }
  return "?";
}

class MetricSpace {
 public:
  MetricSpace() = default;

  static MetricSpace circle() { return MetricSpace(SpaceKind::Circle); }
  static MetricSpace covered_circle(int k) {
    if (k < 1) throw PreconditionError("covering degree must be >= 1");
    MetricSpace s(SpaceKind::CoveredCircle);
    s.k_ = k;
    return s;
  }
  static MetricSpace projective(int n) {
    if (n < 1) throw PreconditionError("projective dimension must be >= 1");
    MetricSpace s(SpaceKind::ProjectiveSpace);
    s.n_ = n;
    return s;
  }
  static MetricSpace free_boundary(int k, double a) {
    if (k < 1) throw PreconditionError("free rank must be >= 1");
    if (!(a > 1)) throw PreconditionError("visual parameter must exceed 1");
    MetricSpace s(SpaceKind::FreeBoundary);
    s.k_ = k;
    s.a_ = a;
    return s;
  }
  static MetricSpace disjoint_union(std::vector<MetricSpace> parts) {
    if (parts.empty()) throw PreconditionError("empty disjoint union");
    MetricSpace s(SpaceKind::DisjointUnion);
    double big = 0;
    for (auto& p : parts) big = std::max(big, p.diameter());
    s.gap_ = big + 1.0;
    s.parts_ = std::make_shared<std::vector<MetricSpace>>(std::move(parts));
    return s;
  }

  SpaceKind kind() const { return kind_; }
  int dimension() const { return n_; }
  int rank() const { return k_; }
  int degree() const { return k_; }
  double visual_parameter() const { return a_; }
  double gap() const { return gap_; }
  const std::vector<MetricSpace>& components() const { return *parts_; }
  const MetricSpace& component(std::size_t i) const {
    if (!parts_ || i >= parts_->size()) throw SpaceMismatch("component index out of range");
    return (*parts_)[i];
  }

  bool is_circle_like() const { return kind_ == SpaceKind::Circle || kind_ == SpaceKind::CoveredCircle; }
  bool geodesic() const { return kind_ != SpaceKind::FreeBoundary && kind_ != SpaceKind::DisjointUnion; }

  double diameter() const {
    switch (kind_) {
      case SpaceKind::Circle:
      case SpaceKind::CoveredCircle: return kPi;
      case SpaceKind::ProjectiveSpace: return kPi / 2;
      case SpaceKind::FreeBoundary: return 1.0;
      case SpaceKind::DisjointUnion: return gap_;
    }
    return 0;
  }

  void check(const Point& p) const {
    if (kind_ == SpaceKind::DisjointUnion) {
      component(p.component).check(Point{0, p.coord});
      return;
    }
    if (p.component != 0) throw SpaceMismatch("component tag on a connected space");
    switch (kind_) {
      case SpaceKind::Circle:
      case SpaceKind::CoveredCircle:
        if (!std::holds_alternative<double>(p.coord)) throw SpaceMismatch("expected an angle");
        break;
      case SpaceKind::ProjectiveSpace:
        if (!std::holds_alternative<Vec>(p.coord) || std::get<Vec>(p.coord).size() != std::size_t(n_ + 1))
          throw SpaceMismatch("expected a line in R^" + std::to_string(n_ + 1));
        break;
      case SpaceKind::FreeBoundary: {
        if (!std::holds_alternative<BoundaryWord>(p.coord)) throw SpaceMismatch("expected a boundary word");
        const auto& w = std::get<BoundaryWord>(p.coord);
        for (int l : w.prefix)
          if (std::abs(l) > k_) throw SpaceMismatch("letter outside the free basis");
        for (int l : w.cycle)
          if (std::abs(l) > k_) throw SpaceMismatch("letter outside the free basis");
        break;
      }
      default: break;
    }
  }

  double distance(const Point& x, const Point& y) const {
    check(x);
    check(y);
    return raw_distance(x, y);
  }

  /// Distance without tag checks, for inner loops on already validated points.
  double raw_distance(const Point& x, const Point& y) const {
    switch (kind_) {
      case SpaceKind::Circle:
      case SpaceKind::CoveredCircle: {
        // exactly symmetric in x and y
        double d = std::abs(std::get<double>(x.coord) - std::get<double>(y.coord));
        return std::min(d, kTwoPi - d);
      }
      case SpaceKind::ProjectiveSpace: {
        const Vec& u = std::get<Vec>(x.coord);
        const Vec& v = std::get<Vec>(y.coord);
        // |u ^ v| from the 2x2 minors, so the formula is exactly symmetric
        double c = dot(u, v);
        double s2 = 0;
        for (std::size_t i = 0; i < u.size(); ++i)
          for (std::size_t j = i + 1; j < u.size(); ++j) {
            double r = u[i] * v[j] - u[j] * v[i];
            s2 += r * r;
          }
        return std::atan2(std::sqrt(s2), std::abs(c));
      }
      case SpaceKind::FreeBoundary: {
        long cp = common_prefix(std::get<BoundaryWord>(x.coord), std::get<BoundaryWord>(y.coord));
        return cp < 0 ? 0.0 : std::pow(a_, -static_cast<double>(cp));
      }
      case SpaceKind::DisjointUnion:
        if (x.component != y.component) return gap_;
        return (*parts_)[x.component].raw_distance(Point{0, x.coord}, Point{0, y.coord});
    }
    return 0;
  }

  /// Geodesic midpoint; defined on Circle, CoveredCircle and ProjectiveSpace.
  Point midpoint(const Point& x, const Point& y) const {
    check(x);
    check(y);
    if (is_circle_like()) return circle_point(angle(x) + 0.5 * wrap_difference(angle(y) - angle(x)));
    if (kind_ == SpaceKind::ProjectiveSpace) {
      const Vec& u = line(x);
      const Vec& v = line(y);
      double s = dot(u, v) < 0 ? -1.0 : 1.0;
      Vec m(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) m[i] = u[i] + s * v[i];
      return line_point(m);
    }
    throw Unsupported(std::string("no midpoints on ") + to_string(kind_));
  }

  /// Sample of the closed ball B_r(center): `count` points near the boundary plus the center.
  std::vector<Point> ball_net(const Point& center, double r, int count = 64) const {
    check(center);
    std::vector<Point> out{center};
    if (!(r > 0)) return out;
    switch (kind_) {
      case SpaceKind::Circle:
      case SpaceKind::CoveredCircle: {
        double c = angle(center);
        r = std::min(r, kPi);
        for (int j = 0; j < count; ++j) {
          double t = count == 1 ? 1.0 : -1.0 + 2.0 * j / (count - 1);
          out.push_back(circle_point(c + r * t));
        }
        return out;
      }
      case SpaceKind::ProjectiveSpace: return projective_ball_net(center, std::min(r, kPi / 2), count);
      case SpaceKind::FreeBoundary: return boundary_ball_net(center, r, count);
      case SpaceKind::DisjointUnion: {
        const auto& part = component(center.component);
        auto inner = part.ball_net(Point{0, center.coord}, std::min(r, part.diameter()), count);
        for (auto& p : inner) p.component = center.component;
        return inner;
      }
    }
    return out;
  }

  std::string describe() const {
    std::ostringstream os;
    os << to_string(kind_);
    switch (kind_) {
      case SpaceKind::ProjectiveSpace: os << "(" << n_ << ")"; break;
      case SpaceKind::FreeBoundary: os << "(" << k_ << "," << a_ << ")"; break;
      case SpaceKind::CoveredCircle: os << "(" << k_ << ")"; break;
      case SpaceKind::DisjointUnion: {
        os << "(";
        for (std::size_t i = 0; i < parts_->size(); ++i) os << (i ? "," : "") << (*parts_)[i].describe();
        os << ")";
        break;
      }
      default: break;
    }
    return os.str();
  }

 private:
  explicit MetricSpace(SpaceKind k) : kind_(k) {}

  std::vector<Point> projective_ball_net(const Point& center, double r, int count) const {
    const Vec& c = line(center);
    const std::size_t dim = c.size();
    // orthonormal basis of the tangent space c^perp by Gram-Schmidt on the coordinate axes
    std::vector<Vec> basis;
    for (std::size_t i = 0; i < dim && basis.size() + 1 < dim; ++i) {
      Vec e(dim, 0.0);
      e[i] = 1.0;
      double p = dot(e, c);
      for (std::size_t j = 0; j < dim; ++j) e[j] -= p * c[j];
      for (const auto& b : basis) {
        double q = dot(e, b);
        for (std::size_t j = 0; j < dim; ++j) e[j] -= q * b[j];
      }
      double n = norm(e);
      if (n < 1e-6) continue;
      for (double& x : e) x /= n;
      basis.push_back(e);
    }
    std::vector<Point> out{center};
    std::mt19937_64 gen(0x5eed);
    for (int j = 0; j < count; ++j) {
      Vec coef(basis.size());
      if (basis.size() == 1) {
        coef[0] = (j % 2) ? 1.0 : -1.0;
      } else if (basis.size() == 2) {
        double t = kTwoPi * j / count;
        coef = {std::cos(t), std::sin(t)};
      } else {
        std::normal_distribution<double> nd;
        for (double& x : coef) x = nd(gen);
        double n = norm(coef);
        for (double& x : coef) x /= n;
      }
      Vec v(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        double u = 0;
        for (std::size_t b = 0; b < basis.size(); ++b) u += coef[b] * basis[b][i];
        v[i] = std::cos(r) * c[i] + std::sin(r) * u;
      }
      out.push_back(line_point(v));
    }
    return out;
  }

  std::vector<Point> boundary_ball_net(const Point& center, double r, int count) const {
    const BoundaryWord& w = boundary_word(center);
    std::size_t c0 = 0;
    while (std::pow(a_, -static_cast<double>(c0)) >= r) ++c0;
    Letters base;
    for (std::size_t i = 0; i < c0; ++i) base.push_back(w.letter(i));
    std::vector<Point> out{center};
    std::vector<Letters> frontier{base};
    while (static_cast<int>(out.size()) <= count && !frontier.empty()) {
      std::vector<Letters> next;
      for (const auto& f : frontier) {
        for (int g = 1; g <= k_; ++g) {
          for (int l : {g, -g}) {
            if (!f.empty() && f.back() == -l) continue;
            Letters e = f;
            e.push_back(l);
            BoundaryWord p{e, {l}};
            out.push_back(Point{0, canonical(p)});
            next.push_back(std::move(e));
            if (static_cast<int>(out.size()) > count) return out;
          }
        }
      }
      frontier = std::move(next);
    }
    return out;
  }

  SpaceKind kind_ = SpaceKind::Circle;
  int n_ = 0;
  int k_ = 0;
  double a_ = 0;
  double gap_ = 0;
  std::shared_ptr<std::vector<MetricSpace>> parts_;
};

inline double distance(const MetricSpace& m, const Point& x, const Point& y) { return m.distance(x, y); }

/// Hausdorff distance between two finite samples.
inline double hausdorff_distance(const MetricSpace& m, const std::vector<Point>& a, const std::vector<Point>& b) {
  if (a.empty() || b.empty()) throw PreconditionError("Hausdorff distance of an empty set");
  auto one_side = [&](const std::vector<Point>& p, const std::vector<Point>& q) {
    double worst = 0;
    for (const auto& x : p) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : q) best = std::min(best, m.distance(x, y));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(one_side(a, b), one_side(b, a));
}

// ---------------------------------------------------------------------------
// Regions, represented by margin(x) = sup{r : B_r(x) in U}, <= 0 off U.

struct Region {
  std::function<double(const Point&)> margin_fn;
  std::string label;
  bool empty = false;
  double shift = 0;

  double margin(const Point& x) const { return margin_fn(x) - shift; }
  bool contains(const Point& x) const { return margin(x) > 0; }
};

inline bool ball_contained(const Region& u, const Point& x, double r) { return u.margin(x) >= r; }

inline Region shrink_region(Region u, double r) {
  if (r < 0) throw PreconditionError("shrink radius must be >= 0");
  u.shift += r;
  return u;
}

inline Region empty_region(const MetricSpace& m) {
  double c = -(m.diameter() + 1.0);
  return Region{[c](const Point&) { return c; }, "empty", true, 0};
}

/// Open arc of half-width w around an angle.
inline Region arc_region(const MetricSpace& m, double center, double halfwidth) {
  if (!m.is_circle_like()) throw Unsupported("arcs live on circles");
  Point c = circle_point(center);
  std::ostringstream os;
  os.precision(17);
  os << "arc(" << wrap_angle(center) << "," << halfwidth << ")";
  return Region{[m, c, halfwidth](const Point& x) { return halfwidth - m.distance(x, c); }, os.str(), false, 0};
}

/// Open arc (lo, hi) traversed counterclockwise.
inline Region arc_between(const MetricSpace& m, double lo, double hi) {
  double len = wrap_angle(hi - lo);
  return arc_region(m, lo + 0.5 * len, 0.5 * len);
}

/// Open metric ball; margin r - d(x,c) is exact on geodesic spaces.
inline Region ball_region(const MetricSpace& m, const Point& center, double r) {
  m.check(center);
  std::ostringstream os;
  os.precision(17);
  os << "ball(r=" << r << ")";
  return Region{[m, center, r](const Point& x) { return r - m.distance(x, center); }, os.str(), false, 0};
}

/// Cylinder [w] of boundary words starting with w; B_r(x) lies in [w] iff r <= a^-(|w|-1).
inline Region cylinder_region(const MetricSpace& m, const Letters& w) {
  if (m.kind() != SpaceKind::FreeBoundary) throw Unsupported("cylinders live on free boundaries");
  if (w.empty()) throw PreconditionError("cylinder needs a non-empty word");
  double inside = std::pow(m.visual_parameter(), -static_cast<double>(w.size() - 1));
  std::string label = "[";
  for (int l : w) label += letter_char(l);
  label += "]";
  return Region{[m, w, inside](const Point& x) {
                  const auto& b = boundary_word(x);
                  m.check(x);
                  for (std::size_t i = 0; i < w.size(); ++i)
                    if (b.letter(i) != w[i]) return 0.0;
                  return inside;
                },
                label, false, 0};
}

/// Region of one component pulled into a disjoint union.
inline Region lift_region(const MetricSpace& uni, std::size_t comp, Region inner) {
  if (uni.kind() != SpaceKind::DisjointUnion) throw Unsupported("lift needs a disjoint union");
  uni.component(comp);
  Region out = inner;
  double c = inner.empty ? -(uni.diameter() + 1.0) : 0.0;
  out.margin_fn = [comp, inner, c](const Point& x) {
    if (x.component != comp) return c;
    return inner.margin(Point{0, x.coord});
  };
  out.shift = 0;
  out.label = std::to_string(comp) + ":" + inner.label;
  return out;
}

/// Intersection of regions: margins combine by min.
inline Region intersect(const Region& u, const Region& v) {
  Region out;
  out.margin_fn = [u, v](const Point& x) { return std::min(u.margin(x), v.margin(x)); };
  out.label = u.label + "&" + v.label;
  out.empty = u.empty || v.empty;
  return out;
}

/// Open r-neighborhood of a finite sample.
inline Region neighborhood_region(const MetricSpace& m, std::vector<Point> sample, double r) {
  if (sample.empty()) throw PreconditionError("neighborhood of an empty sample");
  auto shared = std::make_shared<std::vector<Point>>(std::move(sample));
  return Region{[m, shared, r](const Point& x) {
                  double best = std::numeric_limits<double>::infinity();
                  for (const auto& p : *shared) best = std::min(best, m.distance(x, p));
                  return r - best;
                },
                "N_r", false, 0};
}

inline std::string to_string(const Point& p) {
  std::ostringstream os;
  os.precision(17);
  if (p.component) os << p.component << ":";
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, double>) {
          os << c;
        } else if constexpr (std::is_same_v<T, Vec>) {
          os << "[";
          for (std::size_t i = 0; i < c.size(); ++i) os << (i ? " " : "") << c[i];
          os << "]";
        } else {
          os << to_string(c);
        }
      },
      p.coord);
  return os.str();
}

}  // namespace shyp
