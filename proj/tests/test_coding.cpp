#include <catch_amalgamated.hpp>

#include <random>

#include "shyp/coding.hpp"

using namespace shyp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::shared_ptr<const ActionSystem> shared(ActionSystem s) { return std::make_shared<const ActionSystem>(std::move(s)); }

// A system with its datum, kept alive together for a CodingContext.
struct Fixture {
  ActionSystem sys;
  ExpansionDatum d;
  Fixture(ActionSystem s, double lt) : sys(std::move(s)), d(build_expansion_datum(sys, lt)) {}
  CodingContext ctx() const { return CodingContext(sys, d); }
};

const Fixture& schottky() {
  static Fixture f(make_schottky(default_schottky_generators()), 2.0);
  return f;
}
const Fixture& cyclic() {
  static Fixture f(make_cyclic_hyperbolic(2), 1.5);
  return f;
}
const Fixture& boundary() {
  static Fixture f(make_free_boundary(2, 2.0), 2.0);
  return f;
}
const Fixture& covered() {
  static Fixture f(make_covered_cyclic(shared(make_cyclic_hyperbolic(2)), 3), 1.5);
  return f;
}
const Fixture& projective() {
  static Fixture f(make_zn_projective({{9, 1, 3}, {9, 3, 1}}), 2.0);
  return f;
}

std::string letters(const Letters& w) {
  std::string s;
  for (int l : w) s += letter_char(l);
  return s;
}

}  // namespace

TEST_CASE("fixed-point code on the cyclic system", "[coding]") {
  const auto& f = cyclic();
  auto ctx = f.ctx();
  auto x = circle_point(0);
  auto c = make_code(ctx, f.d.delta, x, 12);
  for (const auto& p : c.points) CHECK(f.sys.space.distance(p, x) == 0);
  auto ray = make_ray(ctx, c);
  for (std::size_t i = 0; i < ray.size(); ++i) CHECK(f.sys.alphabet.to_string(ray.words[i]) == std::string(i + 1, 'A'));
  CHECK(is_code(ctx, c, f.d.delta));
}

TEST_CASE("shift coding on the free boundary", "[coding]") {
  const auto& f = boundary();
  auto ctx = f.ctx();
  auto xw = parse_boundary_word("(ab)");
  auto c = make_code(ctx, f.d.delta, boundary_point(xw), 10);
  BoundaryWord p = xw;
  for (std::size_t i = 0; i < c.depth(); ++i) {
    CHECK(f.sys.alphabet.symbol_letter(f.d.symbol[c.alpha[i]]) == xw.letter(i));
    CHECK(boundary_word(c.points[i]) == p);
    p = left_multiply(-xw.letter(i), p);
  }
  auto ray = make_ray(ctx, c);
  CHECK(f.sys.alphabet.to_string(ray.words.back()) == "ababababab");
}

TEST_CASE("Schottky codes follow the cutting sequence", "[coding]") {
  const auto& f = schottky();
  auto ctx = f.ctx();
  auto gens = default_schottky_generators();
  std::vector<Mat2> mats;
  for (auto g : gens) {
    mats.push_back(unimodular(g));
    mats.push_back(unimodular(g).inverse());
  }
  for (auto i : spread_indices(f.d.net.size(), 25)) {
    auto x = f.d.net[i].point;
    auto c = make_code(ctx, f.d.delta, x, 20);
    auto ray = make_ray(ctx, c);
    // oracle: the matrix whose isometric arc holds p_i is the inverse of the i-th letter
    Letters cut;
    for (std::size_t k = 0; k < c.depth(); ++k) {
      int hit = -1;
      for (int s = 0; s < 4; ++s) {
        auto [cc, w] = isometric_arc(mats[s]);
        if (std::abs(wrap_difference(angle(c.points[k]) - cc)) < w) hit = s;
      }
      REQUIRE(hit >= 0);
      cut.push_back(-f.sys.alphabet.symbol_letter(hit));
    }
    // the ray is reduced, so its last word spells the whole cutting sequence
    CHECK(f.sys.alphabet.to_string(ray.words.back()) == letters(cut));
    auto pre = boundary_prefix(f.sys.alphabet, ray.words, 10);
    CHECK(letters(pre) == letters(cut).substr(0, pre.size()));
    CHECK(pre.size() >= 10);
  }
}

TEST_CASE("code enumeration", "[coding]") {
  {
    const auto& f = projective();
    auto ctx = f.ctx();
    auto e1 = line_point({0, 1, 0});
    auto set = enumerate_codes(ctx, f.d.delta, e1, 5, 1000);
    CHECK_FALSE(set.truncated);
    CHECK(set.codes.size() == f.d.size());
    std::set<std::string> firsts;
    for (const auto& c : set.codes) {
      auto ray = make_ray(ctx, c);
      // s . (g1^-1)^k
      Exponents s = std::get<Exponents>(f.sys.alphabet.symbol(f.d.symbol[c.alpha[0]]));
      firsts.insert(f.sys.alphabet.to_string(s));
      for (std::size_t i = 0; i < ray.size(); ++i) {
        Exponents expect = s;
        expect[0] -= static_cast<long>(i);
        CHECK(ray.words[i] == Word(expect));
      }
    }
    CHECK(firsts.size() == 4);
  }
  {
    const auto& f = cyclic();
    auto ctx = f.ctx();
    auto set = enumerate_codes(ctx, f.d.delta, circle_point(0), 10, 1000);
    CHECK(set.codes.size() == 2);
    CHECK_FALSE(set.truncated);
    for (const auto& c : set.codes)
      for (std::size_t i = 1; i < c.depth(); ++i) CHECK(c.alpha[i] == set.codes[0].alpha[1]);
    auto one = enumerate_codes(ctx, f.d.delta, circle_point(0), 10, 1);
    CHECK(one.codes.size() == 1);
    CHECK(one.truncated);
  }
}

TEST_CASE("nested images", "[coding]") {
  {
    const auto& f = cyclic();
    auto d = f.d;
    d.L = 4;
    d.lambda = 1.5;
    d.delta = 0.05;
    CodingContext ctx(f.sys, d);
    auto c = make_code(ctx, 0.05, circle_point(0), 12);
    auto steps = nested_images(ctx, c, 0.05, 12);
    CHECK_THAT(steps[10].bound, WithinRel(2 * 4 * 0.05 / std::pow(1.5, 10), 1e-14));
    CHECK_THAT(steps[10].bound, WithinAbs(6.937e-3, 1e-6));
    for (const auto& s : steps) {
      CHECK(s.center_residual == 0);
      CHECK(s.nested);
      CHECK(s.shrinking);
    }
  }
  {
    const auto& f = schottky();
    auto ctx = f.ctx();
    for (auto i : spread_indices(f.d.net.size(), 10)) {
      auto x = f.d.net[i].point;
      auto c = make_code(ctx, f.d.delta, x, 20);
      auto steps = nested_images(ctx, c, f.d.delta, 20);
      for (const auto& s : steps) {
        CHECK(s.nested);
        CHECK(s.shrinking);
        CHECK(s.center_residual < 1e-9);
      }
      CHECK(steps.back().diameter < 1e-6);
    }
  }
}

TEST_CASE("expansivity witnesses", "[coding]") {
  {
    const auto& f = cyclic();
    auto ctx = f.ctx();
    auto w = expansivity_witness(ctx, circle_point(0), circle_point(kPi));
    CHECK(w.n == 0);
    CHECK_THROWS_AS(expansivity_witness(ctx, circle_point(0), circle_point(0)), PreconditionError);
  }
  {
    const auto& f = boundary();
    auto ctx = f.ctx();
    auto x = parse_boundary_word("abbab(a)");
    auto y = parse_boundary_word("abbab(b)");
    long cp = common_prefix(x, y);
    REQUIRE(cp == 5);
    // brute force: the first shift n with a^-(cp - n) >= delta (1 - 1e-6)
    std::size_t oracle = 0;
    while (std::pow(2.0, -static_cast<double>(cp - static_cast<long>(oracle))) < f.d.delta * (1 - 1e-6)) ++oracle;
    auto w = expansivity_witness(ctx, boundary_point(x), boundary_point(y));
    CHECK(w.n == oracle);
    CHECK(w.n == 3);
    CHECK(w.separation == 0.25);
  }
  {
    const auto& f = schottky();
    auto ctx = f.ctx();
    auto deep = f.sys.limit_net(9);
    // a pair of limit points about 1e-4 apart
    std::optional<std::pair<Point, Point>> pair;
    for (std::size_t i = 0; i + 1 < deep.size() && !pair; ++i) {
      double dist = f.sys.space.distance(deep[i].point, deep[i + 1].point);
      if (dist > 0.8e-4 && dist < 1.2e-4) pair = {deep[i].point, deep[i + 1].point};
    }
    REQUIRE(pair);
    auto w = expansivity_witness(ctx, pair->first, pair->second);
    double dist = f.sys.space.distance(pair->first, pair->second);
    CHECK(w.separation >= f.d.delta * (1 - 1e-6));
    CHECK(w.n <= std::ceil(std::log(f.d.delta / dist) / std::log(f.d.lambda)) + 2);
  }
}

TEST_CASE("quasigeodesic rays", "[coding]") {
  CHECK_THAT(qg_slope(1.5, 4), WithinAbs(0.29248, 1e-5));
  CHECK(qg_slope(2, 2) == 1.0);
  {
    const auto& f = cyclic();
    auto ctx = f.ctx();
    auto ray = make_ray(ctx, make_code(ctx, f.d.delta, circle_point(0), 15));
    for (std::size_t i = 0; i < ray.size(); ++i)
      for (std::size_t j = 0; j < i; ++j) CHECK(f.sys.alphabet.word_metric(ray.words[i], ray.words[j]) == long(i - j));
    CHECK(quasigeodesic_check(f.sys.alphabet, f.d, ray).pass);
  }
  {
    const auto& f = schottky();
    auto ctx = f.ctx();
    for (auto i : spread_indices(f.d.net.size(), 20)) {
      auto ray = make_ray(ctx, make_code(ctx, f.d.delta, f.d.net[i].point, 20));
      auto q = quasigeodesic_check(f.sys.alphabet, f.d, ray);
      CHECK(q.pass);
      CHECK(q.pairs == 190);
      CHECK_FALSE(q.partial);
    }
  }
}

TEST_CASE("fellow travel and N-equivalence", "[coding]") {
  {
    const auto& f = cyclic();
    auto ctx = f.ctx();
    auto set = enumerate_codes(ctx, f.d.delta, circle_point(0), 12, 100);
    REQUIRE(set.codes.size() == 2);
    auto a = make_ray(ctx, set.codes[0]), b = make_ray(ctx, set.codes[1]);
    CHECK(fellow_travel_distance(f.sys.alphabet, a, a) == 0);
    auto ft = fellow_travel_distance(f.sys.alphabet, a, b);
    REQUIRE(ft);
    CHECK(*ft <= 2);
    std::vector<Ray> pool{a, b};
    auto eq = n_equivalence(f.sys.alphabet, 0, 1, pool, 2);
    CHECK(eq.equivalent);
    CHECK(eq.length() == 1);
  }
  {
    // Z^2: the two rays through g2 and g2^-1 are parallel at distance 2, the axis ray sits between
    const auto& f = projective();
    auto ctx = f.ctx();
    auto set = enumerate_codes(ctx, f.d.delta, line_point({0, 1, 0}), 16, 100);
    std::vector<Ray> pool;
    std::size_t up = 0, down = 0;
    for (const auto& c : set.codes) {
      pool.push_back(make_ray(ctx, c));
      Exponents s = std::get<Exponents>(f.sys.alphabet.symbol(f.d.symbol[c.alpha[0]]));
      if (s == Exponents{0, 1}) up = pool.size() - 1;
      if (s == Exponents{0, -1}) down = pool.size() - 1;
    }
    CHECK(fellow_travel_distance(f.sys.alphabet, pool[up], pool[down]) == 2);
    CHECK_FALSE(approx_equivalent(f.sys.alphabet, pool[up], pool[down], 1));
    auto eq = n_equivalence(f.sys.alphabet, up, down, pool, 1);
    CHECK(eq.equivalent);
    CHECK(eq.length() == 2);
    std::vector<Ray> two{pool[up], pool[down]};
    CHECK_FALSE(n_equivalence(f.sys.alphabet, 0, 1, two, 1).equivalent);
  }
  {
    const auto& f = schottky();
    auto ctx = f.ctx();
    auto x = f.d.net[f.d.net.size() / 2].point;
    auto set = enumerate_codes(ctx, f.d.delta, x, 20, 200);
    long worst = 0;
    for (std::size_t a = 0; a < set.codes.size(); ++a)
      for (std::size_t b = a + 1; b < set.codes.size(); ++b)
        worst = std::max(worst, *fellow_travel_distance(f.sys.alphabet, make_ray(ctx, set.codes[a]), make_ray(ctx, set.codes[b])));
    auto cert = shyp_certificate(ctx, {x}, 20, 200, 4);
    CHECK(cert.N == worst);
    CHECK(cert.fellow_travel_ok);
  }
}

TEST_CASE("S-hyperbolicity certificates", "[coding]") {
  {
    const auto& f = boundary();
    auto ctx = f.ctx();
    auto net = f.sys.limit_net(3);
    std::vector<Point> pts;
    for (const auto& s : net) pts.push_back(s.point);
    auto cert = shyp_certificate(ctx, pts, 12, 200, 4);
    CHECK(cert.N == 1);
    CHECK(cert.fellow_travel_ok);
    CHECK_FALSE(cert.truncated);
  }
  {
    const auto& f = covered();
    auto ctx = f.ctx();
    auto cert = shyp_certificate(ctx, f.d.net_points(), 20, 200, 4);
    CHECK(cert.fellow_travel_ok);
    CHECK(cert.N <= 4);
  }
  {
    const auto& f = projective();
    auto ctx = f.ctx();
    auto cert = shyp_certificate(ctx, f.d.net_points(), 20, 200, 1);
    CHECK_FALSE(cert.fellow_travel_ok);
    CHECK(cert.meandering_ok);
    CHECK(cert.max_chain == 2);
    auto loose = shyp_certificate(ctx, f.d.net_points(), 20, 200, 2);
    CHECK(loose.fellow_travel_ok);
    CHECK(loose.N == 2);
  }
}

TEST_CASE("recurrence", "[coding]") {
  {
    const auto& f = cyclic();
    auto ctx = f.ctx();
    auto w = recurrence_witness(ctx, circle_point(0), f.d.delta, 20);
    REQUIRE_FALSE(w.residuals.empty());
    for (double r : w.residuals) CHECK(r == 0);
    CHECK_THROWS_AS(recurrence_witness(ctx, circle_point(0), 2 * f.d.delta, 20), PreconditionError);
  }
  {
    const auto& f = schottky();
    auto ctx = f.ctx();
    auto x = f.d.net[f.d.net.size() / 3].point;
    auto w = recurrence_witness(ctx, x, f.d.delta, 60);
    REQUIRE(w.residuals.size() >= 2);
    CHECK(w.residuals.back() < 1e-3);
    for (std::size_t j = 1; j < w.residuals.size(); ++j) CHECK(w.residuals[j] <= w.residuals[j - 1] * 4 + 1e-12);
    // h_j moves x by the recorded residual
    for (std::size_t j = 0; j < w.h.size(); ++j)
      CHECK_THAT(f.sys.space.distance(apply(f.sys, w.h[j], x), x), WithinAbs(w.residuals[j], 1e-6));
  }
}

TEST_CASE("coding map", "[coding]") {
  {
    const auto& f = schottky();
    auto ctx = f.ctx();
    std::set<std::string> seen;
    auto idx = spread_indices(f.d.net.size(), 200);
    for (auto i : idx) {
      auto r = coding_map(ctx, f.d.net[i].point, 20);
      CHECK(r.stable);
      CHECK(r.prefix.size() == 20);
      seen.insert(letters(r.prefix));
    }
    CHECK(seen.size() == idx.size());
  }
  {
    const auto& f = covered();
    auto ctx = f.ctx();
    std::map<std::string, int> fibers;
    for (const auto& s : f.d.net) ++fibers[letters(coding_map(ctx, s.point, 8).prefix)];
    CHECK(fibers == std::map<std::string, int>{{"AAAAAAAA", 3}, {"aaaaaaaa", 3}});
  }
  {
    // equivariance up to one letter of truncation
    const auto& f = schottky();
    auto ctx = f.ctx();
    const std::size_t pd = 12;
    for (auto i : spread_indices(f.d.net.size(), 60)) {
      const auto& smp = f.d.net[i];
      if (smp.depth >= 5) continue;
      auto px = coding_map(ctx, smp.point, pd).prefix;
      for (int s = 0; s < 4; ++s) {
        auto y = ctx.snap(f.sys.maps[s](smp.point));
        auto py = coding_map(ctx, y, pd).prefix;
        Letters sx{f.sys.alphabet.symbol_letter(s)};
        sx.insert(sx.end(), px.begin(), px.end());
        sx = free_reduce(sx);
        REQUIRE(sx.size() >= pd - 1);
        CHECK(std::equal(sx.begin(), sx.begin() + (pd - 1), py.begin()));
      }
    }
  }
  CHECK_THROWS_AS(coding_map(projective().ctx(), line_point({1, 0, 0}), 5), Unsupported);
}

TEST_CASE("codes are monotone in eta", "[coding][property]") {
  for (const Fixture* f : {&schottky(), &boundary(), &covered()}) {
    auto ctx = f->ctx();
    for (auto i : spread_indices(f->d.net.size(), 20)) {
      auto c = make_code(ctx, f->d.delta, f->d.net[i].point, 15);
      for (double k : {1.0, 0.5, 0.25, 0.01}) CHECK(is_code(ctx, c, k * f->d.delta));
    }
  }
}

TEST_CASE("enumerated codes nest, shrink and give quasigeodesic rays", "[coding][property]") {
  for (const Fixture* f : {&schottky(), &boundary(), &covered(), &projective(), &cyclic()}) {
    INFO(f->sys.name);
    auto ctx = f->ctx();
    for (auto i : spread_indices(f->d.net.size(), 6)) {
      auto set = enumerate_codes(ctx, f->d.delta, f->d.net[i].point, 12, 60);
      for (const auto& c : set.codes) {
        REQUIRE(is_code(ctx, c, f->d.delta));
        for (const auto& s : nested_images(ctx, c, f->d.delta, 12, 32)) {
          CHECK(s.nested);
          CHECK(s.shrinking);
        }
        auto ray = make_ray(ctx, c);
        CHECK(quasigeodesic_check(f->sys.alphabet, f->d, ray).pass);
        // rays extend one letter at a time
        for (std::size_t k = 1; k < ray.size(); ++k)
          CHECK(f->sys.alphabet.equal(ray.words[k], f->sys.alphabet.multiply(ray.words[k - 1],
                                                                               f->sys.alphabet.symbol(f->d.symbol[c.alpha[k]]))));
        // special codes spell reduced words in free presentations
        if (f->sys.alphabet.is_free() && c.special)
          for (std::size_t k = 0; k < ray.size(); ++k) CHECK(f->sys.alphabet.length(ray.words[k]) == long(k + 1));
      }
    }
  }
}

TEST_CASE("coding map ignores tie-breaking", "[coding][property]") {
  const auto& f = schottky();
  auto ctx = f.ctx();
  for (auto i : spread_indices(f.d.net.size(), 50)) {
    auto x = f.d.net[i].point;
    CodePolicy rev;
    rev.reverse_ties = true;
    auto a = make_ray(ctx, make_code(ctx, f.d.delta, x, 40));
    auto b = make_ray(ctx, make_code(ctx, f.d.delta, x, 40, rev));
    CHECK(boundary_prefix(f.sys.alphabet, a.words, 15) == boundary_prefix(f.sys.alphabet, b.words, 15));
  }
}

TEST_CASE("coding map is not constant on balls", "[coding][property]") {
  // quasi-openness has no finite witness; the sampled proxy is that pi varies on every ball
  const auto& f = schottky();
  auto ctx = f.ctx();
  auto deep = f.sys.limit_net(7);
  for (auto i : spread_indices(f.d.net.size(), 30)) {
    auto x = f.d.net[i].point;
    for (double r : {f.d.delta, f.d.delta / 10}) {
      std::set<std::string> images;
      for (const auto& s : deep)
        if (f.sys.space.distance(s.point, x) < r) images.insert(letters(coding_map(ctx, s.point, 12).prefix));
      CHECK(images.size() >= 2);
    }
  }
}
