#include <catch_amalgamated.hpp>

#include <random>

#include "shyp/expansion.hpp"

using namespace shyp;
using Catch::Matchers::WithinAbs;

namespace {

double fd_derivative(const PointMap& f, double theta, double h = 1e-6) {
  return std::abs(wrap_difference(angle(f(circle_point(theta + h))) - angle(f(circle_point(theta - h))))) / (2 * h);
}

std::shared_ptr<const ActionSystem> shared(ActionSystem s) { return std::make_shared<const ActionSystem>(std::move(s)); }

}  // namespace

TEST_CASE("cyclic datum", "[expansion]") {
  auto sys = make_cyclic_hyperbolic(2);
  auto d = build_expansion_datum(sys, 1.5);
  REQUIRE(d.size() == 2);
  CHECK(d.lambda >= 1.5);
  CHECK(d.L <= 4.05);
  CHECK(d.L >= d.lambda);
  CHECK(d.delta <= d.lebesgue);

  bool zero = false, inf = false;
  for (std::size_t a = 0; a < d.size(); ++a) {
    REQUIRE_FALSE(d.regions[a].empty);
    zero = zero || d.regions[a].contains(circle_point(0));
    inf = inf || d.regions[a].contains(circle_point(kPi));
    // membership agrees with the finite-difference sublevel set {|f'| > 1.5} away from its edges
    const auto& f = sys.maps[sys.alphabet.inverse_symbol(d.symbol[a])];
    for (int i = 0; i < 2000; ++i) {
      double t = kTwoPi * i / 2000;
      double m = d.regions[a].margin(circle_point(t));
      if (std::abs(m) < 1e-4) continue;
      CHECK((fd_derivative(f, t) > 1.5) == (m > 0));
    }
  }
  CHECK(zero);
  CHECK(inf);

  // L against finite-difference derivatives over the delta-neighborhood of the limit set
  double sup = 0;
  for (const auto& s : d.net)
    for (const auto& y : sys.space.ball_net(s.point, d.delta, 200))
      for (const auto& f : sys.maps) sup = std::max(sup, fd_derivative(f, angle(y)));
  CHECK(d.L >= sup * (1 - 1e-6));
  CHECK(d.L <= 1.01 * sup * (1 + 1e-6));
  CHECK_THAT(sup, WithinAbs(4.0, 1e-6));

  auto rep = verify_expansion(sys, d);
  INFO(rep.summary());
  CHECK(rep.pass());
  CHECK(rep.get("pairwise_expansion").slack >= 0);
}

TEST_CASE("verification reports failures with witnesses", "[expansion]") {
  auto sys = make_cyclic_hyperbolic(2);
  auto d = build_expansion_datum(sys, 1.5);
  auto bad = d;
  bad.delta = 2 * d.delta;
  auto rep = verify_expansion(sys, bad);
  CHECK_FALSE(rep.pass());
  const auto& leb = rep.get("lebesgue");
  CHECK_FALSE(leb.pass);
  CHECK_FALSE(leb.witness.empty());
  CHECK(leb.slack < 0);
  CHECK(rep.summary().find("lebesgue fails") != std::string::npos);
  CHECK(rep.csv().rfind("check,witness,slack,pass\n", 0) == 0);

  auto weak = d;
  weak.lambda = 4.5;
  weak.L = 4.5;
  CHECK_FALSE(verify_expansion(sys, weak).get("pairwise_expansion").pass);

  auto lip = d;
  lip.L = 2.0;
  CHECK_FALSE(verify_expansion(sys, lip).get("lipschitz").pass);
}

TEST_CASE("construction fails with a witness when the target is out of reach", "[expansion]") {
  auto sys = make_cyclic_hyperbolic(2);
  try {
    build_expansion_datum(sys, 5.0);
    FAIL("expected a construction error");
  } catch (const ConstructionError& e) {
    CHECK_FALSE(e.witness.empty());
  }
  CHECK_THROWS_AS(build_expansion_datum(make_free_boundary(2, 2), 3.0), ConstructionError);
  CHECK_THROWS_AS(build_expansion_datum(sys, 1.0), PreconditionError);
  CHECK_THROWS_AS(build_expansion_datum(sys, 0.5), PreconditionError);
}

TEST_CASE("free boundary datum is exact", "[expansion]") {
  auto sys = make_free_boundary(2, 2.0);
  auto d = build_expansion_datum(sys, 2.0);
  REQUIRE(d.size() == 4);
  CHECK(d.delta == 0.9 * 0.25);
  CHECK(d.L == 2.0);
  CHECK(d.lambda == 2.0);
  std::set<std::string> labels;
  for (const auto& u : d.regions) labels.insert(u.label);
  CHECK(labels == std::set<std::string>{"[a]", "[A]", "[b]", "[B]"});
  auto rep = verify_expansion(sys, d);
  INFO(rep.summary());
  CHECK(rep.pass());

  // ball condition over the word net: every word within 2 eta of s^-1(x) comes from B_eta(x)
  const auto& m = sys.space;
  auto net = sys.limit_net(6);
  for (std::size_t a = 0; a < d.size(); ++a) {
    int s = d.symbol[a];
    const auto& f = sys.maps[sys.alphabet.inverse_symbol(s)];
    const auto& g = sys.maps[s];
    for (const auto& x : net) {
      if (!d.regions[a].contains(x.point)) continue;
      for (double eta : {d.delta, d.delta / 2, d.delta / 4}) {
        auto fx = f(x.point);
        for (const auto& z : net) {
          if (m.distance(fx, z.point) >= d.lambda * eta) continue;
          REQUIRE(m.distance(g(z.point), x.point) < eta);
        }
      }
    }
  }
}

TEST_CASE("refinement", "[expansion]") {
  auto sys = make_cyclic_hyperbolic(2);
  auto d = build_expansion_datum(sys, 1.5);
  d.delta = 0.1;
  auto r1 = refine_datum(d, 0.05);
  CHECK(r1.delta == 0.05);
  CHECK(r1.L == d.L);
  CHECK(r1.lambda == d.lambda);
  CHECK_THROWS_AS(refine_datum(d, 0.1), PreconditionError);
  CHECK_THROWS_AS(refine_datum(d, 0.2), PreconditionError);
  CHECK_THROWS_AS(refine_datum(d, 0.0), PreconditionError);
  // refinement is transitive: D2 < D1 < D0 gives D2 < D0
  auto r2 = refine_datum(r1, 0.02);
  auto direct = refine_datum(d, 0.02);
  CHECK(r2.delta == direct.delta);
  CHECK(r2.delta < d.delta);
  CHECK(verify_expansion(sys, r2).pass());
}

TEST_CASE("every zoo datum verifies", "[expansion][property]") {
  auto cyc = shared(make_cyclic_hyperbolic(2));
  auto sch = shared(make_schottky(default_schottky_generators()));
  std::vector<std::pair<ActionSystem, double>> cases{
      {*cyc, 1.5},
      {make_covered_cyclic(cyc, 3), 1.5},
      {*sch, 2.0},
      {make_free_boundary(2, 2.0), 2.0},
      {make_zn_projective({{9, 1, 3}, {9, 3, 1}}), 2.0},
      {make_product(sch, sch, true), 2.0},
  };
  for (const auto& [sys, lt] : cases) {
    INFO(sys.name);
    auto d = build_expansion_datum(sys, lt);
    auto rep = verify_expansion(sys, d);
    INFO(rep.summary());
    CHECK(rep.pass());
    CHECK(rep.get("pairwise_expansion").slack >= -1e-9);
    // symmetric generating set: every symbol and its inverse carry some index
    std::set<int> seen(d.symbol.begin(), d.symbol.end());
    for (int s = 0; s < sys.alphabet.num_symbols(); ++s) CHECK(seen.count(s));
  }
}

TEST_CASE("empty regions for the projective and swap generators", "[expansion]") {
  auto zn = make_zn_projective({{9, 1, 3}, {9, 3, 1}});
  auto d = build_expansion_datum(zn, 2.0);
  // regions sit at e0 (label g1), e1 (label g1^-1) and e2 (label g2^-1); label g2 stays empty
  std::size_t empty = 0;
  for (std::size_t a = 0; a < d.size(); ++a) {
    if (d.regions[a].empty) {
      ++empty;
      CHECK(d.symbol[a] == 2);
    }
  }
  CHECK(empty == 1);

  auto sch = shared(make_schottky(default_schottky_generators()));
  auto prod = make_product(sch, sch, true);
  auto dp = build_expansion_datum(prod, 2.0);
  CHECK(dp.symbol.back() == prod.alphabet.swap_symbol());
  CHECK(dp.regions.back().empty);
}

TEST_CASE("Lipschitz chain bound along words", "[expansion][property]") {
  auto sys = make_schottky(default_schottky_generators());
  auto d = build_expansion_datum(sys, 2.0);
  std::mt19937_64 gen(31);
  std::uniform_int_distribution<int> sym(0, 3);
  std::uniform_int_distribution<std::size_t> pick(0, d.net.size() - 1);
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 5; ++k) {
    double r = d.delta / std::pow(d.L, k - 1);
    for (int t = 0; t < 200; ++t) {
      Letters w;
      while (static_cast<int>(w.size()) < k) {
        int l = sys.alphabet.symbol_letter(sym(gen));
        if (w.empty() || l != -w.back()) w.push_back(l);
      }
      Word g = w;
      auto ball = sys.space.ball_net(d.net[pick(gen)].point, r, 16);
      for (std::size_t a = 1; a < ball.size(); ++a) {
        double dx = sys.space.distance(ball[0], ball[a]);
        double dy = sys.space.distance(apply(sys, g, ball[0]), apply(sys, g, ball[a]));
        worst = std::min(worst, std::pow(d.L, k) * dx - dy);
      }
    }
  }
  CHECK(worst >= -1e-12);
}

TEST_CASE("construction is deterministic", "[expansion][property]") {
  auto sys = make_schottky(default_schottky_generators());
  auto a = build_expansion_datum(sys, 2.0);
  auto b = build_expansion_datum(sys, 2.0);
  CHECK(a.delta == b.delta);
  CHECK(a.L == b.L);
  CHECK(a.symbol == b.symbol);
  REQUIRE(a.net.size() == b.net.size());
  for (std::size_t i = 0; i < a.net.size(); i += 7) {
    CHECK(a.net[i].point == b.net[i].point);
    for (std::size_t r = 0; r < a.size(); ++r) CHECK(a.regions[r].margin(a.net[i].point) == b.regions[r].margin(b.net[i].point));
  }
  CHECK(verify_expansion(sys, a).csv() == verify_expansion(sys, b).csv());
}
