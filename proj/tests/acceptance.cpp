// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance               exit 0 iff every criterion passes
//   acceptance --xfail 6     exit 0 iff exactly the listed criteria fail

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "shyp/stability.hpp"

using namespace shyp;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream note;
  std::string failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures += "[" + what + "] ";
    }
  }
};

std::shared_ptr<const ActionSystem> shared(ActionSystem s) { return std::make_shared<const ActionSystem>(std::move(s)); }

struct Setup {
  ActionSystem sys;
  ExpansionDatum d;
  Setup(ActionSystem s, double lt) : sys(std::move(s)), d(build_expansion_datum(sys, lt)) {}
  CodingContext ctx() const { return CodingContext(sys, d); }
  std::vector<LimitSample> sample(std::size_t n) const {
    std::vector<LimitSample> out;
    for (auto i : spread_indices(d.net.size(), n)) out.push_back(d.net[i]);
    return out;
  }
};

const Setup& schottky() {
  static Setup s(make_schottky(default_schottky_generators()), 2.0);
  return s;
}
const Setup& boundary() {
  static Setup s(make_free_boundary(2, 2.0), 2.0);
  return s;
}
const Setup& covered() {
  static Setup s(make_covered_cyclic(shared(make_cyclic_hyperbolic(2)), 3), 1.5);
  return s;
}
const Setup& projective() {
  static Setup s(make_zn_projective({{9, 1, 3}, {9, 3, 1}}), 2.0);
  return s;
}
const Setup& cyclic() {
  static Setup s(make_cyclic_hyperbolic(2), 1.5);
  return s;
}

void nested_shrinking(Verdict& v) {
  const auto& s = schottky();
  auto ctx = s.ctx();
  double worst_nest = std::numeric_limits<double>::infinity(), worst_rate = worst_nest;
  std::size_t steps = 0;
  for (const auto& x : s.sample(100)) {
    auto code = make_code(ctx, s.d.delta, x.point, 30);
    for (const auto& st : nested_images(ctx, code, s.d.delta, 30, 64, 1e-9)) {
      ++steps;
      worst_nest = std::min(worst_nest, st.containment_slack);
      // 2 L delta / lambda^i
      worst_rate = std::min(worst_rate, 2 * s.d.L * s.d.delta / std::pow(s.d.lambda, st.i) - st.diameter);
      v.require(st.nested, "not nested at step " + std::to_string(st.i));
    }
  }
  v.require(worst_nest >= -1e-9, "containment slack");
  v.require(worst_rate >= 0, "diameter bound");
  v.note << steps << " steps, min containment slack " << worst_nest << ", min rate slack " << worst_rate;
}

void expansivity(Verdict& v) {
  for (const Setup* s : {&schottky(), &boundary()}) {
    auto ctx = s->ctx();
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<std::size_t> pick(0, s->d.net.size() - 1);
    std::size_t worst_n = 0;
    double worst_sep = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 50;) {
      auto i = pick(gen), j = pick(gen);
      if (s->sys.space.distance(s->d.net[i].point, s->d.net[j].point) == 0) continue;
      ++t;
      try {
        auto w = expansivity_witness(ctx, s->d.net[i].point, s->d.net[j].point);
        worst_n = std::max(worst_n, w.n);
        worst_sep = std::min(worst_sep, w.separation);
        v.require(w.separation >= s->d.delta * (1 - 1e-6), "separation below delta");
      } catch (const NotFound&) {
        v.require(false, "no witness for pair " + std::to_string(i) + "," + std::to_string(j));
      }
    }
    v.note << s->sys.name << ": 50 pairs, max n " << worst_n << ", min separation/delta " << worst_sep / s->d.delta << "; ";
  }
}

void quasigeodesic(Verdict& v) {
  for (const Setup* s : {&schottky(), &boundary(), &covered(), &projective()}) {
    auto ctx = s->ctx();
    std::size_t rays = 0;
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& x : s->d.net) {
      auto set = enumerate_codes(ctx, s->d.delta, x.point, 20, 200);
      for (const auto& c : set.codes) {
        auto q = quasigeodesic_check(s->sys.alphabet, s->d, make_ray(ctx, c));
        ++rays;
        worst = std::min(worst, q.worst_slack);
        v.require(q.pass && !q.partial, s->sys.name + " ray outside the bounds");
      }
    }
    v.note << s->sys.name << ": " << rays << " rays, min slack " << worst << "; ";
  }
}

void certificates(Verdict& v) {
  {
    const auto& s = boundary();
    auto ctx = s.ctx();
    auto cert = shyp_certificate(ctx, s.d.net_points(), 20, 200, 4);
    v.require(cert.fellow_travel_ok && cert.N == 1, "free boundary N != 1");
    v.note << "free boundary N " << cert.N << "; ";
  }
  {
    const auto& s = covered();
    auto ctx = s.ctx();
    auto cert = shyp_certificate(ctx, s.d.net_points(), 20, 200, 4);
    v.require(cert.fellow_travel_ok && cert.N <= 4, "covered cyclic N > 4");
    v.note << "covered k=3 N " << cert.N << "; ";
  }
  {
    const auto& s = projective();
    auto ctx = s.ctx();
    auto cert = shyp_certificate(ctx, s.d.net_points(), 20, 200, 1);
    v.require(!cert.fellow_travel_ok, "Z^2 fellow travels at N=1");
    v.require(cert.meandering_ok && cert.max_chain <= 2, "Z^2 chain longer than 2");
    v.note << "Z^2 at N=1: fellow travel " << (cert.fellow_travel_ok ? "yes" : "no") << ", chain " << cert.max_chain;
  }
}

void stability_suite(Verdict& v) {
  const auto& s = schottky();
  auto ctx = s.ctx();
  auto net = s.sample(200);
  {
    auto ps = make_perturbed(s.sys, MatrixJitter{0, 7}, s.d, 1);
    auto t = conjugacy_map(ps, ctx, net);
    double worst = 0;
    for (const auto& e : t.entries) worst = std::max(worst, s.sys.space.distance(e.x, e.phi));
    v.require(worst <= 1e-12, "identity perturbation moved a point");
    v.note << "identity max |phi - id| " << worst << "; ";
  }
  std::vector<std::pair<std::string, Perturbation>> runs{
      {"jitter 1e-6", MatrixJitter{1e-6, 7}},
      {"bump 1e-6", BumpCompose{angle(s.d.net[s.d.net.size() / 3].point), 0.05, 1e-6}},
  };
  for (const auto& [name, p] : runs) {
    auto ps = make_perturbed(s.sys, p, s.d, 1);
    v.require(ps.distance() < ps.epsilon / 10, name + " d_Lip >= eps/10");
    if (!ps.admissible()) continue;
    auto t = conjugacy_map(ps, ctx, net);
    auto disp = check_displacement(s.sys.space, t.entries, ps.epsilon, s.d.delta);
    auto inj = check_injectivity(s.sys.space, t.entries, 1e-9, 1e-12, &ctx);
    v.require(t.all_converged && t.max_stop_diameter < 1e-9, name + " stop diameter");
    v.require(t.all_rate_ok, name + " rate");
    v.require(t.equivariance.max_residual < 1e-6, name + " equivariance");
    v.require(disp.below_epsilon && disp.below_delta_fifth, name + " displacement");
    v.require(inj.injective, name + " injectivity");
    bool datum_ok = false;
    try {
      auto dp = perturbed_datum(ps, s.d, t, s.d.delta / 10);
      VerifyOptions vo;
      vo.invariance_tol = 1e-7;
      datum_ok = verify_expansion(ps.perturbed, dp, vo).pass();
    } catch (const Error&) {
    }
    v.require(datum_ok, name + " perturbed datum");
    v.note << name << ": d_Lip/eps " << ps.distance() / ps.epsilon << ", displacement " << disp.max_displacement
           << ", equivariance " << t.equivariance.max_residual << "; ";
  }
}

void continuity(Verdict& v) {
  const auto& s = schottky();
  auto ctx = s.ctx();
  auto net = s.sample(200);
  std::vector<double> disp;
  for (double mag : {1e-4, 1e-5, 1e-6}) {
    auto ps = make_perturbed(s.sys, MatrixJitter{mag, 7}, s.d, 1);
    if (!ps.admissible()) {
      v.require(false, "magnitude " + std::to_string(mag) + " not admissible");
      v.note << "jitter " << mag << ": d_Lip " << ps.distance() << " >= eps " << ps.epsilon << "; ";
      disp.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    disp.push_back(conjugacy_map(ps, ctx, net, {}, false).displacement);
    v.note << "jitter " << mag << ": displacement " << disp.back() << "; ";
  }
  for (std::size_t i = 0; i + 1 < disp.size(); ++i)
    if (!std::isnan(disp[i]) && !std::isnan(disp[i + 1]))
      v.require(disp[i] / disp[i + 1] >= 2.0 / 1.5, "displacement not shrinking");
}

void coding(Verdict& v) {
  {
    const auto& s = schottky();
    auto ctx = s.ctx();
    std::set<Letters> seen;
    std::size_t mismatches = 0, compared = 0;
    const std::size_t pd = 20;
    std::vector<Letters> prefixes;
    for (const auto& x : s.d.net) {
      auto r = coding_map(ctx, x.point, pd);
      seen.insert(r.prefix);
      prefixes.push_back(r.prefix);
    }
    v.require(seen.size() == s.d.net.size(), "Schottky pi not injective");
    int top = 0;
    for (const auto& x : s.d.net) top = std::max(top, x.depth);
    for (std::size_t k = 0; k < s.d.net.size(); ++k) {
      if (s.d.net[k].depth >= top) continue;
      for (int sym = 0; sym < s.sys.alphabet.num_symbols(); ++sym) {
        ++compared;
        auto py = coding_map(ctx, ctx.snap(s.sys.maps[sym](s.d.net[k].point)), pd).prefix;
        Letters sx{s.sys.alphabet.symbol_letter(sym)};
        sx.insert(sx.end(), prefixes[k].begin(), prefixes[k].end());
        sx = free_reduce(sx);
        bool ok = sx.size() >= pd - 1 && py.size() >= pd - 1 && std::equal(sx.begin(), sx.begin() + (pd - 1), py.begin());
        mismatches += !ok;
      }
    }
    v.require(mismatches == 0, "equivariance");
    v.note << "Schottky: " << seen.size() << "/" << s.d.net.size() << " distinct prefixes, " << mismatches << "/" << compared
           << " equivariance mismatches; ";
  }
  {
    const auto& s = covered();
    auto ctx = s.ctx();
    std::map<Letters, int> fibers;
    for (const auto& x : s.d.net) ++fibers[coding_map(ctx, x.point, 20).prefix];
    bool ok = fibers.size() == 2;
    for (const auto& [w, n] : fibers) ok = ok && n == 3;
    v.require(ok, "covered pi not 3-to-1 onto two points");
    v.note << "covered k=3: " << s.d.net.size() << " points onto " << fibers.size() << " boundary points";
  }
}

void closed_form(Verdict& v) {
  const auto& s = cyclic();
  auto ctx = s.ctx();
  for (double t : {1e-3, 1e-4}) {
    auto ps = make_perturbed(s.sys, TranslateConjugate{t}, s.d, 1);
    if (!ps.admissible()) {
      v.require(false, "translation not admissible");
      continue;
    }
    auto e = conjugacy_point(ps, ctx, circle_point(0));
    double err = std::abs(angle_to_chart(angle(e.phi)) - t);
    v.require(e.converged && err < 1e-9, "phi(0) off the fixed point");
    v.note << "t " << t << ": |phi(0) - t| " << err << "; ";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> xfail;
  app.add_option("--xfail", xfail, "Criteria expected to fail")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"nested-shrinking", nested_shrinking}, {"expansivity", expansivity}, {"quasigeodesic", quasigeodesic},
      {"certificates", certificates},         {"stability", stability_suite}, {"continuity", continuity},
      {"coding-map", coding},                 {"closed-form", closed_form},
  };
  std::set<int> failed;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    int id = static_cast<int>(i) + 1;
    if (!v.pass) failed.insert(id);
    std::printf("criterion %d %-16s %s (%.1fs) %s\n", id, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL", secs,
                (v.failures + v.note.str()).c_str());
    std::fflush(stdout);
  }
  std::set<int> expected(xfail.begin(), xfail.end());
  if (!expected.empty()) {
    for (int id : expected)
      if (!failed.count(id)) std::printf("criterion %d was expected to fail but passed\n", id);
  }
  return failed == expected ? 0 : 1;
}
