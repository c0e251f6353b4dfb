#include <doctest.h>

#include <cmath>
#include <vector>

#include "gengap/analytics.hpp"
#include "gengap/errors.hpp"
#include "gengap/rng.hpp"
#include "oracles.hpp"

using namespace gengap;
using doctest::Approx;

namespace {

ProcedureTable grid_table(const std::vector<Axis>& axes, const std::vector<double>& mu,
                          const std::vector<double>& g) {
  ProcedureTable t(axes);
  std::vector<std::size_t> idx(axes.size(), 0);
  for (std::size_t r = 0; r < mu.size(); ++r) {
    std::vector<std::string> a;
    std::size_t rem = r;
    for (const auto& ax : axes) {
      a.push_back(ax.values[rem % ax.values.size()]);
      rem /= ax.values.size();
    }
    t.add({"p" + std::to_string(r), a, mu[r], g[r]});
  }
  return t;
}

std::vector<oracle::Row> rows_of(const ProcedureTable& t) {
  std::vector<oracle::Row> out;
  for (const auto& r : t.rows()) out.push_back({r.assignment, r.mu, r.g});
  return out;
}

}  // namespace

TEST_SUITE("analytics") {
  TEST_CASE("standardize") {
    const auto s = standardize(std::vector<double>{1, 2, 3});
    CHECK(s.values[0] == Approx(-std::sqrt(1.5)).epsilon(1e-15));
    CHECK(s.values[1] == 0.0);
    CHECK(s.values[2] == Approx(std::sqrt(1.5)).epsilon(1e-15));
    CHECK(s.stdev == Approx(std::sqrt(2.0 / 3.0)));
    const auto again = standardize(s.values);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(again.values[i] - s.values[i]) < 1e-12);
    CHECK_THROWS_AS(standardize(std::vector<double>{2, 2, 2}), DegenerateInputError);
  }

  TEST_CASE("kendall tau examples") {
    CHECK(kendall_tau(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 1.0);
    CHECK(kendall_tau(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == -1.0);
    CHECK(kendall_tau(std::vector<double>{1, 2, 3}, std::vector<double>{2, 1, 3}) ==
          Approx(1.0 / 3.0));
    // Ties contribute 0.
    CHECK(kendall_tau(std::vector<double>{1, 1}, std::vector<double>{1, 2}) == 0.0);
    CHECK_THROWS(kendall_tau(std::vector<double>{1}, std::vector<double>{1}));
  }

  TEST_CASE("table validation") {
    ProcedureTable t({{"lr", {"a", "b"}}});
    t.add({"x", {"a"}, 0, 0});
    CHECK_THROWS_AS(t.add({"x", {"b"}, 0, 0}), DomainError);
    CHECK_THROWS_AS(t.add({"y", {"c"}, 0, 0}), DomainError);
    CHECK_THROWS_AS(t.add({"z", {"a", "b"}, 0, 0}), DomainError);
  }

  TEST_CASE("granulated kendall") {
    // Single axis: Psi is tau over the whole table.
    const std::vector<double> mu{0.3, 0.1, 0.7, 0.2}, g{0.2, 0.4, 0.9, 0.1};
    const auto one = grid_table({{"a", {"1", "2", "3", "4"}}}, mu, g);
    CHECK(granulated_kendall(one).Psi == Approx(kendall_tau(mu, g)));
    // 2x2 with mu == g: every slice is concordant.
    const std::vector<double> v{1, 2, 3, 5};
    CHECK(granulated_kendall(grid_table({{"a", {"x", "y"}}, {"b", {"u", "v"}}}, v, v)).Psi ==
          1.0);
    // Missing cells are listed.
    ProcedureTable partial({{"a", {"x", "y"}}, {"b", {"u", "v"}}});
    partial.add({"p", {"x", "u"}, 1, 1});
    partial.add({"q", {"y", "v"}, 2, 2});
    try {
      granulated_kendall(partial);
      FAIL("expected an incomplete-grid error");
    } catch (const DomainError& e) {
      CHECK(std::string(e.what()).find("(y,u)") != std::string::npos);
      CHECK(std::string(e.what()).find("(x,v)") != std::string::npos);
    }
  }

  TEST_CASE("granulated kendall matches the nested-loop oracle on 3x2 grids") {
    RandomStream rng(4);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> mu, g;
      for (int i = 0; i < 6; ++i) {
        mu.push_back(rng.uniform());
        g.push_back(rng.uniform());
      }
      const auto table = grid_table({{"a", {"1", "2", "3"}}, {"b", {"x", "y"}}}, mu, g);
      const auto got = granulated_kendall(table);
      const auto [Psi, per_axis] = oracle::psi(rows_of(table), 2);
      CHECK(std::abs(got.Psi - Psi) < 1e-12);
      for (int a = 0; a < 2; ++a) CHECK(std::abs(*got.per_axis[a] - *per_axis[a]) < 1e-12);
    }
  }

  TEST_CASE("mi kappa special cases") {
    // V_mu == V_g with both signs present: perfect dependence.
    const std::vector<double> v{1, 2, 3, 4};
    const auto same = grid_table({{"a", {"x", "y"}}, {"b", {"u", "v"}}}, v, v);
    CHECK(mi_kappa(same, 0).kappa_s0 == Approx(1.0).epsilon(1e-12));

    // Constant target: zero entropy names S.
    const std::vector<double> flat{1, 1, 1, 1};
    const auto degenerate = grid_table({{"a", {"x", "y"}}, {"b", {"u", "v"}}}, v, flat);
    try {
      mi_kappa(degenerate, 0);
      FAIL("expected DegenerateInputError");
    } catch (const DegenerateInputError& e) {
      CHECK(std::string(e.what()).find("S = {}") != std::string::npos);
    }
  }

  TEST_CASE("mi kappa on a product law is zero") {
    // Three concordant and three discordant pairs, no ties: over ordered
    // pairs the four sign combinations are equally likely.
    const std::vector<double> mu{1, 2, 3, 4}, g{2, 4, 1, 3};
    const auto t = grid_table({{"k", {"a", "b", "c", "d"}}}, mu, g);
    CHECK(kendall_tau(mu, g) == 0.0);
    CHECK(std::abs(mi_kappa(t, 0).kappa_s0) < 1e-15);
  }

  TEST_CASE("mi kappa matches the joint-counting oracle") {
    RandomStream rng(12);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> mu, g;
      for (int i = 0; i < 6; ++i) {
        mu.push_back(rng.uniform());
        g.push_back(rng.uniform());
      }
      const auto table = grid_table({{"a", {"1", "2", "3"}}, {"b", {"x", "y"}}}, mu, g);
      const auto got = mi_kappa(table, 1);
      const auto want = oracle::kappa(rows_of(table), 2, 1);
      CHECK(std::abs(got.kappa - want.kappa) < 1e-12);
      CHECK(std::abs(got.kappa_s0 - want.s0) < 1e-12);
      CHECK(got.per_condition.size() == 3);
    }
  }

  TEST_CASE("loo linear prediction error") {
    CHECK(loo_linear_prediction_error(std::vector<double>{1, 2, 3, 4},
                                      std::vector<double>{3, 5, 7, 9}) < 1e-12);
    const std::vector<double> x{0.0, 1.0, 3.0, 4.0}, y{1.0, 0.0, 2.0, 5.0};
    CHECK(loo_linear_prediction_error(x, y) == Approx(oracle::loo(x, y)).epsilon(1e-12));
    CHECK_THROWS(loo_linear_prediction_error(std::vector<double>{1, 2},
                                             std::vector<double>{1, 2}));
  }
}
