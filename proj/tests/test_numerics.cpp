#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "gengap/errors.hpp"
#include "gengap/numerics.hpp"
#include "gengap/rng.hpp"

using namespace gengap;
using doctest::Approx;

TEST_SUITE("numerics") {
  TEST_CASE("softmax examples") {
    auto p = softmax(std::vector<double>{0.0, 0.0});
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
    for (double c : {-50.0, 0.0, 7.0, 900.0}) {
      p = softmax(std::vector<double>{c, c, c});
      for (double v : p) CHECK(v == Approx(1.0 / 3.0).epsilon(1e-15));
    }
    p = softmax(std::vector<double>{std::log(2.0), 0.0});
    CHECK(p[0] == Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(p[1] == Approx(1.0 / 3.0).epsilon(1e-15));
  }

  TEST_CASE("softmax rejects non-finite and short input") {
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(softmax(std::vector<double>{0.0, inf}), NumericInputError);
    CHECK_THROWS_AS(softmax(std::vector<double>{std::nan(""), 1.0}), NumericInputError);
    CHECK_THROWS(softmax(std::vector<double>{1.0}));
  }

  TEST_CASE("log_softmax agrees with log of softmax") {
    const std::vector<double> z{1.5, -2.0, 0.25, 3.0};
    const auto p = softmax(z);
    const auto lp = log_softmax(z);
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(lp[i] == Approx(std::log(p[i])).epsilon(1e-14));
    }
  }

  TEST_CASE("kl_div examples and asymmetry") {
    const std::vector<double> a{0.9, 0.1}, b{0.8, 0.2};
    CHECK(kl_div(a, a) == 0.0);
    const double ab = 0.9 * std::log(0.9 / 0.8) + 0.1 * std::log(0.1 / 0.2);
    const double ba = 0.8 * std::log(0.8 / 0.9) + 0.2 * std::log(0.2 / 0.1);
    CHECK(kl_div(a, b) == Approx(ab).epsilon(1e-14));
    CHECK(kl_div(b, a) == Approx(ba).epsilon(1e-14));
    CHECK(kl_div(a, b) == Approx(0.03669).epsilon(1e-3));
    CHECK(kl_div(b, a) == Approx(0.04440).epsilon(1e-3));
  }

  TEST_CASE("kl_div zero handling and validation") {
    // p_i = 0 contributes nothing; q_i = 0 is clamped, so the value is finite.
    CHECK(kl_div(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}) ==
          Approx(std::log(2.0)));
    const double v = kl_div(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
    CHECK(std::isfinite(v));
    CHECK(v == Approx(0.5 * std::log(0.5 / 1.0) + 0.5 * std::log(0.5 / 1e-12)).epsilon(1e-12));
    CHECK_THROWS(kl_div(std::vector<double>{0.5, 0.6}, std::vector<double>{0.5, 0.5}));
    CHECK_THROWS(kl_div(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0}));
  }

  TEST_CASE("kl_div is nonnegative on random distributions") {
    RandomStream rng(123);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> p(4), q(4);
      double sp = 0, sq = 0;
      for (int i = 0; i < 4; ++i) {
        p[i] = rng.uniform() + 1e-3;
        q[i] = rng.uniform() + 1e-3;
        sp += p[i];
        sq += q[i];
      }
      for (int i = 0; i < 4; ++i) {
        p[i] /= sp;
        q[i] /= sq;
      }
      CHECK(kl_div(p, q) >= 0.0);
    }
  }

  TEST_CASE("cross_entropy examples") {
    CHECK(cross_entropy(std::vector<double>{0, 0}, 0) == Approx(std::log(2.0)).epsilon(1e-15));
    // -ln sigma(20) = ln(1 + e^-20)
    CHECK(cross_entropy(std::vector<double>{10, -10}, 0) ==
          Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
    CHECK(cross_entropy(std::vector<double>{10, -10}, 0) == Approx(2.06e-9).epsilon(1e-2));
    CHECK(cross_entropy(std::vector<double>{0, 0}, 0, 0.2) ==
          Approx(std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS(cross_entropy(std::vector<double>{0, 0}, 2));
    CHECK_THROWS(cross_entropy(std::vector<double>{0, 0}, 0, 1.0));
  }

  TEST_CASE("argmax breaks ties to the lowest index") {
    CHECK(argmax(std::vector<double>{0.2, 0.7, 0.1}) == 1);
    CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
    CHECK(argmax(std::vector<double>{0.1, 0.45, 0.45}) == 1);
  }

  TEST_CASE("pairwise_sum matches exact sums") {
    std::vector<double> v;
    for (int i = 1; i <= 1000; ++i) v.push_back(i);
    CHECK(pairwise_sum(v) == 500500.0);
    CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
  }

  TEST_CASE("rng streams are deterministic and keyed") {
    CHECK(derive_seed(1, 2, 3, SeedRole::kData) == derive_seed(1, 2, 3, SeedRole::kData));
    CHECK(derive_seed(1, 2, 3, SeedRole::kData) != derive_seed(1, 3, 2, SeedRole::kData));
    CHECK(derive_seed(1, 2, 3, SeedRole::kData) != derive_seed(1, 2, 3, SeedRole::kInit));
    RandomStream a(9), b(9);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    RandomStream r(5);
    double mean = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double z = r.normal();
      mean += z;
      sq += z * z;
    }
    mean /= n;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
    CHECK(sq / n == Approx(1.0).epsilon(0.05));
    for (int i = 0; i < 1000; ++i) {
      const auto v = r.below(7);
      CHECK(v < 7);
      const double u = r.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
    }
  }
}
