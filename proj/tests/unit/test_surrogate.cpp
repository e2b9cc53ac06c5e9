#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "hbiuq/engine.hpp"
#include "hbiuq/error.hpp"
#include "hbiuq/surrogate.hpp"

using namespace hbiuq;

namespace {

std::span<const double> row_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Eigen::VectorXd row(const Eigen::MatrixXd& m, Eigen::Index i) { return m.row(i).transpose(); }

}  // namespace

TEST_CASE("LHS stratification") {
  Rng rng(10);
  std::vector<Bounds> b(4, Bounds{0, 5});
  auto design = lhs_sample(100, b, rng);
  CHECK(design.points.rows() == 100);
  CHECK(design.points.cols() == 4);
  CHECK(lhs_is_stratified(design));
  for (int j = 0; j < 4; ++j) {
    std::vector<double> col(design.points.col(j).data(), design.points.col(j).data() + 100);
    std::sort(col.begin(), col.end());
    for (int k = 0; k < 100; ++k) {
      CHECK(col[k] >= 5.0 * k / 100);
      CHECK(col[k] < 5.0 * (k + 1) / 100);
    }
  }
  auto one = lhs_sample(1, b, rng);
  for (int j = 0; j < 4; ++j) CHECK((one.points(0, j) >= 0 && one.points(0, j) < 5));

  std::vector<Bounds> bad{{1, 1}};
  CHECK_THROWS_AS(lhs_sample(5, bad, rng), ConfigError);
}

TEST_CASE("property: LHS projections are stratified and centred") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.index(200), d = 1 + rng.index(6);
    std::vector<Bounds> b;
    for (std::size_t j = 0; j < d; ++j) {
      double lo = rng.uniform(-5, 5);
      b.push_back({lo, lo + rng.uniform(0.1, 10)});
    }
    auto design = lhs_sample(n, b, rng);
    CHECK(lhs_is_stratified(design));
    for (std::size_t j = 0; j < d; ++j) {
      const double m = design.points.col(static_cast<Eigen::Index>(j)).mean();
      const double tol = 3 * (b[j].hi - b[j].lo) / std::sqrt(12.0 * static_cast<double>(n));
      CHECK(std::abs(m - 0.5 * (b[j].lo + b[j].hi)) <= tol);
    }
  }
}

TEST_CASE("polynomial basis size") {
  CHECK(polynomial_basis(4, 2).size() == 15);
  CHECK(polynomial_basis(1, 2).size() == 3);
  CHECK(polynomial_basis(3, 3).size() == 20);
  CHECK(polynomial_basis(5, 0).size() == 1);
}

TEST_CASE("fit_poly recovers an exact quadratic") {
  Eigen::MatrixXd x(10, 1), y(10, 1);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = -3.0 + 0.7 * i;
    y(i, 0) = 4 * x(i, 0) * x(i, 0) + 2 * x(i, 0) - 2;
  }
  auto s = fit_poly(x, y, 2);
  auto w = s.unscaled_weights();
  CHECK(std::abs(w(0, 0) + 2) < 1e-8);
  CHECK(std::abs(w(1, 0) - 2) < 1e-8);
  CHECK(std::abs(w(2, 0) - 4) < 1e-8);
  for (int i = 0; i < 10; ++i) {
    double xi = x(i, 0);
    CHECK(std::abs(s.predict(std::span<const double>(&xi, 1))(0) - y(i, 0)) < 1e-10);
  }
  double one = 1.0;
  CHECK(s.gradient(std::span<const double>(&one, 1))(0, 0) == doctest::Approx(10.0).epsilon(1e-10));
}

TEST_CASE("fit_poly on constant outputs") {
  Rng rng(1);
  std::vector<Bounds> b(2, Bounds{-1, 3});
  auto d = lhs_sample(30, b, rng);
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(30, 1, 7.5);
  auto s = fit_poly(d.points, y, 2);
  auto w = s.unscaled_weights();
  CHECK(std::abs(w(0, 0) - 7.5) < 1e-10);
  for (Eigen::Index k = 1; k < w.rows(); ++k) CHECK(std::abs(w(k, 0)) < 1e-10);

  auto s0 = fit_poly(d.points, y, 0);
  Eigen::VectorXd p = row(d.points, 0);
  auto g = s0.gradient(row_span(p));
  CHECK(g.norm() == 0.0);
}

TEST_CASE("fit_poly signals rank deficiency") {
  Eigen::MatrixXd x(6, 2), y(6, 1);
  for (int i = 0; i < 6; ++i) {
    x(i, 0) = i;
    x(i, 1) = 2.0 * i;  // collinear with column 0
    y(i, 0) = i;
  }
  CHECK_THROWS_AS(fit_poly(x, y, 1), NumericalError);
  try {
    fit_poly(x, y, 1);
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("dependent basis terms: x") != std::string::npos);
  }
}

TEST_CASE("property: in-family data recovers weights; gradients match finite differences") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t p = 1 + rng.index(3), deg = 1 + rng.index(3);
    auto basis = polynomial_basis(p, deg);
    Eigen::VectorXd truth(static_cast<Eigen::Index>(basis.size()));
    for (auto& t : truth) t = rng.uniform(-2, 2);
    std::vector<Bounds> b(p, Bounds{-1.5, 2.5});
    auto design = lhs_sample(3 * basis.size() + 5, b, rng);
    Eigen::MatrixXd y(design.points.rows(), 1);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      double s = 0;
      for (std::size_t k = 0; k < basis.size(); ++k) {
        double m = 1;
        for (std::size_t j = 0; j < p; ++j) m *= std::pow(design.points(i, static_cast<Eigen::Index>(j)), basis[k][j]);
        s += truth(static_cast<Eigen::Index>(k)) * m;
      }
      y(i, 0) = s;
    }
    auto fit = fit_poly(design.points, y, deg);
    CHECK((fit.unscaled_weights().col(0) - truth).cwiseAbs().maxCoeff() < 1e-8);

    for (int pt = 0; pt < 10; ++pt) {
      std::vector<double> x(p);
      for (auto& v : x) v = rng.uniform(-1, 2);
      auto g = fit.gradient(x);
      for (std::size_t j = 0; j < p; ++j) {
        auto xp = x, xm = x;
        const double h = 1e-6;
        xp[j] += h;
        xm[j] -= h;
        const double fd = (fit.predict(xp)(0) - fit.predict(xm)(0)) / (2 * h);
        CHECK(std::abs(fd - g(0, static_cast<Eigen::Index>(j))) <= 1e-7 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("GP interpolates, decays to the prior and fits sin") {
  const int n = 20;
  Eigen::MatrixXd x(n, 1), y(n, 1);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 2 * std::numbers::pi * i / (n - 1);
    y(i, 0) = std::sin(x(i, 0));
  }
  auto gp = fit_gp(x, y);
  const auto& out = gp.outputs()[0];
  for (int i = 0; i < n; ++i) {
    double xi = x(i, 0);
    std::span<const double> s(&xi, 1);
    CHECK(std::abs(gp.predict_mean(s, 0) - y(i, 0)) < 1e-6);
    CHECK(gp.predict_variance(s, 0) <= 10 * out.kernel.jitter);
  }

  double far = 1e4 * out.kernel.length_scales[0];
  std::span<const double> fs(&far, 1);
  CHECK(std::abs(gp.predict_mean(fs, 0) - out.prior_mean) < 1e-9);
  CHECK(gp.predict_variance(fs, 0) == doctest::Approx(out.kernel.signal_variance).epsilon(0.01));

  double mae = 0;
  const int m = 200;
  for (int i = 0; i < m; ++i) {
    double xi = 2 * std::numbers::pi * (i + 0.5) / m;
    mae += std::abs(gp.predict_mean(std::span<const double>(&xi, 1), 0) - std::sin(xi)) / m;
  }
  CHECK(mae < 0.01);
}

TEST_CASE("property: GP variance grows along a ray leaving the data") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 8;
    Eigen::MatrixXd x(n, 1), y(n, 1);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = i + 0.3 * rng.uniform();
      y(i, 0) = std::cos(x(i, 0)) + 0.1 * i;
    }
    auto gp = fit_gp(x, y);
    double prev = -1;
    for (int k = 0; k <= 60; ++k) {
      double xi = x(n - 1, 0) + 0.1 * k;
      double v = gp.predict_variance(std::span<const double>(&xi, 1), 0);
      CHECK(v >= 0.0);
      CHECK(v >= prev - 1e-12);
      prev = v;
    }
    double inner = x(0, 0);
    prev = -1;
    for (int k = 0; k <= 60; ++k) {
      double xi = inner - 0.1 * k;
      double v = gp.predict_variance(std::span<const double>(&xi, 1), 0);
      CHECK(v >= prev - 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("GP mean gradient matches finite differences") {
  Rng rng(5);
  std::vector<Bounds> b{{0, 2}, {-1, 1}};
  auto design = lhs_sample(30, b, rng);
  Eigen::MatrixXd y(30, 2);
  for (int i = 0; i < 30; ++i) {
    y(i, 0) = std::sin(design.points(i, 0)) * design.points(i, 1);
    y(i, 1) = design.points(i, 0) * design.points(i, 0) + design.points(i, 1);
  }
  auto gp = fit_gp(design.points, y);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> x{rng.uniform(0, 2), rng.uniform(-1, 1)};
    auto g = gp.mean_gradient(x);
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t j = 0; j < 2; ++j) {
        // Wide 5-point stencil: the mean is a sum of large cancelling terms.
        const double h = 1e-2;
        auto at = [&](double t) {
          auto xs = x;
          xs[j] += t;
          return gp.predict_mean(xs, o);
        };
        const double fd = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
        CHECK(std::abs(fd - g(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(j))) <=
              1e-6 * std::max(1.0, std::abs(fd)));
      }
  }
}

TEST_CASE("validation metrics") {
  Eigen::MatrixXd a(4, 1), p(4, 1);
  a << 1, 2, 3, 4;
  p << 1, 2, 3, 5;
  auto r = validate(p, a);
  CHECK(r.mae[0] == doctest::Approx(0.25));
  CHECK(r.mse[0] == doctest::Approx(0.25));
  CHECK(r.r2[0] == doctest::Approx(1.0 - 1.0 / 5.0));
  auto exact = validate(a, a);
  CHECK(exact.mae[0] == 0.0);
  CHECK(exact.r2[0] == 1.0);
}

TEST_CASE("convergence study") {
  std::vector<Bounds> b{{-2, 2}, {-1, 3}, {0, 1}};
  std::vector<std::size_t> sizes{10, 25, 50, 100, 200};
  ConvergenceOptions opt;
  opt.gp.restarts = 1;

  SUBCASE("quadratic forward model: degree-2 fit is exact") {
    auto f = at_control(quadratic_forward(), {0.7});
    Rng rng(3);
    auto rows = convergence_study(f, b, sizes, rng, opt);
    REQUIRE(rows.size() == sizes.size());
    for (const auto& r : rows) CHECK(r.poly_mae < 1e-10);
  }
  SUBCASE("constant forward model") {
    VectorFunction f = [](std::span<const double>) { return Eigen::VectorXd::Constant(2, 3.25); };
    Rng rng(4);
    auto rows = convergence_study(f, b, sizes, rng, opt);
    for (const auto& r : rows) {
      CHECK(r.poly_mae < 1e-10);
      CHECK(r.gp_mae < 1e-8);
    }
  }
  SUBCASE("single operating point of 100 design runs") {
    auto f = at_control(quadratic_forward(), {1.5});
    Rng rng(5);
    std::vector<std::size_t> one{100};
    auto rows = convergence_study(f, b, one, rng, opt);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].size == 100);
  }
}

TEST_CASE("surrogate save and load round trip") {
  Rng rng(8);
  ToyOptions topt;
  topt.groups = 3;
  auto data = generate_toy_data(topt, rng);
  std::vector<Bounds> b{{0, 8}, {-2, 6}, {-6, 2}};
  auto dir = std::filesystem::temp_directory_path() / "hbiuq_unit_surrogate";
  std::filesystem::create_directories(dir);
  for (auto kind : {SurrogateKind::Poly, SurrogateKind::Gp}) {
    GpOptions g;
    g.restarts = 1;
    auto table = fit_surrogate_table(quadratic_forward(), data.observations, b, 40, kind, 2, rng, g);
    auto path = dir / (kind == SurrogateKind::Poly ? "poly.json" : "gp.json");
    save_surrogate(table, path);
    auto back = load_surrogate(path);
    CHECK(back.is_poly() == table.is_poly());
    CHECK(back.controls == table.controls);
    auto f1 = make_surrogate_forward(std::make_shared<SurrogateTable>(table), 3);
    auto f2 = make_surrogate_forward(std::make_shared<SurrogateTable>(back), 3);
    CHECK(f1.has_jacobian() == (kind == SurrogateKind::Poly));
    std::vector<double> p{4, 2, -2}, o1(1), o2(1);
    for (const auto& c : table.controls) {
      f1.evaluate(p, c, o1);
      f2.evaluate(p, c, o2);
      CHECK(o1[0] == o2[0]);
      double truth = 4 * c[0] * c[0] + 2 * c[0] - 2;
      CHECK(o1[0] == doctest::Approx(truth).epsilon(1e-4));
    }
  }
  std::filesystem::remove_all(dir);
}
