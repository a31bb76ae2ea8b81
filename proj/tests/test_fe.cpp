#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "speedgov/fe.hpp"

using namespace speedgov;

namespace {

// Explicit-dummy oracle via Frisch-Waugh: project y and X off the full dummy
// matrix (all levels of all factors; rank deficiency is fine because the
// projection is unique) and run plain OLS on the residuals.
Eigen::VectorXd dummy_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const std::vector<Factor>& factors) {
  int total_levels = 0;
  for (const auto& f : factors) total_levels += f.n_levels();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(y.size(), total_levels);
  int off = 0;
  for (const auto& f : factors) {
    for (int i = 0; i < y.size(); ++i) D(i, off + f.ids[i]) = 1.0;
    off += f.n_levels();
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd my = y - D * svd.solve(y);
  Eigen::MatrixXd mx(X.rows(), X.cols());
  for (int j = 0; j < X.cols(); ++j)
    mx.col(j) = X.col(j) - D * svd.solve(X.col(j));
  return (mx.transpose() * mx).ldlt().solve(mx.transpose() * my);
}

// Brute-force CRV1: the sandwich written out cluster by cluster.
Eigen::MatrixXd sandwich_oracle(const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& e,
                                const std::vector<int>& g, int n_g,
                                long k_total) {
  const int p = static_cast<int>(X.cols());
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (int c = 0; c < n_g; ++c) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < X.rows(); ++i)
      if (g[i] == c) s += X.row(i).transpose() * e[i];
    meat += s * s.transpose();
  }
  const double n = static_cast<double>(X.rows());
  const double corr = (double(n_g) / (n_g - 1.0)) * ((n - 1.0) / (n - k_total));
  const Eigen::MatrixXd bread =
      (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  return corr * bread * meat * bread;
}

std::vector<PanelRow> did_toy_panel(double beta, int n_cities = 6,
                                    int n_users_per_city = 8,
                                    unsigned seed = 11) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0, 1);
  std::normal_distribution<double> noise(0, 0.05);
  const std::vector<std::string> months = {"2023-09", "2023-10", "2023-11",
                                           "2023-12"};
  std::vector<PanelRow> rows;
  for (int c = 0; c < n_cities; ++c) {
    const double dose = 0.1 + 0.8 * c / (n_cities - 1.0);
    const double city_eff = 0.05 * unif(gen);
    for (int u = 0; u < n_users_per_city; ++u) {
      const double user_eff = 0.1 * unif(gen);
      for (std::size_t m = 0; m < months.size(); ++m) {
        for (int t = 0; t < 2; ++t) {
          PanelRow r;
          r.trip_id = "c" + std::to_string(c) + "u" + std::to_string(u) + "m" +
                      std::to_string(m) + "t" + std::to_string(t);
          r.user_id = "c" + std::to_string(c) + "u" + std::to_string(u);
          r.city_id = "c" + std::to_string(c);
          r.month_key = months[m];
          r.post = months[m] == "2023-12";
          r.dose = dose;
          r.night = unif(gen) < 0.3;
          r.weekend = unif(gen) < 0.3;
          r.same_route = unif(gen) < 0.4;
          r.log_consec_days = unif(gen);
          const double y = 0.3 + user_eff + city_eff + 0.02 * m +
                           beta * r.post * dose + noise(gen);
          r.y_harsh_accel = unif(gen) < y ? 1 : 0;
          rows.push_back(r);
        }
      }
    }
  }
  return rows;
}

CityMonthCell cell(const std::string& city, const std::string& month,
                   double mean, double dose, std::size_t n = 10) {
  CityMonthCell c;
  c.city_id = city;
  c.month_key = month;
  c.mean_outcome = mean;
  c.dose = dose;
  c.n_trips = n;
  return c;
}

}  // namespace

TEST_CASE("single-factor absorption is exact one-pass demeaning") {
  Eigen::MatrixXd X(6, 1);
  X << 1, 2, 3, 4, 5, 6;
  Eigen::VectorXd y(6);
  y << 2, 4, 6, 8, 10, 12;
  const Factor f = encode_factor("g", {"a", "a", "a", "b", "b", "b"});
  const AbsorbResult res = absorb_fe(X, y, {f});
  CHECK_THAT(res.X(0, 0), Catch::Matchers::WithinAbs(-1.0, 1e-14));
  CHECK_THAT(res.y[3], Catch::Matchers::WithinAbs(-2.0, 1e-14));
  CHECK(res.dof_absorbed == 2);
}

TEST_CASE("demeaning a constant column yields zeros") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(8, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Random(8);
  const Factor f =
      encode_factor("g", {"a", "b", "a", "b", "c", "c", "a", "b"});
  const AbsorbResult res = absorb_fe(X, y, {f});
  CHECK(res.X.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two-factor toy equals explicit-dummy OLS") {
  // 4 users x 3 months, 12 observations
  std::mt19937_64 gen(3);
  std::normal_distribution<double> noise(0, 1);
  std::vector<std::string> user_keys, month_keys;
  Eigen::MatrixXd X(12, 2);
  Eigen::VectorXd y(12);
  int i = 0;
  for (int u = 0; u < 4; ++u)
    for (int m = 0; m < 3; ++m, ++i) {
      user_keys.push_back("u" + std::to_string(u));
      month_keys.push_back("m" + std::to_string(m));
      X(i, 0) = noise(gen);
      X(i, 1) = noise(gen);
      y[i] = 0.5 * X(i, 0) - 0.2 * X(i, 1) + 0.3 * u - 0.1 * m + noise(gen);
    }
  const std::vector<Factor> factors = {encode_factor("user", user_keys),
                                       encode_factor("month", month_keys)};
  const AbsorbResult ab = absorb_fe(X, y, factors);
  const Eigen::VectorXd beta =
      (ab.X.transpose() * ab.X).ldlt().solve(ab.X.transpose() * ab.y);
  const Eigen::VectorXd oracle = dummy_ols(X, y, factors);
  CHECK_THAT(beta[0], Catch::Matchers::WithinAbs(oracle[0], 1e-8));
  CHECK_THAT(beta[1], Catch::Matchers::WithinAbs(oracle[1], 1e-8));
  // 4 users + 3 months - 1 connected component
  CHECK(ab.dof_absorbed == 4 + 3 - 1);
}

TEST_CASE("absorbed OLS equals dummy OLS on random 2- and 3-factor panels") {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> nrow_dist(40, 400);
  std::normal_distribution<double> noise(0, 1);
  for (int rep = 0; rep < 25; ++rep) {
    const int n = nrow_dist(gen);
    const int n_factors = 2 + rep % 2;
    std::vector<Factor> factors;
    for (int f = 0; f < n_factors; ++f) {
      std::uniform_int_distribution<int> lvl(0, 3 + 2 * f);
      std::vector<std::string> keys;
      for (int i = 0; i < n; ++i)
        keys.push_back("f" + std::to_string(f) + "_" +
                       std::to_string(lvl(gen)));
      factors.push_back(encode_factor("f" + std::to_string(f), keys));
    }
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = noise(gen);
      X(i, 1) = noise(gen);
      y[i] = 1.0 + 0.7 * X(i, 0) + noise(gen) +
             0.2 * factors[0].ids[i];
    }
    const AbsorbResult ab = absorb_fe(X, y, factors);
    const Eigen::VectorXd beta =
        (ab.X.transpose() * ab.X).ldlt().solve(ab.X.transpose() * ab.y);
    const Eigen::VectorXd oracle = dummy_ols(X, y, factors);
    REQUIRE_THAT(beta[0], Catch::Matchers::WithinAbs(oracle[0], 1e-8));
    REQUIRE_THAT(beta[1], Catch::Matchers::WithinAbs(oracle[1], 1e-8));
  }
}

TEST_CASE("CRV1 matches the written-out sandwich") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> noise(0, 1);
  const int n = 60;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  std::vector<int> g(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = noise(gen);
    X(i, 1) = noise(gen);
    g[i] = i % 5;
    y[i] = X(i, 0) - X(i, 1) + noise(gen);
  }
  const Eigen::VectorXd beta =
      (X.transpose() * X).ldlt().solve(X.transpose() * y);
  const Eigen::VectorXd e = y - X * beta;
  const long k = 2;
  const Eigen::MatrixXd got = cluster_cov(X, e, g, 5, k);
  const Eigen::MatrixXd want = sandwich_oracle(X, e, g, 5, k);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("CRV1 with one observation per cluster is the HC1-style correction") {
  // 3 observations, singleton clusters, single regressor: hand algebra.
  Eigen::MatrixXd X(3, 1);
  X << 1, 2, 3;
  Eigen::VectorXd y(3);
  y << 1.1, 1.9, 3.2;
  const Eigen::VectorXd beta =
      (X.transpose() * X).ldlt().solve(X.transpose() * y);
  const Eigen::VectorXd e = y - X * beta;
  const Eigen::MatrixXd v = cluster_cov(X, e, {0, 1, 2}, 3, 1);
  const double sxx = 1 + 4 + 9;
  const double mt = e[0] * e[0] * 1 + e[1] * e[1] * 4 + e[2] * e[2] * 9;
  const double want = (3.0 / 2.0) * (2.0 / 2.0) * mt / (sxx * sxx);
  CHECK_THAT(v(0, 0), Catch::Matchers::WithinAbs(want, 1e-14));
}

TEST_CASE("two-way clustering equals one-way when the dimensions coincide") {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> noise(0, 1);
  const int n = 40;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd e(n);
  std::vector<int> g(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = noise(gen);
    e[i] = noise(gen);
    g[i] = i % 4;
  }
  const Eigen::MatrixXd one = cluster_cov(X, e, g, 4, 1);
  const Eigen::MatrixXd two = two_way_cluster_cov(X, e, g, 4, g, 4, 1);
  CHECK((one - two).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cluster_cov requires at least two clusters") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(5, 1);
  Eigen::VectorXd e = Eigen::VectorXd::Random(5);
  CHECK_THROWS_AS(cluster_cov(X, e, {0, 0, 0, 0, 0}, 1, 1), EstimationError);
}

TEST_CASE("fit_did on a planted toy effect") {
  const auto rows = did_toy_panel(-0.4);
  FeSpec spec;
  spec.controls = {};
  const DidFit fit = fit_did(spec, rows);
  CHECK(fit.beta < 0.0);
  CHECK(fit.n_clusters == 6);
  CHECK(fit.n_months == 4);
  CHECK(fit.avg_city_delta_pp ==
        Catch::Approx(fit.beta * fit.tau_bar * 100.0));
  CHECK(fit.ci_low < fit.beta);
  CHECK(fit.ci_high > fit.beta);
  // Within-R2 cannot exceed overall R2 when the FE explain variance
  CHECK(fit.r2_within <= fit.r2_overall);
}

TEST_CASE("point estimate is invariant to the cluster mode") {
  const auto rows = did_toy_panel(-0.3);
  FeSpec spec;
  spec.controls = {"night", "weekend"};
  spec.cluster = ClusterMode::City;
  const DidFit a = fit_did(spec, rows);
  spec.cluster = ClusterMode::Month;
  const DidFit b = fit_did(spec, rows);
  spec.cluster = ClusterMode::TwoWay;
  const DidFit c = fit_did(spec, rows);
  CHECK(a.beta == Catch::Approx(b.beta).epsilon(1e-12));
  CHECK(a.beta == Catch::Approx(c.beta).epsilon(1e-12));
  CHECK(a.se != Catch::Approx(b.se));
}

TEST_CASE("constant dose is collinear with the month FE") {
  auto rows = did_toy_panel(-0.2);
  for (auto& r : rows) r.dose = 0.5;
  FeSpec spec;
  spec.controls = {};
  CHECK_THROWS_AS(fit_did(spec, rows), EstimationError);
}

TEST_CASE("missing dose is rejected") {
  auto rows = did_toy_panel(-0.2);
  rows[3].dose = kNaN;
  FeSpec spec;
  CHECK_THROWS_AS(fit_did(spec, rows), EstimationError);
}

TEST_CASE("event study: reference month is exactly zero, break shows in Dec") {
  const auto rows = did_toy_panel(-0.5, 8, 10);
  FeSpec spec;
  spec.controls = {};
  const EventStudyFit fit = fit_event_study(spec, rows, "2023-11");
  REQUIRE(fit.coefs.size() == 4);
  double dec_coef = 0;
  for (const auto& c : fit.coefs) {
    if (c.month_key == "2023-11") {
      CHECK(c.reference);
      CHECK(c.coef == 0.0);
    }
    if (c.month_key == "2023-12") dec_coef = c.coef;
  }
  CHECK(dec_coef < -0.1);
  CHECK(fit.pretrend_alpha == Catch::Approx(0.0125));
  CHECK_THROWS_AS(fit_event_study(spec, rows, "2031-01"), EstimationError);
}

TEST_CASE("placebo on a no-break aggregate panel is small; trends survive") {
  // Build a smooth aggregate panel with no dose-linked break.
  std::vector<CityMonthCell> cells;
  std::mt19937_64 gen(23);
  std::normal_distribution<double> noise(0, 0.003);
  const std::vector<std::string> months = {"2023-02", "2023-03", "2023-04",
                                           "2023-05", "2023-06", "2023-07"};
  for (int c = 0; c < 10; ++c) {
    const double dose = 0.1 + 0.07 * c;
    for (std::size_t m = 0; m < months.size(); ++m)
      cells.push_back(cell("c" + std::to_string(c), months[m],
                           0.2 + 0.01 * m + 0.02 * c + noise(gen), dose));
  }
  const DidFit lin = fit_placebo(cells, "2023-05", 1);
  CHECK(std::fabs(lin.beta) < 0.05);
  const DidFit quad = fit_placebo(cells, "2023-05", 2);
  CHECK(std::fabs(quad.beta) < 0.05);
  CHECK(lin.n_obs == cells.size());
}

TEST_CASE("placebo with quadratic trends needs enough months") {
  std::vector<CityMonthCell> cells;
  for (int c = 0; c < 5; ++c)
    for (const auto& m : {"2023-02", "2023-03"})
      cells.push_back(cell("c" + std::to_string(c), m, 0.2 + 0.01 * c,
                           0.1 + 0.1 * c));
  CHECK_THROWS_AS(fit_placebo(cells, "2023-03", 2), EstimationError);
}

TEST_CASE("city continuous DiD matches the closed form on a 5-city toy") {
  std::vector<CityMonthCell> cells;
  const double doses[5] = {0.1, 0.3, 0.5, 0.6, 0.8};
  const double pre[5] = {0.20, 0.22, 0.25, 0.24, 0.30};
  const double post[5] = {0.19, 0.18, 0.17, 0.15, 0.14};
  for (int c = 0; c < 5; ++c) {
    cells.push_back(cell("c" + std::to_string(c), "2023-10", pre[c], doses[c]));
    cells.push_back(cell("c" + std::to_string(c), "2023-12", post[c], doses[c]));
  }
  const CityDidFit fit = fit_city_continuous_did(cells, {"2023-10"}, "2023-12");
  // closed-form cov/var
  double dm = 0, cm = 0;
  double chg[5];
  for (int c = 0; c < 5; ++c) {
    chg[c] = post[c] - pre[c];
    dm += doses[c] / 5;
    cm += chg[c] / 5;
  }
  double sxy = 0, sxx = 0;
  for (int c = 0; c < 5; ++c) {
    sxy += (doses[c] - dm) * (chg[c] - cm);
    sxx += (doses[c] - dm) * (doses[c] - dm);
  }
  CHECK_THAT(fit.slope, Catch::Matchers::WithinAbs(sxy / sxx, 1e-12));
  CHECK(fit.n_cities == 5);

  // identical dose -> zero variance -> error
  std::vector<CityMonthCell> flat;
  for (int c = 0; c < 5; ++c) {
    flat.push_back(cell("c" + std::to_string(c), "2023-10", pre[c], 0.5));
    flat.push_back(cell("c" + std::to_string(c), "2023-12", post[c], 0.5));
  }
  CHECK_THROWS_AS(fit_city_continuous_did(flat, {"2023-10"}, "2023-12"),
                  EstimationError);
}

TEST_CASE("2x2 DiD matches hand arithmetic on 4 cities") {
  std::vector<CityMonthCell> cells;
  const double doses[4] = {0.1, 0.2, 0.7, 0.8};
  const double pre[4] = {0.20, 0.24, 0.30, 0.28};
  const double post[4] = {0.21, 0.22, 0.20, 0.16};
  for (int c = 0; c < 4; ++c) {
    cells.push_back(cell("c" + std::to_string(c), "2023-11", pre[c], doses[c]));
    cells.push_back(cell("c" + std::to_string(c), "2023-12", post[c], doses[c]));
  }
  const TwoByTwoFit fit = fit_2x2_did(cells, {"2023-11"}, "2023-12");
  const double high = ((0.20 - 0.30) + (0.16 - 0.28)) / 2.0;
  const double low = ((0.21 - 0.20) + (0.22 - 0.24)) / 2.0;
  CHECK_THAT(fit.att, Catch::Matchers::WithinAbs(high - low, 1e-12));
  CHECK(fit.n_high == 2);
  CHECK(fit.n_low == 2);

  // identical groups -> ATT 0
  std::vector<CityMonthCell> sym;
  for (int c = 0; c < 4; ++c) {
    sym.push_back(cell("c" + std::to_string(c), "2023-11", 0.2, doses[c]));
    sym.push_back(cell("c" + std::to_string(c), "2023-12", 0.25, doses[c]));
  }
  CHECK(fit_2x2_did(sym, {"2023-11"}, "2023-12").att ==
        Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("avg-city delta is linear in beta and tau") {
  DidFit fit;
  fit.beta = -0.1150;
  fit.tau_bar = 0.542;
  fit.avg_city_delta_pp = fit.beta * fit.tau_bar * 100.0;
  CHECK_THAT(fit.avg_city_delta_pp, Catch::Matchers::WithinAbs(-6.2330, 1e-10));
}
