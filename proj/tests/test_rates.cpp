#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfg/io/config.hpp"
#include "mfg/rates.hpp"

#include <cmath>
#include <cstdlib>

using namespace mfg;

namespace {

IterationReport history(const std::vector<double>& du, const std::vector<double>& dm = {}, double sigma = 0.0) {
  IterationReport rep;
  rep.sigma = sigma;
  for (std::size_t i = 0; i < du.size(); ++i) {
    IterationRecord r;
    r.n = static_cast<int>(i);
    r.du_norm = du[i];
    r.dm_norm = dm.empty() ? 0.0 : dm[i];
    rep.rows.push_back(r);
  }
  return rep;
}

RunConfig<double> small() {
  return io::parse_experiment(
             "[grid]\nn = 32\nnt = 16\nT = 1\n[coupling]\nkind = kernel\nkernel = cosine\nsigma = 0.1\n"
             "[data]\nm0 = gaussian_bump\nuT = cosine\n[solver]\nR = 25\n")
      .run;
}

}  // namespace

TEST_CASE("contraction factor of synthetic histories") {
  std::vector<double> geo{std::nan("")};
  for (int i = 0; i < 12; ++i) geo.push_back(std::pow(0.5, i));
  const auto est = contraction_factor(history(geo));
  CHECK(est.c_star == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(est.first == 4);  // ceil(25% of 13 rows) skipped
  for (double r : est.ratios) CHECK(r == doctest::Approx(0.5));

  // the sigma-weighted m-difference enters the numerator
  std::vector<double> dm(geo.size(), 1.0);
  dm[0] = std::nan("");
  const auto weighted = contraction_factor(history(geo, dm, 1e-3));
  CHECK(weighted.c_star > 0.5);

  std::vector<double> quad{std::nan(""), 1e-1, 1e-2, 1e-4, 1e-8, 1e-16};
  const auto q = contraction_factor(history(quad), 1.0);
  CHECK(q.c_star == doctest::Approx(1e-2));

  CHECK_THROWS_AS(contraction_factor(history({std::nan(""), 1.0, 0.5})), InsufficientData);
  CHECK_THROWS_AS(contraction_factor(history({std::nan(""), 1.0, 1e-20, 1e-21, 1e-22, 1e-23})), InsufficientData);
}

TEST_CASE("order fit recovers exact orders") {
  std::vector<double> lin, sq;
  for (int i = 0; i < 10; ++i) lin.push_back(0.3 * std::pow(0.6, i));
  const auto p1 = order_fit(lin);
  CHECK(std::abs(p1.order - 1.0) <= 1e-6);
  CHECK(p1.constant == doctest::Approx(0.6));

  double e = 0.1;
  for (int i = 0; i < 5; ++i) {
    sq.push_back(e);
    e = 2 * e * e;
  }
  const auto p2 = order_fit(sq);
  CHECK(std::abs(p2.order - 2.0) <= 1e-6);
  CHECK(p2.constant == doctest::Approx(2.0));
  CHECK_FALSE(p2.truncated);

  // a round-off tail ends the sequence
  sq.push_back(1e-300);
  CHECK(std::abs(order_fit(sq, 1.0).order - 2.0) <= 1e-6);

  // non-monotone head is dropped
  std::vector<double> bumpy{1e-1, 2e-1, 1e-2, 1e-4, 1e-8};
  const auto fit = order_fit(bumpy);
  CHECK(fit.truncated);
  CHECK(fit.first == 1);

  CHECK_THROWS_AS(order_fit({1.0, 0.5}), InsufficientData);
  CHECK_THROWS_AS(order_fit({std::nan(""), 1.0, 1e-20, 1e-40}), InsufficientData);
}

TEST_CASE("sweep: validation, ordering, duplicates and thread independence") {
  const auto cfg = small();
  CHECK_THROWS_AS(sigma_sweep(cfg, {}), std::invalid_argument);
  CHECK_THROWS_AS(sigma_sweep(cfg, {0.1, -0.01}), std::invalid_argument);

  const auto t1 = sigma_sweep(cfg, {0.1, 0.05, 0.05}, 1);
  const auto t4 = sigma_sweep(cfg, {0.1, 0.05, 0.05}, 4);
  REQUIRE(t1.rows.size() == 3);
  CHECK(t1.rows[0].sigma == 0.1);
  CHECK(t1.rows[1].sigma == 0.05);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t1.rows[i].error.empty());
    CHECK(t1.rows[i].iterations == t4.rows[i].iterations);
    CHECK(t1.rows[i].final_residual == t4.rows[i].final_residual);
    REQUIRE(t1.rows[i].report.rows.size() == t4.rows[i].report.rows.size());
    for (std::size_t n = 1; n < t1.rows[i].report.rows.size(); ++n)
      CHECK(t1.rows[i].report.rows[n].combined == t4.rows[i].report.rows[n].combined);
  }
  const auto& a = t1.rows[1].report.rows;
  const auto& b = t1.rows[2].report.rows;
  REQUIRE(a.size() == b.size());
  for (std::size_t n = 1; n < a.size(); ++n) CHECK(a[n].du_norm == b[n].du_norm);
}

TEST_CASE("sweep over the reference problem") {
  const auto cfg = io::load_experiment(MFG_SOURCE_DIR "/configs/reference.ini").run;
  const auto table = sigma_sweep(cfg, {0.0, 0.02, 0.05, 0.1});
  REQUIRE(table.rows.size() == 4);
  for (const auto& row : table.rows) {
    CHECK(row.error.empty());
    CHECK(row.converged);
  }
  REQUIRE(table.rows[0].order);
  CHECK(table.rows[0].order->order >= 1.7);
  CHECK(table.rows[0].order->order <= 2.3);
  for (std::size_t i = 1; i < 3; ++i) {
    REQUIRE(table.rows[i].contraction);
    CHECK(table.rows[i].contraction->c_star < 1.0);
  }
  CHECK(table.empirical_threshold);
}

TEST_CASE("MFG_THREADS caps the sweep width") {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  ::setenv("MFG_THREADS", "3", 1);
  CHECK(sweep_threads() == 3);
  ::setenv("MFG_THREADS", "0", 1);
  CHECK(sweep_threads() == hw);
  ::setenv("MFG_THREADS", "two", 1);
  CHECK(sweep_threads() == hw);
  ::unsetenv("MFG_THREADS");
  CHECK(sweep_threads() == hw);
}
