#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "geomix/simulate.hpp"
#include "oracles.hpp"

using namespace geomix;

TEST_CASE("one track along a 6000 m domain places 101 footprints") {
  BBox domain{0, 0, 6000, 600};
  Mesh mesh = build_mesh(domain, 500, 500);
  DesignSpec spec;
  spec.domain = domain;
  spec.orbit_count = 1;
  spec.track_count = 1;
  spec.along_spacing = 60;
  spec.orbit_azimuth_deg = {90.0};  // due east
  spec.bands = 0;
  Rng rng(1);
  Design d = simulate_design(spec, mesh, rng);
  CHECK(d.n() == 101);
  for (int i = 0; i < d.n(); ++i) CHECK(d.y[i] == Catch::Approx(300.0));
}

TEST_CASE("orbits partition footprints and are all nonempty") {
  BBox domain{0, 0, 5000, 5000};
  Mesh mesh = build_mesh(domain, 500, 1000);
  DesignSpec spec;
  spec.domain = domain;
  spec.orbit_count = 2;
  spec.track_count = 3;
  spec.along_spacing = 100;
  spec.orbit_azimuth_deg = {20.0, 160.0};
  spec.bands = 0;
  Rng rng(2);
  Design d = simulate_design(spec, mesh, rng);
  int c0 = 0, c1 = 0;
  for (int o : d.orbit) {
    REQUIRE((o == 0 || o == 1));
    (o == 0 ? c0 : c1)++;
  }
  CHECK(c0 > 0);
  CHECK(c1 > 0);
}

TEST_CASE("covariate bands are standardized") {
  BBox domain{0, 0, 4000, 4000};
  Mesh mesh = build_mesh(domain, 400, 800);
  DesignSpec spec;
  spec.domain = domain;
  spec.orbit_count = 1;
  spec.track_count = 2;
  spec.along_spacing = 200;
  spec.bands = 3;
  spec.covariate_gp = {1.0, 1500.0};
  spec.covariate_cellsize = 200;
  Rng rng(3);
  Design d = simulate_design(spec, mesh, rng);
  for (int b = 0; b < 3; ++b) {
    const VectorXd& v = d.covariates.values[b];
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().sum() / (v.size() - 1));
    CHECK(std::abs(mean) < 1e-6);
    CHECK(sd == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("design generation is pure given the seed") {
  BBox domain{0, 0, 3000, 3000};
  Mesh mesh = build_mesh(domain, 500, 500);
  DesignSpec spec;
  spec.domain = domain;
  spec.orbit_count = 2;
  spec.track_count = 2;
  spec.along_spacing = 150;
  spec.bands = 2;
  spec.covariate_cellsize = 300;
  Rng r1(9), r2(9);
  Design a = simulate_design(spec, mesh, r1);
  Design b = simulate_design(spec, mesh, r2);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.covariates.values[0] == b.covariates.values[0]);
  CHECK(a.footprint_covariates == b.footprint_covariates);
}

TEST_CASE("tracks that miss the domain raise EmptyDesign") {
  BBox domain{0, 0, 2000, 2000};
  Mesh mesh = build_mesh(domain, 500, 500);
  DesignSpec spec;
  spec.domain = domain;
  spec.orbit_count = 1;
  spec.track_count = 2;
  spec.across_spacing = 1e7;  // both tracks far outside
  spec.along_spacing = 100;
  spec.bands = 0;
  Rng rng(4);
  CHECK_THROWS_AS(simulate_design(spec, mesh, rng), EmptyDesign);
}

TEST_CASE("degenerate response: no noise, no field, no covariates") {
  BBox domain{0, 0, 3000, 3000};
  Mesh mesh = build_mesh(domain, 500, 500);
  DesignSpec spec;
  spec.domain = domain;
  spec.orbit_count = 1;
  spec.track_count = 1;
  spec.along_spacing = 200;
  spec.bands = 0;
  Rng rng(5);
  Design design = simulate_design(spec, mesh, rng);
  SimTruth truth;
  truth.mu1 = 2.7;
  truth.theta1 = {0.0, 1000.0};
  truth.tau21 = 0.0;
  auto [data, rec] = simulate_response(design, truth, ModelKind::Typical, mesh, rng);
  for (int i = 0; i < data.n(); ++i) CHECK(data.response[i] == 2.7);
}

TEST_CASE("mixture response is bimodal with even class probability") {
  BBox domain{0, 0, 8000, 8000};
  Mesh mesh = build_mesh(domain, 700, 1400);
  DesignSpec spec;
  spec.domain = domain;
  spec.orbit_count = 3;
  spec.track_count = 3;
  spec.along_spacing = 80;
  spec.bands = 0;
  Rng rng(6);
  Design design = simulate_design(spec, mesh, rng);
  SimTruth truth;
  truth.mu1 = 3.0;
  truth.mu0 = 1.0;
  truth.mu_z = 0.0;
  truth.theta1 = {0.01, 1000.0};
  truth.theta0 = {0.01, 1000.0};
  truth.thetaz = {0.0, 1000.0};  // pi == 1/2 everywhere
  truth.tau21 = 0.01;
  truth.tau20 = 0.01;
  auto [data, rec] = simulate_response(design, truth, ModelKind::Mixture, mesh, rng);
  REQUIRE(data.n() > 500);
  int hi = 0, lo = 0, mid = 0;
  for (int i = 0; i < data.n(); ++i) {
    const double y = data.response[i];
    if (std::abs(y - 3.0) < 0.8) ++hi;
    else if (std::abs(y - 1.0) < 0.8) ++lo;
    else ++mid;
  }
  CHECK(mid == 0);  // well-separated modes
  CHECK(std::abs(hi / double(data.n()) - 0.5) < 0.05);
  for (int i = 0; i < data.n(); ++i) CHECK(rec.pi[i] == Catch::Approx(0.5));
}

TEST_CASE("empirical variogram of simulated residuals tracks the Matern model") {
  BBox domain{0, 0, 8000, 8000};
  Mesh mesh = build_mesh(domain, 400, 1200);
  DesignSpec spec;
  spec.domain = domain;
  spec.orbit_count = 4;
  spec.track_count = 4;
  spec.along_spacing = 120;
  spec.across_spacing = 500;
  spec.bands = 0;
  SimTruth truth;
  truth.mu1 = 2.0;
  truth.theta1 = {0.3, 1500.0};
  truth.tau21 = 0.1;

  const int nbins = 10;
  const double bin_width = 300.0;
  std::vector<double> gamma_sum(nbins, 0.0);
  std::vector<long> gamma_n(nbins, 0);
  const int reps = 3;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng(100 + rep);
    Design design = simulate_design(spec, mesh, rng);
    auto [data, rec] = simulate_response(design, truth, ModelKind::Typical, mesh, rng);
    const VectorXd r = data.response.array() - truth.mu1;
    for (int i = 0; i < data.n(); ++i)
      for (int j = i + 1; j < data.n(); ++j) {
        const double d = std::hypot(data.easting[i] - data.easting[j],
                                    data.northing[i] - data.northing[j]);
        const int b = static_cast<int>(d / bin_width);
        if (b >= nbins) continue;
        gamma_sum[b] += 0.5 * (r[i] - r[j]) * (r[i] - r[j]);
        ++gamma_n[b];
      }
  }
  const double sill = truth.theta1.sigma2 + truth.tau21;
  for (int b = 1; b < nbins; ++b) {
    REQUIRE(gamma_n[b] > 1000);
    const double centre = (b + 0.5) * bin_width;
    const double expected = truth.tau21 + truth.theta1.sigma2 -
                            matern_cov(centre, truth.theta1);
    const double got = gamma_sum[b] / gamma_n[b];
    CHECK(std::abs(got - expected) < 0.25 * sill);
  }
}
