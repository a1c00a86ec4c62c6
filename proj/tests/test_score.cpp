#include "oracles.hpp"
#include "sgmlab/rng.hpp"
#include "sgmlab/score.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace sgm;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

double rel_error(const Vector& a, const Vector& ref) { return (a - ref).norm() / std::max(ref.norm(), 1.0); }

}  // namespace

TEST_SUITE("score") {
    TEST_CASE("log density examples") {
        const GaussianMixtureMeasure std2({{Vector::Zero(2), Matrix::Identity(2, 2), 1.0}});
        CHECK(log_density(std2, Vector::Zero(2)) == doctest::Approx(-std::log(2 * std::numbers::pi)).epsilon(1e-15));
        CHECK(log_density(std2, Vector::Zero(2)) == doctest::Approx(-1.837877).epsilon(1e-6));

        const GaussianMixtureMeasure two({{vec({-2}), Matrix::Identity(1, 1), 0.5}, {vec({2}), Matrix::Identity(1, 1), 0.5}});
        CHECK(log_density(two, vec({0})) == doctest::Approx(-2.918939).epsilon(1e-6));

        const auto p1 = pushforward(SdeSpec(SdeKind::Brownian, 1, 1), Measure(oracle::fig1_mixture()), 1.0);
        for (double x : {-3.0, 0.0, 0.7, 2.0, 9.0})
            CHECK(std::abs(log_density(p1, vec({x})) - oracle::log_density(p1, vec({x}))) < 1e-12);
    }

    TEST_CASE("singular covariance is rejected pointwise") {
        const Measure cloud{make_circle_points(3, 1.0)};
        CHECK_THROWS_AS(log_density(as_mixture(cloud), Vector::Zero(2)), std::invalid_argument);
    }

    TEST_CASE("score examples") {
        PointSet origin(1, 2);
        const Measure point{PointCloudMeasure(origin)};
        const SdeSpec b2(SdeKind::Brownian, 2, 1);
        const auto s = score(b2, point, 1.0, vec({2, 0}));
        CHECK(s(0) == doctest::Approx(-2.0));
        CHECK(s(1) == doctest::Approx(0.0));

        PointSet pm(2, 1);
        pm.row(0)[0] = -2;
        pm.row(1)[0] = 2;
        CHECK(std::abs(score(SdeSpec(SdeKind::Brownian, 1, 1), Measure(PointCloudMeasure(pm)), 1.0, vec({0}))(0)) < 1e-15);
    }

    TEST_CASE("circle score matches finite differences at t = 0.01") {
        const Measure circle{make_circle_points(9, 1.0)};
        const SdeSpec spec(SdeKind::Brownian, 2, 1);
        const auto p = pushforward(spec, circle, 0.01);
        Substream rng(3, StreamTag::Misc, 0);
        for (int i = 0; i < 20; ++i) {
            const double a = 2 * std::numbers::pi * rng.uniform();
            const Vector x = vec({1.2 * std::cos(a), 1.2 * std::sin(a)});
            const Vector fd = oracle::fd_gradient([&](const Vector& y) { return oracle::log_density(p, y); }, x, 1e-5);
            CHECK(rel_error(score(spec, circle, 0.01, x), fd) < 1e-5);
        }
    }

    TEST_CASE("gradient check over families") {
        const Measure circle{make_circle_points(9, 1.0)};
        const Measure mix{oracle::fig1_mixture()};
        Matrix full(2, 2);
        full << 0.5, 0.2, 0.2, 0.3;
        const Measure tilted{GaussianMixtureMeasure({{vec({1, 0}), full, 0.4}, {vec({-1, 1}), 0.1 * Matrix::Identity(2, 2), 0.6}})};
        Substream rng(9, StreamTag::Misc, 1);
        for (auto kind : {SdeKind::Brownian, SdeKind::OrnsteinUhlenbeck, SdeKind::CLD}) {
            for (const Measure* m : {&circle, &mix, &tilted}) {
                const SdeSpec spec(kind, measure_dim(*m), 1.0);
                for (int i = 0; i < 10; ++i) {
                    const double t = 0.02 + 0.98 * rng.uniform();
                    const auto p = pushforward(spec, *m, t);
                    Vector x(static_cast<Eigen::Index>(spec.state_dim()));
                    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = 2.0 * rng.normal();
                    const Vector fd = oracle::fd_gradient([&](const Vector& y) { return oracle::log_density(p, y); }, x, 1e-5);
                    CHECK(rel_error(score(spec, *m, t, x), fd) < 1e-5);
                }
            }
        }
    }

    TEST_CASE("responsibilities are normalised") {
        const SdeSpec spec(SdeKind::Brownian, 2, 1);
        const auto cm = MarginalScore(spec, Measure(make_circle_points(9, 1.0))).at(0.003);
        Substream rng(4, StreamTag::Misc, 2);
        std::vector<double> r(9);
        for (int i = 0; i < 200; ++i) {
            const double x[2] = {3 * rng.normal(), 3 * rng.normal()};
            cm.responsibilities(x, r.data());
            double sum = 0;
            for (double v : r) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }

    TEST_CASE("single atom score is the Gaussian score") {
        PointSet p(1, 3);
        p.row(0)[0] = 0.5;
        p.row(0)[1] = -1;
        p.row(0)[2] = 2;
        const SdeSpec spec(SdeKind::Brownian, 3, 1);
        const Vector x = vec({0.1, 0.2, 0.3});
        for (double t : {1e-6, 0.01, 1.0}) {
            const Vector expected = -(x - p.point(0)) / t;
            CHECK((score(spec, Measure(PointCloudMeasure(p)), t, x) - expected).norm() <= 1e-12 * expected.norm());
        }
    }

    TEST_CASE("far off support at tiny t stays finite") {
        const SdeSpec spec(SdeKind::Brownian, 2, 1);
        const Measure circle{make_circle_points(9, 1.0)};
        const Vector x = vec({30.0, -40.0});
        const auto s = score(spec, circle, 1e-8, x);
        CHECK(s.allFinite());
        // nearest atom dominates: angle of (30, -40) is closest to atom 8 at -40 degrees
        const auto atoms = std::get<PointCloudMeasure>(circle).points();
        std::size_t best = 0;
        for (std::size_t k = 1; k < 9; ++k)
            if ((x - atoms.point(k)).norm() < (x - atoms.point(best)).norm()) best = k;
        const Vector expected = -(x - atoms.point(best)) / 1e-8;
        CHECK((s - expected).norm() <= 1e-9 * expected.norm());
    }

    TEST_CASE("time zero") {
        const SdeSpec spec(SdeKind::Brownian, 1, 1);
                PointSet p(2, 1);
        p.row(1)[0] = 1;
        CHECK_THROWS_AS(MarginalScore(spec, Measure(PointCloudMeasure(p))).at(0.0), std::domain_error);
        const auto at0 = MarginalScore(spec, Measure(oracle::fig1_mixture())).at(0.0);
        const double x = 2.1;
        double g = 0;
        at0.score(&x, &g);
        CHECK(g == doctest::Approx(-(2.1 - 2.0) / 0.01).epsilon(1e-6));
    }

    TEST_CASE("reverse drift examples") {
        const Measure mix{oracle::fig1_mixture()};
        const SdeSpec b(SdeKind::Brownian, 1, 1);
        for (double tr : {0.0, 0.3, 0.9}) {
            const Vector y = vec({0.4});
            CHECK(reverse_drift(b, mix, DriftPerturbation::none(), tr, y)(0) == doctest::Approx(score(b, mix, 1 - tr, y)(0)));
            CHECK(reverse_drift(b, mix, DriftPerturbation::constant(vec({1})), tr, y)(0) ==
                  doctest::Approx(score(b, mix, 1 - tr, y)(0) + 1));
        }
        CHECK_THROWS_AS(reverse_drift(b, mix, DriftPerturbation::none(), 1.0, vec({0})), std::invalid_argument);
        CHECK_THROWS_AS(reverse_drift(b, mix, DriftPerturbation::none(), -0.1, vec({0})), std::invalid_argument);

        const Measure sym{make_circle_points(4, 1.0)};
        const SdeSpec ou(SdeKind::OrnsteinUhlenbeck, 2, 1);
        CHECK(reverse_drift(ou, sym, DriftPerturbation::none(), 0.5, Vector::Zero(2)).norm() < 1e-14);
        // OU: -beta(y) = y / 2 enters the drift
        const Vector y = vec({0.3, -0.2});
        CHECK((reverse_drift(ou, sym, DriftPerturbation::none(), 0.5, y) - (0.5 * y + score(ou, sym, 0.5, y))).norm() < 1e-14);

        const SdeSpec cld(SdeKind::CLD, 1, 1);
        const Vector z = vec({0.3, -0.7});
        const Vector s = score(cld, mix, 0.6, z);
        const Vector d = reverse_drift(cld, mix, DriftPerturbation::constant(vec({5, 1})), 0.4, z);
        CHECK(d(0) == doctest::Approx(-z(1)));  // -beta_x = -v, no score term on positions
        CHECK(d(1) == doctest::Approx(z(0) + 2 * z(1) + 4 * (s(1) + 1)));
    }

    TEST_CASE("radial and score-difference perturbations") {
        const SdeSpec b(SdeKind::Brownian, 2, 1);
        const Measure nine{make_circle_points(9, 1.0)};
        const Vector y = vec({0.2, 0.9});
        const auto radial = reverse_drift(b, nine, DriftPerturbation::radial(-0.5), 0.2, y);
        CHECK((radial - (score(b, nine, 0.8, y) - 0.5 * y)).norm() < 1e-12);
        const Measure dense{make_circle_points(256, 1.0)};
        const auto alt = reverse_drift(b, nine, DriftPerturbation::score_difference(dense), 0.2, y);
        CHECK((alt - score(b, dense, 0.8, y)).norm() < 1e-12);
        CHECK_THROWS_AS(DriftField(b, nine, DriftPerturbation::constant(vec({1, 2, 3}))), std::invalid_argument);
    }

    TEST_CASE("perturbation json") {
        for (const auto& p : {DriftPerturbation::none(), DriftPerturbation::constant(vec({0, -1})), DriftPerturbation::radial(0.25),
                              DriftPerturbation::score_difference(Measure(make_circle_points(5, 1.0)))}) {
            const auto j = perturbation_to_json(p);
            CHECK(perturbation_to_json(perturbation_from_json(j)) == j);
        }
        CHECK_THROWS(perturbation_from_json(nlohmann::json::parse(R"({"kind":"wobble"})")));
    }

    TEST_CASE("block and full compilation agree") {
        const SdeSpec cld(SdeKind::CLD, 2, 1);
        const Measure circle{make_circle_points(9, 1.0)};
        const auto fast = MarginalScore(cld, circle).at(0.3);
        const CompiledMixture generic(pushforward(cld, circle, 0.3));
        Substream rng(12, StreamTag::Misc, 0);
        for (int i = 0; i < 50; ++i) {
            double x[4], g1[4], g2[4];
            for (double& v : x) v = rng.normal();
            const double l1 = fast.score(x, g1), l2 = generic.score(x, g2);
            CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
            for (int k = 0; k < 4; ++k) CHECK(g1[k] == doctest::Approx(g2[k]).epsilon(1e-10));
        }
    }
}
