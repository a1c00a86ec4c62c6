#include "oracles.hpp"
#include "sgmlab/integrate.hpp"
#include "sgmlab/parallel.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

using namespace sgm;

namespace {

std::vector<double> first_coordinate(const PointSet& ps) {
    std::vector<double> out(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) out[i] = ps.row(i)[0];
    return out;
}

std::pair<double, double> mean_var(const std::vector<double>& xs) {
    double m = 0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double v = 0;
    for (double x : xs) v += (x - m) * (x - m);
    return {m, v / static_cast<double>(xs.size() - 1)};
}

}  // namespace

TEST_SUITE("integrate") {
    TEST_CASE("schedule validation") {
        CHECK_THROWS_AS(StepSchedule({}), std::invalid_argument);
        CHECK_THROWS_AS(StepSchedule({{0.1, 1.0, 0.1}}), std::invalid_argument);
        CHECK_THROWS_AS(StepSchedule({{0.0, 1.0, 0.0}}), std::invalid_argument);
        CHECK_THROWS_AS(StepSchedule({{0.0, 1.0, 0.3}}), std::invalid_argument);
        CHECK_THROWS_AS(StepSchedule({{0.0, 0.5, 0.1}, {0.6, 1.0, 0.1}}), std::invalid_argument);
        CHECK_THROWS_AS(StepSchedule::uniform(1.0, 0), std::invalid_argument);
        CHECK_THROWS_AS(StepSchedule::preset("cosine", 1.0), std::invalid_argument);
        CHECK_NOTHROW(StepSchedule({{0.0, 0.5, 0.1}, {0.5, 1.0, 0.01}}));
    }

    TEST_CASE("presets") {
        const auto u = StepSchedule::preset("uniform_2000", 1.0);
        CHECK(u.steps() == 2000);
        CHECK(u.last_step() == doctest::Approx(5e-4));
        const auto s = StepSchedule::preset("three_segment", 1.0);
        CHECK(s.steps() == 3000);
        CHECK(s.total_time() == doctest::Approx(1.0));
        CHECK(s.last_step() == doctest::Approx(1e-5));
        CHECK(s.step_size(0) == doctest::Approx(9e-4));
        CHECK(s.step_size(1500) == doctest::Approx(9e-5));
        CHECK(s.grid()[s.index_of(0.9)] == doctest::Approx(0.9));
        CHECK(s.index_of(0.99) == 2000);
        CHECK_THROWS_AS(s.index_of(0.5), std::invalid_argument);
        const auto s2 = StepSchedule::three_segment(2.0);
        CHECK(s2.total_time() == doctest::Approx(2.0));
        CHECK(s2.last_step() == doctest::Approx(2e-5));
    }

    TEST_CASE("schedule json") {
        const auto s = StepSchedule({{0.0, 0.5, 0.1}, {0.5, 1.0, 0.01}});
        CHECK(schedule_from_json(schedule_to_json(s), 1.0).grid() == s.grid());
        CHECK(schedule_from_json("three_segment", 1.0).steps() == 3000);
        CHECK_THROWS(schedule_from_json(nlohmann::json::parse("[[0, 1]]"), 1.0));
        CHECK_THROWS(schedule_from_json(nlohmann::json::parse("[[0, 0.5, 0.1]]"), 1.0).index_of(1.0));
    }

    TEST_CASE("one step variance matches dt") {
        PointSet origin(1, 1);
        const SdeSpec b(SdeKind::Brownian, 1, 1);
        const auto sched = StepSchedule({{0.0, 0.5, 0.5}, {0.5, 1.0, 0.5}});
        const std::vector<double> times{0.5};
        const auto e = simulate_forward(b, Measure(PointCloudMeasure(origin)), sched, 40000, 5, times);
        const auto [m, v] = mean_var(first_coordinate(e.states[0]));
        const double se = 0.5 * std::sqrt(2.0 / 40000);
        CHECK(std::abs(v - 0.5) < 4 * se);
        CHECK(std::abs(m) < 4 * std::sqrt(0.5 / 40000));
    }

    TEST_CASE("OU keeps the standard normal stationary") {
        const SdeSpec ou(SdeKind::OrnsteinUhlenbeck, 1, 2);
        const auto sched = StepSchedule::uniform(2.0, 200);
        const std::vector<double> times{0.0, 1.0, 2.0};
        const auto e = simulate_forward(ou, Measure(oracle::gaussian_1d(0, 1)), sched, 20000, 6, times);
        for (const auto& s : e.states) {
            const auto [m, v] = mean_var(first_coordinate(s));
            CHECK(std::abs(m) < 0.03);
            CHECK(std::abs(v - 1.0) < 0.04);
        }
    }

    TEST_CASE("forward marginals match the closed form") {
        const Measure mix{oracle::fig1_mixture()};
        for (auto kind : {SdeKind::Brownian, SdeKind::OrnsteinUhlenbeck}) {
            const SdeSpec spec(kind, 1, 1);
            const std::vector<double> times{0.25, 1.0};
            const auto e = simulate_forward(spec, mix, StepSchedule::uniform(1.0, 400), 50000, 8, times);
            for (std::size_t r = 0; r < times.size(); ++r) {
                const auto ref = pushforward(spec, mix, times[r]);
                CHECK(oracle::histogram_l1(first_coordinate(e.states[r]), ref, -5, 5, 40) < 0.05);
            }
        }
    }

    TEST_CASE("CLD forward starts velocities at N(0, I)") {
        const SdeSpec cld(SdeKind::CLD, 1, 1);
        const std::vector<double> times{0.0};
        const auto e = simulate_forward(cld, Measure(oracle::fig1_mixture()), StepSchedule::uniform(1.0, 10), 20000, 2, times);
        CHECK(e.dim == 2);
        std::vector<double> v(e.path_count);
        for (std::size_t p = 0; p < v.size(); ++p) v[p] = e.states[0].row(p)[1];
        const auto [m, var] = mean_var(v);
        CHECK(std::abs(m) < 0.03);
        CHECK(std::abs(var - 1) < 0.04);
    }

    TEST_CASE("empty ensemble") {
        const SdeSpec b(SdeKind::Brownian, 2, 1);
        const std::vector<double> times{0.5, 1.0};
        const auto e = simulate_forward(b, Measure(make_circle_points(4, 1)), StepSchedule::uniform(1, 10), 0, 1, times);
        CHECK(e.path_count == 0);
        CHECK(e.states.size() == 2);
        CHECK(e.states[1].size() == 0);
        const Measure prior{GaussianMixtureMeasure({{Vector::Zero(2), Matrix::Identity(2, 2), 1}})};
        const auto r = simulate_reverse(b, Measure(make_circle_points(4, 1)), DriftPerturbation::none(), prior,
                                        StepSchedule::uniform(1, 10), 0, 1, times);
        CHECK(r.path_count == 0);
    }

    TEST_CASE("record time validation") {
        const SdeSpec b(SdeKind::Brownian, 1, 1);
        const Measure m{oracle::fig1_mixture()};
        const auto sched = StepSchedule::uniform(1, 10);
        const std::vector<double> off{0.55};
        const std::vector<double> backwards{0.5, 0.2};
        CHECK_THROWS_AS(simulate_forward(b, m, sched, 5, 1, off), std::invalid_argument);
        CHECK_THROWS_AS(simulate_forward(b, m, sched, 5, 1, backwards), std::invalid_argument);
        CHECK_THROWS_AS(simulate_forward(b, m, StepSchedule::uniform(2, 10), 5, 1, std::vector<double>{1.0}), std::invalid_argument);
        CHECK_THROWS_AS(simulate_reverse(b, m, DriftPerturbation::none(), Measure(make_circle_points(3, 1)), sched, 5, 1,
                                         std::vector<double>{1.0}),
                        std::invalid_argument);
    }

    TEST_CASE("determinism across seeds and threads") {
        const SdeSpec b(SdeKind::Brownian, 2, 1);
        const Measure data{make_circle_points(9, 1)};
        const Measure prior{GaussianMixtureMeasure({{Vector::Zero(2), Matrix::Identity(2, 2), 1}})};
        const auto sched = StepSchedule::uniform(1, 50);
        const std::vector<double> times{0.5, 0.98};
        const unsigned before = thread_limit();
        set_thread_limit(1);
        const auto a = simulate_reverse(b, data, DriftPerturbation::none(), prior, sched, 300, 42, times);
        set_thread_limit(4);
        const auto c = simulate_reverse(b, data, DriftPerturbation::none(), prior, sched, 300, 42, times);
        set_thread_limit(before);
        const auto d = simulate_reverse(b, data, DriftPerturbation::none(), prior, sched, 300, 43, times);
        CHECK(a.states == c.states);
        CHECK_FALSE(a.states == d.states);
        // path i does not depend on the ensemble size
        const auto small = simulate_reverse(b, data, DriftPerturbation::none(), prior, sched, 10, 42, times);
        CHECK(small.states[1].point(7) == a.states[1].point(7));
    }

    TEST_CASE("ensemble csv") {
        const SdeSpec b(SdeKind::Brownian, 2, 1);
        const std::vector<double> times{0.0, 1.0};
        const auto e = simulate_forward(b, Measure(make_circle_points(3, 1)), StepSchedule::uniform(1, 4), 5, 1, times);
        const auto path = std::filesystem::temp_directory_path() / "sgmlab_ensemble_test.csv";
        write_ensemble_csv(e, path, 2);
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);
        CHECK(line == "path_id,time,x_0,x_1");
        int rows = 0;
        while (std::getline(in, line)) ++rows;
        CHECK(rows == 4);
        std::filesystem::remove(path);
    }
}
