#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "pdseg/noise_schedule.hpp"

using namespace pdseg;

// Reference values from tests/oracles/schedule_and_sampler.py (50-digit arithmetic).

TEST_CASE("cosine schedule T=4 matches high-precision reference") {
    const auto s = build_cosine_schedule(4);
    const double expected[] = {1.0, 0.84701216132690473446, 0.49384359044063771332,
                               0.14427210238573571088, 0.00014427210238573571088};
    for (int t = 0; t <= 4; ++t) CHECK(s.alpha_bar(t) == doctest::Approx(expected[t]).epsilon(1e-12));
    // the last beta is clipped, so alpha_bar(4) is exactly (1 - 0.999) * alpha_bar(3)
    CHECK(s.beta(4) == 0.999);
}

TEST_CASE("cosine schedule T=1000 endpoint") {
    const auto s = build_cosine_schedule(1000);
    CHECK(s.alpha_bar(1000) == doctest::Approx(2.428766907034468356e-9).epsilon(1e-9));
    const double bt = s.beta(1000) * (1.0 - s.alpha_bar(999)) / (1.0 - s.alpha_bar(1000));
    CHECK(bt == doctest::Approx(0.99899757608819212558).epsilon(1e-12));
}

TEST_CASE("schedule invariants hold for many lengths") {
    for (int T : {2, 3, 7, 50, 200, 999, 1000, 4000}) {
        for (const auto& s : {build_cosine_schedule(T), build_linear_schedule(T, 1e-4, 0.02)}) {
            CAPTURE(T);
            CHECK(s.alpha_bar(0) == 1.0);
            for (int t = 1; t <= T; ++t) {
                CHECK(s.beta(t) > 0.0);
                CHECK(s.beta(t) <= kMaxBeta);
                CHECK(s.alpha(t) == 1.0 - s.beta(t));
                CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
                CHECK(s.alpha_bar(t) == s.alpha_bar(t - 1) * s.alpha(t));
            }
        }
    }
}

TEST_CASE("linear schedule small examples") {
    const auto one = build_linear_schedule(1, 0.3, 0.3);
    CHECK(one.total_steps() == 1);
    CHECK(one.alpha_bar(1) == doctest::Approx(0.7).epsilon(1e-15));

    const auto three = build_linear_schedule(3, 0.1, 0.3);
    CHECK(three.beta(2) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(three.alpha_bar(3) == doctest::Approx(0.9 * 0.8 * 0.7).epsilon(1e-15));
}

TEST_CASE("schedule construction is pure") {
    CHECK(build_cosine_schedule(123) == build_cosine_schedule(123));
    CHECK(build_linear_schedule(17, 1e-3, 0.05) == build_linear_schedule(17, 1e-3, 0.05));
}

TEST_CASE("schedule argument validation") {
    CHECK_THROWS_AS(build_cosine_schedule(1), std::invalid_argument);
    CHECK_THROWS_AS(build_linear_schedule(0, 1e-4, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.02, 1e-4), std::invalid_argument);
    CHECK_THROWS_AS(build_linear_schedule(10, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule(ScheduleKind::Linear, {0.1, 1.0}), std::invalid_argument);
    const auto s = build_cosine_schedule(10);
    CHECK_THROWS_AS(s.check_step(0, "x"), std::invalid_argument);
    CHECK_THROWS_AS(s.check_step(11, "x"), std::invalid_argument);
    CHECK_NOTHROW(s.check_step(10, "x"));
    CHECK(schedule_kind_from_string(to_string(ScheduleKind::Linear)) == ScheduleKind::Linear);
    CHECK_THROWS_AS(schedule_kind_from_string("sigmoid"), std::invalid_argument);
}
