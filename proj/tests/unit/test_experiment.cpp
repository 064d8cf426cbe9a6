#include <doctest.h>

#include "pdseg/experiment.hpp"
#include "pdseg/oracle_check.hpp"

using namespace pdseg;

namespace {

std::vector<Case> small_corpus() {
    CorpusConfig cfg;
    cfg.num_cases = 6;
    cfg.height = 16;
    cfg.width = 16;
    cfg.min_radius = 2.0;
    cfg.max_radius = 4.0;
    return generate_corpus(cfg);
}

std::vector<const Case*> pointers(const std::vector<Case>& cases) {
    std::vector<const Case*> out;
    for (const auto& c : cases) out.push_back(&c);
    return out;
}

}  // namespace

TEST_CASE("default T' grid and truncation point") {
    CHECK(default_tprime_grid(1000) == std::vector<int>{50, 100, 200, 300, 400, 500, 600, 700, 800, 1000});
    CHECK(default_tprime_grid(200) == std::vector<int>{10, 20, 40, 60, 80, 100, 120, 140, 160, 200});
    CHECK(default_tprime_grid(10) == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 10});
    CHECK(default_tprime(1000) == 300);
    CHECK(default_tprime(200) == 60);
}

TEST_CASE("pd at 0.3T saves exactly 70% of the evaluations") {
    const auto s = build_cosine_schedule(1000);
    const GaussianOracleDenoiser oracle(s, 0.0, 1.0);
    const auto cases = small_corpus();
    const auto ptrs = pointers(cases);
    const std::vector<const Case*> one{ptrs.front()};
    const std::vector<MaskGrid> presegs{MaskGrid(16, 16, 0.5)};
    SamplingPlan plan;
    plan.members = 2;
    plan.method = Method::Pd;
    plan.t_prime = default_tprime(1000);
    const auto pd = sample_members(one, presegs, oracle, s, plan);
    plan.method = Method::Vanilla;
    const auto van = sample_members(one, presegs, oracle, s, plan);
    const long pd_nfe = score_members(*one[0], pd[0], 2).ensemble.total_nfe;
    const long van_nfe = score_members(*one[0], van[0], 2).ensemble.total_nfe;
    CHECK(pd_nfe == 600);
    CHECK(van_nfe == 2000);
    CHECK(1.0 - static_cast<double>(pd_nfe) / van_nfe == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("member sampling does not depend on thread count and reuses prefixes") {
    const auto s = build_cosine_schedule(30);
    const GaussianOracleDenoiser oracle(s, -0.5, 0.6);
    const auto cases = small_corpus();
    const auto ptrs = pointers(cases);
    const auto presegs = oracle_presegs(ptrs, 0.8, 1);
    SamplingPlan plan;
    plan.t_prime = 9;
    plan.members = 8;  // 48 chains: two chunks
    plan.jobs = 1;
    const auto one = sample_members(ptrs, presegs, oracle, s, plan);
    plan.jobs = 3;
    const auto three = sample_members(ptrs, presegs, oracle, s, plan);
    plan.members = 3;
    const auto fewer = sample_members(ptrs, presegs, oracle, s, plan);
    for (std::size_t c = 0; c < ptrs.size(); ++c) {
        for (int m = 0; m < 8; ++m) CHECK(one[c][m].x0 == three[c][m].x0);
        for (int m = 0; m < 3; ++m) CHECK(fewer[c][m].x0 == one[c][m].x0);
    }
    // common random numbers: vanilla and pd draw from the same member streams
    CHECK(member_rng(0, "case_0001", 2).key() == member_rng(0, "case_0001", 2).key());
    CHECK(member_rng(0, "case_0001", 2).key() != member_rng(0, "case_0001", 3).key());
    CHECK(member_rng(0, "case_0001", 2).key() != member_rng(1, "case_0001", 2).key());
}

TEST_CASE("sampling plan validation") {
    const auto s = build_cosine_schedule(10);
    const GaussianOracleDenoiser oracle(s, 0.0, 1.0);
    const auto cases = small_corpus();
    const auto ptrs = pointers(cases);
    SamplingPlan plan;
    plan.t_prime = 3;
    CHECK_THROWS_AS(sample_members(ptrs, {}, oracle, s, plan), std::invalid_argument);
    plan.members = 0;
    CHECK_THROWS_AS(sample_members(ptrs, oracle_presegs(ptrs, 1.0, 0), oracle, s, plan),
                    std::invalid_argument);
    CHECK_THROWS_AS(method_from_string("ddim"), std::invalid_argument);
    CHECK(method_from_string(to_string(Method::Vanilla)) == Method::Vanilla);
}

TEST_CASE("oracle pre-segmentations are reproducible and on target") {
    const auto cases = small_corpus();
    const auto ptrs = pointers(cases);
    const auto a = oracle_presegs(ptrs, 0.7, 5);
    const auto b = oracle_presegs(ptrs, 0.7, 5);
    CHECK(a == b);
    CHECK(mean_dice(a, ptrs) == doctest::Approx(0.7).epsilon(0.03));
    CHECK(mean_dice(oracle_presegs(ptrs, 1.0, 5), ptrs) == 1.0);
}

TEST_CASE("pd at T'=0 from a perfect pre-segmentation scores perfectly") {
    const auto s = build_cosine_schedule(10);
    const GaussianOracleDenoiser oracle(s, 0.0, 1.0);
    const auto cases = small_corpus();
    const auto ptrs = pointers(cases);
    SamplingPlan plan;
    plan.t_prime = 0;
    plan.members = 2;
    const auto members = sample_members(ptrs, oracle_presegs(ptrs, 1.0, 0), oracle, s, plan);
    for (std::size_t c = 0; c < ptrs.size(); ++c) {
        const auto out = score_members(*ptrs[c], members[c], 2);
        CHECK(out.metrics.dice == 1.0);
        CHECK(out.ensemble.total_nfe == 0);
        CHECK(mean_uncertainty(out.ensemble) == 0.0);
    }
    CHECK_THROWS_AS(score_members(*ptrs[0], members[0], 3), std::invalid_argument);
}

TEST_CASE("sampler oracle check passes") {
    OracleCheckConfig cfg;
    cfg.trials = 1000;
    const auto report = run_oracle_check(cfg);
    CHECK(report.passed());
    CHECK(report.lines.size() >= 10);
    CHECK(report.format().find("FAIL") == std::string::npos);

    cfg.t_prime = 101;
    CHECK_THROWS_AS(run_oracle_check(cfg), std::invalid_argument);
}
