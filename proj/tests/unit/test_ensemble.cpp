#include <doctest.h>

#include <algorithm>

#include "pdseg/denoiser.hpp"
#include "pdseg/diffusion.hpp"
#include "pdseg/ensemble.hpp"

using namespace pdseg;

namespace {

std::vector<MaskGrid> random_members(Rng& rng, int count, int h, int w) {
    std::vector<MaskGrid> out;
    for (int k = 0; k < count; ++k) {
        MaskGrid m(h, w);
        for (auto& v : m.values()) v = rng.uniform() < 0.3 ? rng.uniform() : (rng.uniform() < 0.5 ? 0.0 : 1.0);
        out.push_back(m);
    }
    return out;
}

}  // namespace

TEST_CASE("identical members") {
    MaskGrid m(2, 2, std::vector<double>{0.1, 0.7, 0.5, 1.0});
    const auto r = ensemble(std::vector<MaskGrid>(5, m), {3, 3, 3, 3, 3});
    CHECK(r.mean_prob == m);
    CHECK(r.binary == MaskGrid(2, 2, std::vector<double>{0, 1, 0, 1}));
    CHECK(r.uncertainty == MaskGrid(2, 2, 0.0));
    CHECK(r.total_nfe == 15);
    CHECK(mean_uncertainty(r) == 0.0);
}

TEST_CASE("two-member disagreement ties to background") {
    const auto r = ensemble({MaskGrid(1, 1, 0.0), MaskGrid(1, 1, 1.0)}, {1, 1});
    CHECK(r.mean_prob[0] == 0.5);
    CHECK(r.binary[0] == 0.0);
    CHECK(r.uncertainty[0] == 0.25);
}

TEST_CASE("checkerboard disagreement averages to 0.125") {
    MaskGrid a(4, 4), b(4, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            a(y, x) = 1.0;
            b(y, x) = (y + x) % 2 ? 0.0 : 1.0;
        }
    }
    CHECK(mean_uncertainty(ensemble({a, b}, {0, 0})) == doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("ensemble invariants on random members") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + static_cast<int>(rng.uniform_int(8));
        auto members = random_members(rng, k, 5, 6);
        std::vector<int> nfes(members.size());
        for (auto& n : nfes) n = static_cast<int>(rng.uniform_int(100));
        const auto r = ensemble(members, nfes);
        long total = 0;
        for (int n : nfes) total += n;
        CHECK(r.total_nfe == total);
        for (std::size_t p = 0; p < r.mean_prob.size(); ++p) {
            CHECK(r.uncertainty[p] >= 0.0);
            CHECK(r.uncertainty[p] <= 0.25);
            CHECK(r.binary[p] == (r.mean_prob[p] > 0.5 ? 1.0 : 0.0));
        }
        if (k == 1) CHECK(mean_uncertainty(r) == 0.0);

        auto shuffled = members;
        for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.uniform_int(i)]);
        const auto rs = ensemble(shuffled, nfes);
        CHECK(rs.mean_prob == r.mean_prob);
        CHECK(rs.binary == r.binary);
        CHECK(rs.uncertainty == r.uncertainty);

        // re-ensembling the binary map with itself is a fixed point
        CHECK(ensemble({r.binary, r.binary}, {0, 0}).binary == r.binary);
    }
}

TEST_CASE("ensemble rejects bad input") {
    CHECK_THROWS_AS(ensemble({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(ensemble({MaskGrid(2, 2), MaskGrid(2, 3)}, {0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(ensemble({MaskGrid(2, 2)}, {0, 0}), std::invalid_argument);
}

TEST_CASE("uncertainty grows with T' under the Gaussian oracle") {
    const auto s = build_cosine_schedule(100);
    const GaussianOracleDenoiser oracle(s, 0.0, 0.5);
    const ImageGrid image(8, 8);
    const MaskGrid preseg(8, 8, 0.9);
    SamplerConfig cfg;
    double previous = -1.0;
    for (int tp : {0, 5, 10, 20, 30, 40, 50}) {
        std::vector<MaskGrid> members;
        std::vector<int> nfes;
        for (int k = 0; k < 40; ++k) {
            const auto r = pd_sample(image, preseg, oracle, s, tp, cfg, Rng(77).derive("m", k));
            members.push_back(decode_to_probability(r.x0));
            nfes.push_back(r.nfe);
        }
        const auto e = ensemble(members, nfes);
        CHECK(e.total_nfe == 40L * tp);
        const double u = mean_uncertainty(e);
        CAPTURE(tp);
        CHECK(u > previous);
        previous = u;
    }
}
