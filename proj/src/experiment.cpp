#include "pdseg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "pdseg/conv_denoiser.hpp"
#include "pdseg/preseg.hpp"

namespace pdseg {

std::string to_string(Method method) {
    return method == Method::Vanilla ? "vanilla" : "pd";
}

Method method_from_string(const std::string& name) {
    if (name == "vanilla") return Method::Vanilla;
    if (name == "pd") return Method::Pd;
    throw std::invalid_argument("unknown sampling method '" + name + "'");
}

Rng member_rng(std::uint64_t seed, const std::string& case_id, int member) {
    return Rng(seed).derive("member/" + case_id, static_cast<std::uint64_t>(member));
}

std::vector<std::vector<SampleResult>> sample_members(const std::vector<const Case*>& cases,
                                                      const std::vector<MaskGrid>& presegs,
                                                      const Denoiser& denoiser,
                                                      const NoiseSchedule& schedule,
                                                      const SamplingPlan& plan) {
    if (plan.members < 1) throw std::invalid_argument("ensemble size must be at least 1");
    if (plan.jobs < 1) throw std::invalid_argument("jobs must be at least 1");
    const bool pd = plan.method == Method::Pd;
    if (pd && presegs.size() != cases.size()) {
        throw std::invalid_argument("pd sampling needs one pre-segmentation per case");
    }

    // Flattened chain list: chain k belongs to case k / members.
    const std::size_t members = static_cast<std::size_t>(plan.members);
    const std::size_t total = cases.size() * members;
    std::vector<const ImageGrid*> images(total);
    std::vector<const MaskGrid*> starts(total, nullptr);
    std::vector<Rng> rngs;
    rngs.reserve(total);
    for (std::size_t k = 0; k < total; ++k) {
        const Case& c = *cases[k / members];
        images[k] = &c.image;
        if (pd) starts[k] = &presegs[k / members];
        rngs.push_back(member_rng(plan.seed, c.case_id, static_cast<int>(k % members)));
    }

    const std::size_t chunk = ConvDenoiser::kMaxChunk;
    const std::size_t n_chunks = (total + chunk - 1) / chunk;
    std::vector<SampleResult> flat(total);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (std::size_t ci = next++; ci < n_chunks; ci = next++) {
            try {
                const std::size_t first = ci * chunk;
                const std::size_t n = std::min(chunk, total - first);
                const auto im = std::span(images).subspan(first, n);
                const auto rg = std::span(rngs).subspan(first, n);
                auto part = pd ? pd_sample_batch(im, std::span(starts).subspan(first, n), denoiser,
                                                 schedule, plan.t_prime, plan.sigma_rule, rg)
                               : vanilla_sample_batch(im, denoiser, schedule, plan.sigma_rule, rg);
                std::move(part.begin(), part.end(), flat.begin() + static_cast<std::ptrdiff_t>(first));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n_chunks;
            }
        }
    };
    const int threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(plan.jobs), n_chunks));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<std::vector<SampleResult>> out(cases.size());
    for (std::size_t k = 0; k < total; ++k) out[k / members].push_back(std::move(flat[k]));
    return out;
}

CaseOutcome score_members(const Case& c, const std::vector<SampleResult>& members, int size) {
    if (size < 1 || static_cast<std::size_t>(size) > members.size()) {
        throw std::invalid_argument("ensemble size " + std::to_string(size) + " exceeds the " +
                                    std::to_string(members.size()) + " sampled members");
    }
    std::vector<MaskGrid> probs;
    std::vector<int> nfes;
    for (int m = 0; m < size; ++m) {
        probs.push_back(decode_to_probability(members[static_cast<std::size_t>(m)].x0));
        nfes.push_back(members[static_cast<std::size_t>(m)].nfe);
    }
    CaseOutcome out{c.case_id, ensemble(std::move(probs), nfes), {}};
    out.metrics = evaluate(out.ensemble.binary, c.gt);
    return out;
}

double mean_dice(const std::vector<MaskGrid>& probs, const std::vector<const Case*>& cases) {
    if (probs.size() != cases.size() || cases.empty()) {
        throw std::invalid_argument("mean_dice: need one map per case");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) sum += dice(probs[i], cases[i]->gt);
    return sum / static_cast<double>(cases.size());
}

std::vector<MaskGrid> oracle_presegs(const std::vector<const Case*>& cases, double target_dice,
                                     std::uint64_t seed) {
    std::vector<MaskGrid> out;
    out.reserve(cases.size());
    for (const Case* c : cases) {
        DegradationSpec spec;
        spec.target_dice = target_dice;
        spec.seed = Rng(seed).derive("degrade/" + c->case_id).key();
        out.push_back(degrade_to_dice(c->gt, spec));
    }
    return out;
}

std::vector<int> default_tprime_grid(int total_steps) {
    static constexpr int reference[] = {50, 100, 200, 300, 400, 500, 600, 700, 800, 1000};
    std::vector<int> grid;
    for (int r : reference) {
        const int v = std::max(1, static_cast<int>(std::lround(r * total_steps / 1000.0)));
        if (grid.empty() || grid.back() != v) grid.push_back(v);
    }
    return grid;
}

int default_tprime(int total_steps) {
    return static_cast<int>(std::lround(0.3 * total_steps));
}

}  // namespace pdseg
