#include "pdseg/oracle_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pdseg/denoiser.hpp"
#include "pdseg/report.hpp"

namespace pdseg {

bool OracleCheckReport::passed() const {
    return std::all_of(lines.begin(), lines.end(), [](const OracleCheckLine& l) { return l.pass; });
}

std::string OracleCheckReport::format() const {
    std::ostringstream out;
    for (const auto& l : lines) {
        out << (l.pass ? "PASS " : "FAIL ") << l.name << ": measured " << format_number(l.measured)
            << ", expected " << format_number(l.expected) << " +- " << format_number(l.tolerance)
            << '\n';
    }
    return out.str();
}

namespace {

struct Moments {
    std::vector<double> mean;  ///< per pixel
    std::vector<double> var;   ///< per pixel, unbiased
    double max_mean_deviation(double target) const {
        double d = 0.0;
        for (double m : mean) d = std::max(d, std::abs(m - target));
        return d;
    }
    double average_mean() const {
        double s = 0.0;
        for (double m : mean) s += m;
        return s / static_cast<double>(mean.size());
    }
    double average_variance() const {
        double s = 0.0;
        for (double v : var) s += v;
        return s / static_cast<double>(var.size());
    }
};

Moments moments(const std::vector<SampleResult>& runs) {
    const std::size_t n = runs.front().x0.size();
    Moments m{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    for (const auto& r : runs) {
        for (std::size_t p = 0; p < n; ++p) m.mean[p] += r.x0[p];
    }
    for (double& v : m.mean) v /= static_cast<double>(runs.size());
    for (const auto& r : runs) {
        for (std::size_t p = 0; p < n; ++p) {
            const double d = r.x0[p] - m.mean[p];
            m.var[p] += d * d;
        }
    }
    for (double& v : m.var) v /= static_cast<double>(runs.size() - 1);
    return m;
}

OracleCheckLine line(std::string name, double measured, double expected, double tolerance) {
    return {std::move(name), measured, expected, tolerance,
            std::abs(measured - expected) <= tolerance};
}

}  // namespace

OracleCheckReport run_oracle_check(const OracleCheckConfig& cfg) {
    if (cfg.trials < 2) throw std::invalid_argument("oracle check: need at least 2 trials");
    if (cfg.size < 1) throw std::invalid_argument("oracle check: grid size must be positive");
    if (!(cfg.preseg_prob >= 0.0 && cfg.preseg_prob <= 1.0)) {
        throw std::invalid_argument("oracle check: pre-segmentation must lie in [0, 1]");
    }
    const NoiseSchedule schedule = build_cosine_schedule(cfg.total_steps);
    const int T = cfg.total_steps;
    if (cfg.t_prime < 0 || cfg.t_prime > T) {
        throw std::invalid_argument("oracle check: t_prime must lie in 0..T");
    }
    const GaussianOracleDenoiser oracle(schedule, cfg.target_mean, cfg.target_std);
    const double m = cfg.target_mean;
    const double s2 = cfg.target_std * cfg.target_std;
    const double var_tol = cfg.variance_tolerance * s2;
    const ImageGrid image(cfg.size, cfg.size, 0.0);
    const std::size_t trials = static_cast<std::size_t>(cfg.trials);
    const std::vector<const ImageGrid*> images(trials, &image);

    auto rngs = [&](const std::string& label) {
        std::vector<Rng> r;
        r.reserve(trials);
        for (std::size_t i = 0; i < trials; ++i) r.push_back(Rng(cfg.seed).derive(label, i));
        return r;
    };

    OracleCheckReport report;
    auto add_target_checks = [&](const std::string& prefix, const Moments& mo) {
        report.lines.push_back(
            line(prefix + " max per-pixel |mean - m|", mo.max_mean_deviation(m), 0.0, cfg.mean_tolerance));
        report.lines.push_back(line(prefix + " pixel-averaged variance", mo.average_variance(), s2, var_tol));
    };

    auto van_rngs = rngs("oracle/vanilla");
    const auto vanilla = vanilla_sample_batch(images, oracle, schedule, cfg.sigma_rule, van_rngs);
    const Moments van = moments(vanilla);
    add_target_checks("vanilla", van);
    report.lines.push_back(line("vanilla nfe", vanilla.front().nfe, T, 0.0));

    const MaskGrid preseg(cfg.size, cfg.size, cfg.preseg_prob);
    const std::vector<const MaskGrid*> presegs(trials, &preseg);
    auto pd_rngs = rngs("oracle/pd_full");
    const auto pd_full = pd_sample_batch(images, presegs, oracle, schedule, T, cfg.sigma_rule, pd_rngs);
    const Moments pdf = moments(pd_full);
    add_target_checks("pd T'=T", pdf);
    report.lines.push_back(line("pd T'=T vs vanilla: mean", pdf.average_mean(), van.average_mean(),
                                cfg.mean_tolerance));
    report.lines.push_back(line("pd T'=T vs vanilla: variance", pdf.average_variance(),
                                van.average_variance(),
                                cfg.variance_tolerance * van.average_variance()));

    if (cfg.t_prime > 0) {
        auto tr_rngs = rngs("oracle/truncated");
        std::vector<MaskGrid> starts;
        starts.reserve(trials);
        for (auto& r : tr_rngs) {
            MaskGrid x0 = standard_normal_grid(r, cfg.size, cfg.size);
            for (auto& v : x0.values()) v = m + cfg.target_std * v;
            starts.push_back(q_sample(x0, cfg.t_prime, schedule,
                                      standard_normal_grid(r, cfg.size, cfg.size)));
        }
        const auto truncated = reverse_chain(std::move(starts), cfg.t_prime, images, oracle, schedule,
                                             cfg.sigma_rule, tr_rngs);
        const std::string prefix = "chain from exact marginal at t=" + std::to_string(cfg.t_prime);
        add_target_checks(prefix, moments(truncated));
        report.lines.push_back(line(prefix + " nfe", truncated.front().nfe, cfg.t_prime, 0.0));
    }

    Rng zr = Rng(cfg.seed).derive("oracle/zero");
    SamplerConfig sc;
    sc.sigma_rule = cfg.sigma_rule;
    // Pre-segmentation whose encoding is the target mean.
    const double p_mean = std::clamp((m + 1.0) / 2.0, 0.0, 1.0);
    const MaskGrid at_mean(cfg.size, cfg.size, p_mean);
    const SampleResult zero = pd_sample(image, at_mean, oracle, schedule, 0, sc, zr);
    double dev = 0.0;
    for (double v : zero.x0.values()) dev = std::max(dev, std::abs(v - (2.0 * p_mean - 1.0)));
    report.lines.push_back(line("pd T'=0 max |x0 - (2p - 1)|", dev, 0.0, 0.0));
    report.lines.push_back(line("pd T'=0 nfe", zero.nfe, 0.0, 0.0));
    return report;
}

}  // namespace pdseg
