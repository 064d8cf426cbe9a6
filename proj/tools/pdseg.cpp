// pdseg: command-line driver for data generation, training, sampling,
// parameter sweeps and the oracle self-check.
//
// Exit status: 0 success, 2 usage error, 3 I/O error, 4 failed check,
// 1 anything else.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pdseg/checkpoint.hpp"
#include "pdseg/conv_denoiser.hpp"
#include "pdseg/errors.hpp"
#include "pdseg/experiment.hpp"
#include "pdseg/manifest.hpp"
#include "pdseg/oracle_check.hpp"
#include "pdseg/preseg.hpp"
#include "pdseg/report.hpp"
#include "pdseg/synth_data.hpp"

namespace fs = std::filesystem;
using namespace pdseg;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitCheck = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class T>
std::string to_text(const T& v) {
    if constexpr (std::is_convertible_v<const T&, std::string>) {
        return std::string(v);
    } else if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
        return format_number(v);
    } else {
        return std::to_string(v);
    }
}

/// Flags of one subcommand, kept so the manifest can list every value
/// (defaults included) and a rerun can rebuild the command line.
struct Flags {
    struct Entry {
        std::string name;
        bool is_flag = false;
        std::function<std::string()> value;
    };
    explicit Flags(CLI::App* sub) : app(sub) {}

    CLI::App* app;
    std::vector<Entry> entries;

    template <class T>
    CLI::Option* option(const std::string& name, T& var, const std::string& help) {
        entries.push_back({name, false, [&var] { return to_text(var); }});
        return app->add_option("--" + name, var, help)->capture_default_str();
    }
    CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
        entries.push_back({name, true, [&var] { return to_text(var); }});
        return app->add_flag("--" + name, var, help);
    }
    bool given(const std::string& name) const { return app->get_option("--" + name)->count() > 0; }
    KeyValues values() const {
        KeyValues kv;
        for (const auto& e : entries) kv.emplace_back(e.name, e.value());
        return kv;
    }
};

/// Collects what a command read and wrote, then emits its manifest.
class Run {
public:
    Run(std::string command, const Flags& flags, fs::path out)
        : out_(std::move(out)) {
        m_.command = std::move(command);
        m_.started = utc_timestamp();
        m_.csv_format = kCsvFormat;
        m_.args = flags.values();
        std::error_code ec;
        fs::create_directories(out_, ec);
        if (ec) throw IoError("cannot create output directory " + out_.string() + ": " + ec.message());
    }

    const fs::path& out() const { return out_; }
    template <class T>
    void config(const std::string& key, const T& v) {
        m_.config.emplace_back(key, to_text(v));
    }
    void input(const std::string& name, const fs::path& path) { m_.inputs.emplace_back(name, path.string()); }
    void write(const std::string& name, const std::string& contents) {
        write_text_file(out_ / name, contents);
        artifact(name);
    }
    void artifact(const std::string& name) { m_.artifacts.push_back(name); }
    void finish() {
        m_.finished = utc_timestamp();
        write_manifest(out_, m_);
        std::cout << "manifest: " << (out_ / "manifest.txt").string() << "\n";
    }

private:
    fs::path out_;
    RunManifest m_;
};

// ---------------------------------------------------------------- helpers

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
std::vector<T> parse_grid(const std::string& text, const std::string& what) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            if constexpr (std::is_integral_v<T>) {
                if (v != std::floor(v)) throw std::invalid_argument(item);
            }
            out.push_back(static_cast<T>(v));
        } catch (const std::logic_error&) {
            throw UsageError(what + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw UsageError(what + ": grid is empty");
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + to_text(v[i]);
    return s;
}

std::vector<Case> load_cases(const std::string& dir) {
    if (dir.empty()) throw UsageError("--data is required");
    if (!fs::is_directory(dir)) throw IoError("corpus directory " + dir + " does not exist");
    return load_corpus(dir);
}

Split parse_split(const std::string& name) {
    try {
        return split_from_string(name);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

ConvDenoiser load_denoiser(const std::string& path) {
    if (path.empty()) throw UsageError("--denoiser is required");
    if (!fs::exists(path)) throw IoError("denoiser checkpoint " + path + " does not exist");
    return ConvDenoiser::from_checkpoint(load_checkpoint(path));
}

void progress(const std::string& what) {
    std::cerr << what << std::endl;
}

// Options shared by sample and sweep.
struct SamplingOptions {
    std::string data;
    std::string denoiser;
    std::string preseg;
    double preseg_oracle = -1.0;
    int t_prime = -1;
    int ensemble = 5;
    std::string sigma = "beta_tilde";
    std::string split = "test";
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out;

    void add(Flags& f, bool with_t_prime) {
        f.option("data", data, "Corpus directory")->required();
        f.option("denoiser", denoiser, "Denoiser checkpoint")->required();
        f.option("preseg", preseg, "Pre-segmentation checkpoint");
        f.option("preseg-oracle", preseg_oracle,
                 "Use degraded ground truth at this Dice instead of a trained pre-segmentation (-1: off)");
        if (with_t_prime) f.option("t-prime", t_prime, "Truncation step T' (-1: round(0.3 T))");
        f.option("ensemble", ensemble, "Ensemble size");
        f.option("sigma", sigma, "Reverse-step variance: beta or beta_tilde");
        f.option("split", split, "Corpus split to evaluate");
        f.option("seed", seed, "Root seed");
        f.option("jobs", jobs, "Worker threads");
        f.option("out", out, "Output directory")->required();
    }
};

struct Loaded {
    std::vector<Case> corpus;
    std::vector<const Case*> cases;
    std::optional<ConvDenoiser> denoiser;
    SigmaRule rule = SigmaRule::BetaTilde;
};

Loaded load_sampling_inputs(const SamplingOptions& o, Run& run) {
    if (o.ensemble < 1) throw UsageError("--ensemble must be at least 1");
    if (o.jobs < 1) throw UsageError("--jobs must be at least 1");
    Loaded l;
    try {
        l.rule = sigma_rule_from_string(o.sigma);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    l.denoiser.emplace(load_denoiser(o.denoiser));
    run.input("denoiser", o.denoiser);
    l.corpus = load_cases(o.data);
    run.input("corpus", o.data);
    l.cases = select_split(l.corpus, parse_split(o.split));
    if (l.cases.empty()) throw UsageError("split '" + o.split + "' has no cases");
    run.config("total_steps", l.denoiser->schedule().total_steps());
    run.config("schedule", to_string(l.denoiser->schedule().kind()));
    run.config("cases", l.cases.size());
    return l;
}

int resolve_t_prime(int requested, int total_steps) {
    const int t = requested < 0 ? default_tprime(total_steps) : requested;
    if (t > total_steps) {
        throw UsageError("--t-prime " + std::to_string(t) + " exceeds T = " + std::to_string(total_steps));
    }
    return t;
}

/// Pre-segmentation maps for pd sampling: the trained model, or the
/// degradation oracle when --preseg-oracle is set.
std::vector<MaskGrid> presegs_for(const SamplingOptions& o, const Loaded& l, Run& run) {
    if (o.preseg_oracle >= 0.0) {
        if (o.preseg_oracle > 1.0) throw UsageError("--preseg-oracle must lie in [0, 1]");
        run.config("preseg_source", "oracle");
        return oracle_presegs(l.cases, o.preseg_oracle, o.seed);
    }
    if (o.preseg.empty()) throw UsageError("pd sampling needs --preseg or --preseg-oracle");
    if (!fs::exists(o.preseg)) throw IoError("pre-segmentation checkpoint " + o.preseg + " does not exist");
    const ConvPresegModel model = ConvPresegModel::from_checkpoint(load_checkpoint(o.preseg));
    run.input("preseg", o.preseg);
    run.config("preseg_source", "model");
    std::vector<const ImageGrid*> images;
    for (const Case* c : l.cases) images.push_back(&c->image);
    auto maps = model.segment_batch(images);
    const double d = mean_dice(maps, l.cases);
    run.config("preseg_dice", d);
    std::cout << "pre-segmentation mean Dice: " << format_number(d) << "\n";
    return maps;
}

std::vector<CaseOutcome> score_all(const std::vector<const Case*>& cases,
                                   const std::vector<std::vector<SampleResult>>& members, int size) {
    std::vector<CaseOutcome> out;
    for (std::size_t i = 0; i < cases.size(); ++i) out.push_back(score_members(*cases[i], members[i], size));
    return out;
}

// ---------------------------------------------------------------- commands

struct GenDataOptions {
    std::string out;
    int cases = 200;
    std::uint64_t seed = 7;
    int size = 32;
    double noise = 0.10;
    double threshold = 0.5;
};

void cmd_gen_data(const GenDataOptions& o, const Flags& flags) {
    if (o.cases < 1) throw UsageError("--cases must be at least 1");
    CorpusConfig cfg;
    cfg.num_cases = o.cases;
    cfg.seed = o.seed;
    cfg.height = cfg.width = o.size;
    cfg.noise_std = o.noise;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    Run run("gen-data", flags, o.out);
    const auto cases = generate_corpus(cfg);
    save_corpus(cases, o.out);
    run.artifact("manifest.csv");
    for (const auto& c : cases) {
        run.artifact("images/" + c.case_id + ".pgm");
        run.artifact("masks/" + c.case_id + ".pgm");
    }
    std::vector<const Case*> all;
    for (const auto& c : cases) all.push_back(&c);
    const double all_dice = threshold_baseline_dice(all, o.threshold);
    const auto val = select_split(cases, Split::Val);
    const double val_dice = val.empty() ? all_dice : threshold_baseline_dice(val, o.threshold);
    run.config("threshold_baseline_dice", all_dice);
    run.config("threshold_baseline_dice_val", val_dice);
    run.config("corpus_hash", hash_corpus(o.out));
    std::cout << "wrote " << cases.size() << " cases to " << o.out << "\n";
    std::cout << "threshold baseline Dice (threshold " << format_number(o.threshold)
              << "): all " << format_number(all_dice) << ", val " << format_number(val_dice) << "\n";
    run.finish();
}

struct TrainCmdOptions {
    std::string kind;
    std::string data;
    std::string out;
    bool fast = false;
    int steps = 0;
    std::string schedule = "cosine";
    int epochs = 0;
    int steps_per_epoch = 100;
    int batch = 16;
    double lr = 0.0;
    double weight_decay = 1e-5;
    int base_channels = 0;
    bool no_augment = false;
    std::uint64_t seed = 0;
};

void cmd_train(const TrainCmdOptions& o, const Flags& flags) {
    if (o.kind != "diffusion" && o.kind != "preseg") {
        throw UsageError("--kind must be diffusion or preseg");
    }
    if (o.steps < 0 || o.epochs < 0 || o.steps_per_epoch < 0 || o.batch < 1 || o.lr < 0.0 ||
        o.base_channels < 0) {
        throw UsageError("training sizes must be positive");
    }
    const bool diffusion = o.kind == "diffusion";
    auto corpus = load_cases(o.data);
    Run run("train", flags, o.out);
    run.input("corpus", o.data);
    const auto train = select_split(corpus, Split::Train);
    const auto val = select_split(corpus, Split::Val);
    if (train.empty()) throw UsageError("corpus has no training cases");

    TrainOptions to;
    to.epochs = o.epochs > 0 ? o.epochs : (o.fast ? 25 : 40);
    to.steps_per_epoch = o.steps_per_epoch;
    to.batch_size = o.batch;
    to.learning_rate = o.lr > 0.0 ? o.lr : (diffusion ? 1e-4 : 1e-3);
    to.weight_decay = o.weight_decay;
    to.augment = !o.no_augment;
    run.config("epochs", to.epochs);
    run.config("steps_per_epoch", to.steps_per_epoch);
    run.config("batch_size", to.batch_size);
    run.config("learning_rate", to.learning_rate);
    run.config("weight_decay", to.weight_decay);
    run.config("augment", to.augment);

    const Rng root(o.seed);
    auto log_epoch = [](int e, double tr, double va) {
        progress("epoch " + std::to_string(e) + " train " + format_number(tr) + " val " + format_number(va));
    };
    std::ostringstream curve;
    if (diffusion) {
        const int T = o.steps > 0 ? o.steps : (o.fast ? 200 : 1000);
        NoiseSchedule schedule = [&] {
            try {
                const ScheduleKind kind = schedule_kind_from_string(o.schedule);
                return kind == ScheduleKind::Cosine ? build_cosine_schedule(T)
                                                    : build_linear_schedule(T, 1e-4, 0.02);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
        }();
        nn::UNetConfig cfg = default_denoiser_config();
        cfg.base_channels = o.base_channels > 0 ? o.base_channels : (o.fast ? 16 : 32);
        run.config("total_steps", T);
        run.config("schedule", to_string(schedule.kind()));
        run.config("base_channels", cfg.base_channels);
        run.config("depth", cfg.depth);
        run.config("time_embedding_dim", cfg.time_embedding_dim);
        ConvDenoiser model(cfg, std::move(schedule));
        Rng init = root.derive("init");
        model.network().initialize(init);
        const TrainReport rep = train_denoiser(model, train, val, to, root.derive("train"), log_epoch);
        curve << "epoch,train_loss,val_loss\n";
        for (std::size_t e = 0; e < rep.train_loss.size(); ++e) {
            curve << e << ',' << format_number(rep.train_loss[e]) << ',' << format_number(rep.val_loss[e]) << '\n';
        }
        save_checkpoint(run.out() / "diffusion.ckpt", model.to_checkpoint());
        run.artifact("diffusion.ckpt");
        const double first = rep.train_loss.front();
        const double best = *std::min_element(rep.train_loss.begin(), rep.train_loss.end());
        run.config("best_epoch", rep.best_epoch);
        run.config("best_val_loss", rep.best_val_loss);
        run.config("train_loss_reduction", 1.0 - best / first);
        std::cout << "train loss " << format_number(first) << " -> " << format_number(best) << " ("
                  << format_number(100.0 * (1.0 - best / first)) << "% lower); best val loss "
                  << format_number(rep.best_val_loss) << " at epoch " << rep.best_epoch << "\n";
    } else {
        nn::UNetConfig cfg = default_preseg_config();
        if (o.base_channels > 0) cfg.base_channels = o.base_channels;
        run.config("base_channels", cfg.base_channels);
        run.config("depth", cfg.depth);
        ConvPresegModel model(cfg);
        Rng init = root.derive("init");
        model.network().initialize(init);
        const PresegTrainReport rep = train_preseg(model, train, val, to, root.derive("train"), log_epoch);
        curve << "epoch,train_loss,val_loss,val_dice\n";
        for (std::size_t e = 0; e < rep.train_loss.size(); ++e) {
            curve << e << ',' << format_number(rep.train_loss[e]) << ',' << format_number(rep.val_loss[e])
                  << ',' << format_number(rep.val_dice[e]) << '\n';
        }
        save_checkpoint(run.out() / "preseg.ckpt", model.to_checkpoint());
        run.artifact("preseg.ckpt");
        const auto& eval_set = val.empty() ? train : val;
        std::vector<const ImageGrid*> images;
        for (const Case* c : eval_set) images.push_back(&c->image);
        const double dice_val = mean_dice(model.segment_batch(images), eval_set);
        const double baseline = threshold_baseline_dice(eval_set, 0.5);
        run.config("best_epoch", rep.best_epoch);
        run.config("best_val_loss", rep.best_val_loss);
        run.config("val_dice", dice_val);
        run.config("threshold_baseline_dice_val", baseline);
        std::cout << "validation Dice " << format_number(dice_val) << " (threshold baseline "
                  << format_number(baseline) << ")\n";
    }
    run.write("loss_curve.csv", curve.str());
    run.finish();
}

struct SampleCmdOptions {
    std::string method = "pd";
    SamplingOptions s;
    bool no_maps = false;
};

void cmd_sample(const SampleCmdOptions& o, const Flags& flags) {
    Method method;
    try {
        method = method_from_string(o.method);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (method == Method::Vanilla && (o.s.preseg_oracle >= 0.0 || flags.given("t-prime"))) {
        throw UsageError("--t-prime and --preseg-oracle apply to pd sampling only");
    }
    Run run("sample", flags, o.s.out);
    Loaded l = load_sampling_inputs(o.s, run);
    const int T = l.denoiser->schedule().total_steps();
    SamplingPlan plan;
    plan.method = method;
    plan.members = o.s.ensemble;
    plan.sigma_rule = l.rule;
    plan.seed = o.s.seed;
    plan.jobs = o.s.jobs;
    std::vector<MaskGrid> presegs;
    if (method == Method::Pd) {
        plan.t_prime = resolve_t_prime(o.s.t_prime, T);
        presegs = presegs_for(o.s, l, run);
    } else {
        plan.t_prime = T;
    }
    run.config("t_prime", plan.t_prime);

    const auto t0 = std::chrono::steady_clock::now();
    const auto members = sample_members(l.cases, presegs, *l.denoiser, l.denoiser->schedule(), plan);
    const auto outcomes = score_all(l.cases, members, plan.members);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    progress("sampled " + std::to_string(l.cases.size()) + " cases in " + format_number(secs) + " s");

    run.write("metrics.csv", metrics_csv(outcomes, method, plan.t_prime, plan.members));
    if (!o.no_maps) {
        fs::create_directories(run.out() / "maps");
        for (const auto& oc : outcomes) {
            for (const auto& name : export_maps(run.out() / "maps", oc.case_id, oc.ensemble)) {
                run.artifact("maps/" + name);
            }
        }
    }
    std::vector<CaseMetrics> all;
    for (const auto& oc : outcomes) all.push_back(oc.metrics);
    const MetricSummary s = summarize(all);
    std::cout << to_string(method) << " T'=" << plan.t_prime << " ensemble " << plan.members
              << ": Dice " << format_number(s.mean.dice) << ", Jaccard " << format_number(s.mean.jaccard)
              << ", HD95 " << format_number(s.mean.hd95) << ", F1 " << format_number(s.mean.f1)
              << ", NFE/case " << outcomes.front().ensemble.total_nfe << "\n";
    run.finish();
}

struct SweepCmdOptions {
    std::string kind;
    std::string grid;
    SamplingOptions s;
};

void write_sweep(Run& run, const std::string& kind, const std::string& x_label,
                 const std::vector<SweepRow>& rows) {
    run.write("sweep.csv", sweep_csv(kind, rows));
    std::vector<SweepRow> sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](const SweepRow& a, const SweepRow& b) { return a.value < b.value; });
    Series dice_series, unc_series;
    for (const auto& r : sorted) {
        dice_series.x.push_back(r.value);
        dice_series.y.push_back(r.summary.mean.dice);
        dice_series.error.push_back(r.summary.stddev.dice);
        unc_series.x.push_back(r.value);
        unc_series.y.push_back(r.mean_uncertainty);
    }
    run.write("sweep_dice.svg", line_chart_svg("Dice vs " + x_label, x_label, "mean Dice (+- std)", dice_series));
    run.write("sweep_uncertainty.svg",
              line_chart_svg("Uncertainty vs " + x_label, x_label, "mean pixel variance", unc_series));
    for (const auto& r : sorted) {
        std::cout << kind << " " << format_number(r.value) << ": Dice " << format_number(r.summary.mean.dice)
                  << " +- " << format_number(r.summary.stddev.dice) << ", uncertainty "
                  << format_number(r.mean_uncertainty) << ", NFE/case " << format_number(r.nfe_per_case) << "\n";
    }
}

void cmd_sweep(const SweepCmdOptions& o, const Flags& flags) {
    if (o.kind != "tprime" && o.kind != "ensemble" && o.kind != "preseg_quality") {
        throw UsageError("--kind must be tprime, ensemble or preseg_quality");
    }
    if (flags.given("grid") && split_list(o.grid).empty()) throw UsageError("--grid: grid is empty");
    if (o.kind == "preseg_quality" && (!o.s.preseg.empty() || o.s.preseg_oracle >= 0.0)) {
        throw UsageError("preseg_quality sweeps the degradation oracle; drop --preseg/--preseg-oracle");
    }
    Run run("sweep", flags, o.s.out);
    Loaded l = load_sampling_inputs(o.s, run);
    const NoiseSchedule& schedule = l.denoiser->schedule();
    const int T = schedule.total_steps();
    SamplingPlan plan;
    plan.method = Method::Pd;
    plan.sigma_rule = l.rule;
    plan.seed = o.s.seed;
    plan.jobs = o.s.jobs;
    std::vector<SweepRow> rows;

    if (o.kind == "tprime") {
        const auto grid = o.grid.empty() ? default_tprime_grid(T) : parse_grid<int>(o.grid, "--grid");
        for (int t : grid) {
            if (t < 0 || t > T) throw UsageError("--grid: T' " + std::to_string(t) + " outside 0..T");
        }
        run.config("grid", join(grid));
        const auto presegs = presegs_for(o.s, l, run);
        plan.members = o.s.ensemble;
        for (int t : grid) {
            plan.t_prime = t;
            progress("T' = " + std::to_string(t));
            const auto members = sample_members(l.cases, presegs, *l.denoiser, schedule, plan);
            rows.push_back(make_sweep_row(t, Method::Pd, t, plan.members, o.s.preseg_oracle,
                                          score_all(l.cases, members, plan.members)));
        }
        write_sweep(run, "tprime", "T'", rows);
    } else if (o.kind == "ensemble") {
        const auto grid = o.grid.empty() ? std::vector<int>{1, 2, 3, 5, 8} : parse_grid<int>(o.grid, "--grid");
        if (grid.front() < 1) throw UsageError("--grid: ensemble sizes must be at least 1");
        run.config("grid", join(grid));
        plan.t_prime = resolve_t_prime(o.s.t_prime, T);
        run.config("t_prime", plan.t_prime);
        const auto presegs = presegs_for(o.s, l, run);
        // Members depend only on (seed, case, index): sample the largest
        // ensemble once and score its prefixes.
        plan.members = grid.back();
        const auto members = sample_members(l.cases, presegs, *l.denoiser, schedule, plan);
        for (int k : grid) {
            rows.push_back(make_sweep_row(k, Method::Pd, plan.t_prime, k, o.s.preseg_oracle,
                                          score_all(l.cases, members, k)));
        }
        write_sweep(run, "ensemble", "ensemble size", rows);
    } else {
        const auto grid = o.grid.empty() ? std::vector<double>{0.0, 0.5, 0.7, 0.9, 1.0}
                                         : parse_grid<double>(o.grid, "--grid");
        if (grid.front() < 0.0 || grid.back() > 1.0) throw UsageError("--grid: targets must lie in [0, 1]");
        run.config("grid", join(grid));
        plan.t_prime = resolve_t_prime(o.s.t_prime, T);
        plan.members = o.s.ensemble;
        run.config("t_prime", plan.t_prime);
        for (double target : grid) {
            progress("pre-segmentation target Dice " + format_number(target));
            const auto presegs = oracle_presegs(l.cases, target, o.s.seed);
            const double achieved = mean_dice(presegs, l.cases);
            run.config("preseg_dice_at_" + format_number(target), achieved);
            const auto members = sample_members(l.cases, presegs, *l.denoiser, schedule, plan);
            rows.push_back(make_sweep_row(target, Method::Pd, plan.t_prime, plan.members, target,
                                          score_all(l.cases, members, plan.members)));
        }
        write_sweep(run, "preseg_quality", "pre-segmentation Dice", rows);
    }
    run.finish();
}

struct OracleCmdOptions {
    OracleCheckConfig c;
    std::string sigma = "beta_tilde";
    std::string out = "runs/oracle-check";
};

void cmd_oracle_check(OracleCmdOptions o, const Flags& flags) {
    try {
        o.c.sigma_rule = sigma_rule_from_string(o.sigma);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (o.c.total_steps < 2 || o.c.trials < 2 || o.c.size < 1 || o.c.t_prime < 0 ||
        o.c.t_prime > o.c.total_steps || !(o.c.target_std > 0.0)) {
        throw UsageError("oracle-check: need T >= 2, trials >= 2, 0 <= t-prime <= T, std > 0");
    }
    Run run("oracle-check", flags, o.out);
    const OracleCheckReport report = run_oracle_check(o.c);
    const std::string text = report.format();
    std::cout << text;
    run.write("report.txt", text);
    run.config("passed", report.passed());
    run.finish();
    if (!report.passed()) throw CheckFailure("oracle check failed");
    std::cout << "oracle check passed\n";
}

int dispatch(const std::vector<std::string>& args);

int cmd_rerun(const std::string& manifest_path, const std::string& out_override) {
    const RunManifest m = read_manifest(manifest_path);
    for (const auto& [name, path] : m.inputs) {
        const std::string* recorded = find_value(m.input_hashes, name);
        if (!fs::exists(path)) throw IoError("input " + name + " (" + path + ") no longer exists");
        const std::string now = hash_input(path);
        if (recorded && *recorded != now) {
            throw CheckFailure("input " + name + " (" + path + ") changed: hash " + now +
                               ", manifest recorded " + *recorded);
        }
    }
    if (m.csv_format != kCsvFormat) {
        throw CheckFailure("manifest was written with CSV format " + std::to_string(m.csv_format) +
                           ", this build writes " + std::to_string(kCsvFormat));
    }
    std::vector<std::string> args{m.command};
    // Flags are recorded as true/false; options with empty values were unset.
    for (const auto& [key, value] : m.args) {
        std::string v = value;
        if (key == "out" && !out_override.empty()) v = out_override;
        if (value == "true" || value == "false") {
            if (value == "true") args.push_back("--" + key);
            continue;
        }
        if (v.empty()) continue;
        args.push_back("--" + key);
        args.push_back(v);
    }
    std::cout << "rerun:";
    for (const auto& a : args) std::cout << ' ' << a;
    std::cout << "\n";
    return dispatch(args);
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"Diffusion segmentation with pre-segmentation-started sampling"};
    app.require_subcommand(1);

    GenDataOptions gen;
    Flags gen_flags{app.add_subcommand("gen-data", "Generate the synthetic corpus")};
    gen_flags.option("out", gen.out, "Output directory")->required();
    gen_flags.option("cases", gen.cases, "Number of cases");
    gen_flags.option("seed", gen.seed, "Corpus seed");
    gen_flags.option("size", gen.size, "Image height and width");
    gen_flags.option("noise", gen.noise, "Image noise standard deviation");
    gen_flags.option("threshold", gen.threshold, "Threshold of the intensity baseline");

    TrainCmdOptions tr;
    Flags tr_flags{app.add_subcommand("train", "Train the denoiser or the pre-segmentation net")};
    tr_flags.option("kind", tr.kind, "diffusion or preseg")->required();
    tr_flags.option("data", tr.data, "Corpus directory")->required();
    tr_flags.option("out", tr.out, "Output directory")->required();
    tr_flags.flag("fast", tr.fast, "Desk-scale profile: T=200, 16 base channels, 25 epochs");
    tr_flags.option("steps", tr.steps, "Diffusion steps T (0: 1000, or 200 with --fast)");
    tr_flags.option("schedule", tr.schedule, "cosine or linear");
    tr_flags.option("epochs", tr.epochs, "Epochs (0: 40, or 25 with --fast)");
    tr_flags.option("steps-per-epoch", tr.steps_per_epoch, "Optimizer steps per epoch (0: one pass)");
    tr_flags.option("batch", tr.batch, "Batch size");
    tr_flags.option("lr", tr.lr, "Learning rate (0: 1e-4 diffusion, 1e-3 preseg)");
    tr_flags.option("weight-decay", tr.weight_decay, "L2 weight decay");
    tr_flags.option("base-channels", tr.base_channels,
                    "Base channel count (0: 32 diffusion, 16 with --fast or preseg)");
    tr_flags.flag("no-augment", tr.no_augment, "Disable flip/rotation augmentation");
    tr_flags.option("seed", tr.seed, "Root seed");

    SampleCmdOptions sa;
    Flags sa_flags{app.add_subcommand("sample", "Sample ensembles for a split and score them")};
    sa_flags.option("method", sa.method, "vanilla or pd");
    sa.s.add(sa_flags, true);
    sa_flags.flag("no-maps", sa.no_maps, "Skip PGM map export");

    SweepCmdOptions sw;
    Flags sw_flags{app.add_subcommand("sweep", "Sweep T', ensemble size or pre-segmentation quality")};
    sw_flags.option("kind", sw.kind, "tprime, ensemble or preseg_quality")->required();
    sw_flags.option("grid", sw.grid, "Comma-separated grid (empty: default grid)");
    sw.s.add(sw_flags, true);

    OracleCmdOptions oc;
    Flags oc_flags{app.add_subcommand("oracle-check", "Check the samplers against the Gaussian oracle")};
    oc_flags.option("steps", oc.c.total_steps, "Cosine schedule length T");
    oc_flags.option("t-prime", oc.c.t_prime, "Truncation step for the truncated-chain check");
    oc_flags.option("trials", oc.c.trials, "Chains per sampler");
    oc_flags.option("size", oc.c.size, "Grid height and width");
    oc_flags.option("mean", oc.c.target_mean, "Target mean m");
    oc_flags.option("std", oc.c.target_std, "Target standard deviation s");
    oc_flags.option("sigma", oc.sigma, "Reverse-step variance: beta or beta_tilde");
    oc_flags.option("seed", oc.c.seed, "Root seed");
    oc_flags.option("out", oc.out, "Output directory");

    std::string manifest_path, rerun_out;
    CLI::App* rerun = app.add_subcommand("rerun", "Repeat a command from its manifest");
    rerun->add_option("--manifest", manifest_path, "manifest.txt of the run")->required();
    rerun->add_option("--out", rerun_out, "Write to this directory instead of the recorded one");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (*gen_flags.app) cmd_gen_data(gen, gen_flags);
    else if (*tr_flags.app) cmd_train(tr, tr_flags);
    else if (*sa_flags.app) cmd_sample(sa, sa_flags);
    else if (*sw_flags.app) cmd_sweep(sw, sw_flags);
    else if (*oc_flags.app) cmd_oracle_check(oc, oc_flags);
    else if (*rerun) return cmd_rerun(manifest_path, rerun_out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return dispatch(args);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const CheckFailure& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return kExitCheck;
    } catch (const Unreachable& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return kExitCheck;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
