#include "pdseg/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pdseg/errors.hpp"
#include "pdseg/metrics.hpp"
#include "pdseg/pgm.hpp"
#include "pdseg/rng.hpp"

namespace pdseg {

namespace fs = std::filesystem;

std::string to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "unknown";
}

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw std::invalid_argument("unknown split '" + name + "'");
}

void CorpusConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("corpus config: " + what); };
    if (num_cases < 1) fail("num_cases must be at least 1");
    if (height < 16 || width < 16) fail("image size must be at least 16x16");
    if (min_lesions < 1 || max_lesions < min_lesions) fail("lesion count range is empty");
    if (!(min_radius > 0.0) || max_radius < min_radius) fail("lesion radius range is empty");
    if (noise_std < 0.0 || lesion_jitter < 0.0) fail("noise levels must be nonnegative");
    if (background_mean < 0.0 || foreground_mean > 1.0 || background_mean >= foreground_mean) {
        fail("intensity means must satisfy 0 <= background < foreground <= 1");
    }
    if (train_fraction < 0.0 || val_fraction < 0.0 || train_fraction + val_fraction > 1.0) {
        fail("split fractions must be nonnegative and sum to at most 1");
    }
}

bool Ellipse::contains(int y, int x) const {
    const double dy = y - center_y;
    const double dx = x - center_x;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double u = (dx * c + dy * s) / semi_axis_a;
    const double v = (-dx * s + dy * c) / semi_axis_b;
    return u * u + v * v <= 1.0;
}

namespace {

double quantize(double v) {
    return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

Case generate_case(const CorpusConfig& cfg, int index) {
    Rng rng = Rng(cfg.seed).derive("case", static_cast<std::uint64_t>(index));
    Case c;
    char id[32];
    std::snprintf(id, sizeof id, "case_%04d", index);
    c.case_id = id;
    c.seed = rng.key();

    const int span = cfg.max_lesions - cfg.min_lesions + 1;
    const int count = cfg.min_lesions + static_cast<int>(rng.uniform_int(span));
    const double margin = cfg.min_radius;
    for (int k = 0; k < count; ++k) {
        Ellipse e;
        e.center_y = margin + rng.uniform() * (cfg.height - 1 - 2 * margin);
        e.center_x = margin + rng.uniform() * (cfg.width - 1 - 2 * margin);
        e.semi_axis_a = cfg.min_radius + rng.uniform() * (cfg.max_radius - cfg.min_radius);
        e.semi_axis_b = cfg.min_radius + rng.uniform() * (cfg.max_radius - cfg.min_radius);
        e.angle = rng.uniform() * std::numbers::pi;
        e.intensity = cfg.foreground_mean + (2.0 * rng.uniform() - 1.0) * cfg.lesion_jitter;
        c.lesions.push_back(e);
    }

    c.image = ImageGrid(cfg.height, cfg.width);
    c.gt = MaskGrid(cfg.height, cfg.width);
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            double level = cfg.background_mean;
            bool inside = false;
            for (const auto& e : c.lesions) {
                if (e.contains(y, x)) {
                    level = inside ? std::max(level, e.intensity) : e.intensity;
                    inside = true;
                }
            }
            c.gt(y, x) = inside ? 1.0 : 0.0;
            c.image(y, x) = quantize(level + cfg.noise_std * rng.normal());
        }
    }
    return c;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

Pgm to_pgm8(const Grid<ImageTag>& g) {
    Pgm p;
    p.width = g.width();
    p.height = g.height();
    p.maxval = 255;
    p.samples.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        p.samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(g[i], 0.0, 1.0) * 255.0));
    }
    return p;
}

}  // namespace

std::vector<Case> generate_corpus(const CorpusConfig& config) {
    config.validate();
    std::vector<Case> cases;
    cases.reserve(static_cast<std::size_t>(config.num_cases));
    for (int i = 0; i < config.num_cases; ++i) cases.push_back(generate_case(config, i));

    std::vector<int> order(cases.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = Rng(config.seed).derive("split");
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[split_rng.uniform_int(i)]);
    }
    const auto n = static_cast<double>(cases.size());
    const auto n_train = static_cast<std::size_t>(std::lround(config.train_fraction * n));
    const auto n_val = std::min(cases.size() - n_train,
                                static_cast<std::size_t>(std::lround(config.val_fraction * n)));
    for (std::size_t k = 0; k < order.size(); ++k) {
        cases[order[k]].split = k < n_train ? Split::Train
                                : k < n_train + n_val ? Split::Val
                                                      : Split::Test;
    }
    return cases;
}

void save_corpus(const std::vector<Case>& cases, const fs::path& directory) {
    std::error_code ec;
    fs::create_directories(directory / "images", ec);
    fs::create_directories(directory / "masks", ec);
    if (ec) throw IoError("cannot create corpus directory " + directory.string() + ": " + ec.message());

    std::ofstream manifest(directory / "manifest.csv", std::ios::trunc);
    if (!manifest) throw IoError("cannot write " + (directory / "manifest.csv").string());
    manifest << "case_id,split,image_file,mask_file,seed\n";
    for (const auto& c : cases) {
        const std::string image_file = "images/" + c.case_id + ".pgm";
        const std::string mask_file = "masks/" + c.case_id + ".pgm";
        write_pgm(directory / image_file, to_pgm8(c.image));
        Pgm mask;
        mask.width = c.gt.width();
        mask.height = c.gt.height();
        mask.samples.resize(c.gt.size());
        for (std::size_t i = 0; i < c.gt.size(); ++i) mask.samples[i] = c.gt[i] > 0.5 ? 255 : 0;
        write_pgm(directory / mask_file, mask);
        manifest << c.case_id << ',' << to_string(c.split) << ',' << image_file << ',' << mask_file
                 << ',' << c.seed << '\n';
    }
    if (!manifest) throw IoError("write failed for " + (directory / "manifest.csv").string());
}

std::vector<Case> load_corpus(const fs::path& directory) {
    const fs::path manifest_path = directory / "manifest.csv";
    std::ifstream manifest(manifest_path);
    if (!manifest) throw IoError("cannot open " + manifest_path.string());
    std::string line;
    if (!std::getline(manifest, line) || line != "case_id,split,image_file,mask_file,seed") {
        throw IoError(manifest_path.string() + ": unexpected header");
    }
    std::vector<Case> cases;
    int row = 1;
    while (std::getline(manifest, line)) {
        ++row;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) {
            throw IoError(manifest_path.string() + ": row " + std::to_string(row) +
                          " has " + std::to_string(f.size()) + " fields");
        }
        Case c;
        c.case_id = f[0];
        try {
            c.split = split_from_string(f[1]);
            c.seed = std::stoull(f[4]);
        } catch (const std::exception& e) {
            throw IoError(manifest_path.string() + ": row " + std::to_string(row) + ": " + e.what());
        }
        const Pgm img = read_pgm(directory / f[2]);
        const Pgm mask = read_pgm(directory / f[3]);
        if (img.maxval != 255 || mask.maxval != 255) {
            throw IoError((directory / f[2]).string() + ": corpus files must be 8-bit");
        }
        if (img.width != mask.width || img.height != mask.height) {
            throw IoError((directory / f[3]).string() + ": mask size differs from image");
        }
        c.image = ImageGrid(img.height, img.width);
        c.gt = MaskGrid(img.height, img.width);
        for (std::size_t i = 0; i < img.samples.size(); ++i) {
            c.image[i] = img.samples[i] / 255.0;
            if (mask.samples[i] != 0 && mask.samples[i] != 255) {
                throw IoError((directory / f[3]).string() + ": mask values must be 0 or 255");
            }
            c.gt[i] = mask.samples[i] == 255 ? 1.0 : 0.0;
        }
        cases.push_back(std::move(c));
    }
    if (cases.empty()) throw IoError(manifest_path.string() + ": no cases listed");
    return cases;
}

std::vector<const Case*> select_split(const std::vector<Case>& cases, Split split) {
    std::vector<const Case*> out;
    for (const auto& c : cases) {
        if (c.split == split) out.push_back(&c);
    }
    return out;
}

MaskGrid threshold_mask(const ImageGrid& image, double threshold) {
    MaskGrid m(image.height(), image.width());
    for (std::size_t i = 0; i < image.size(); ++i) m[i] = image[i] > threshold ? 1.0 : 0.0;
    return m;
}

double threshold_baseline_dice(const std::vector<const Case*>& cases, double threshold) {
    if (cases.empty()) return 0.0;
    double sum = 0.0;
    for (const Case* c : cases) sum += dice(threshold_mask(c->image, threshold), c->gt);
    return sum / static_cast<double>(cases.size());
}

MaskGrid encode_binary(const MaskGrid& mask) {
    MaskGrid out(mask.height(), mask.width());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] > 0.5 ? 1.0 : -1.0;
    return out;
}

}  // namespace pdseg
