#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pdseg/grid.hpp"

namespace pdseg {

enum class Split { Train, Val, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct CorpusConfig {
    int num_cases = 200;
    int height = 32;
    int width = 32;
    int min_lesions = 1;
    int max_lesions = 4;
    double min_radius = 2.0;
    double max_radius = 6.0;
    double background_mean = 0.35;
    double foreground_mean = 0.65;
    double lesion_jitter = 0.08;  ///< per-lesion intensity offset, uniform in +-jitter
    double noise_std = 0.10;
    double train_fraction = 0.6;
    double val_fraction = 0.2;
    std::uint64_t seed = 7;

    /// Throws std::invalid_argument for degenerate settings.
    void validate() const;
};

struct Ellipse {
    double center_y = 0.0;
    double center_x = 0.0;
    double semi_axis_a = 0.0;
    double semi_axis_b = 0.0;
    double angle = 0.0;
    double intensity = 0.0;

    bool contains(int y, int x) const;
};

struct Case {
    std::string case_id;
    ImageGrid image;  ///< quantized to multiples of 1/255
    MaskGrid gt;      ///< {0, 1}
    Split split = Split::Train;
    std::uint64_t seed = 0;  ///< per-case stream key
    std::vector<Ellipse> lesions;  ///< empty for corpora loaded from disk
};

/// Deterministic corpus; case i depends only on (config, i).
std::vector<Case> generate_corpus(const CorpusConfig& config);

/// Writes images/, masks/ and manifest.csv under `directory`.
void save_corpus(const std::vector<Case>& cases, const std::filesystem::path& directory);

/// Reads a directory written by save_corpus. Image values are byte / 255.
std::vector<Case> load_corpus(const std::filesystem::path& directory);

std::vector<const Case*> select_split(const std::vector<Case>& cases, Split split);

/// Mask of pixels brighter than `threshold`.
MaskGrid threshold_mask(const ImageGrid& image, double threshold);

/// Mean Dice of thresholding every image at `threshold`.
double threshold_baseline_dice(const std::vector<const Case*>& cases, double threshold);

/// Converts a {0,1} mask to the {-1,+1} diffusion encoding.
MaskGrid encode_binary(const MaskGrid& mask);

}  // namespace pdseg
