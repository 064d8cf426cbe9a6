#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pdseg {

/// Binary greymap (P5). Samples are stored as read, maxval <= 65535;
/// 16-bit samples are big-endian on disk.
struct Pgm {
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::vector<std::uint16_t> samples;  ///< row-major
};

Pgm decode_pgm(const std::string& bytes, const std::string& source_name);
std::string encode_pgm(const Pgm& image);

Pgm read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Pgm& image);

}  // namespace pdseg
