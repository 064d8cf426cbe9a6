#include "pdseg/pgm.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "pdseg/errors.hpp"

namespace pdseg {

namespace {

class HeaderReader {
public:
    HeaderReader(const std::string& bytes, const std::string& source)
        : bytes_(bytes), source_(source) {}

    int next_int() {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            fail("expected a number in header");
        }
        long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            v = v * 10 + (bytes_[pos_++] - '0');
            if (v > 1'000'000) fail("header value too large");
        }
        return static_cast<int>(v);
    }

    // Exactly one whitespace byte separates maxval from the raster.
    void consume_single_space() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            fail("missing whitespace before raster");
        }
        ++pos_;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

    [[noreturn]] void fail(const std::string& what) const {
        throw IoError(source_ + ": invalid PGM: " + what);
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    const std::string& source_;
    std::size_t pos_ = 0;
};

}  // namespace

Pgm decode_pgm(const std::string& bytes, const std::string& source_name) {
    HeaderReader r(bytes, source_name);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') r.fail("missing P5 magic");
    r.advance(2);
    Pgm img;
    img.width = r.next_int();
    img.height = r.next_int();
    img.maxval = r.next_int();
    if (img.width <= 0 || img.height <= 0) r.fail("nonpositive dimensions");
    if (img.maxval <= 0 || img.maxval > 65535) r.fail("maxval outside 1..65535");
    r.consume_single_space();

    const std::size_t count = static_cast<std::size_t>(img.width) * img.height;
    const std::size_t bps = img.maxval > 255 ? 2 : 1;
    if (bytes.size() - r.pos() < count * bps) r.fail("truncated raster");
    img.samples.resize(count);
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + r.pos());
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint16_t v =
            bps == 1 ? data[i] : static_cast<std::uint16_t>((data[2 * i] << 8) | data[2 * i + 1]);
        if (v > img.maxval) r.fail("sample exceeds maxval");
        img.samples[i] = v;
    }
    return img;
}

std::string encode_pgm(const Pgm& image) {
    const std::size_t count = static_cast<std::size_t>(image.width) * image.height;
    if (image.samples.size() != count) {
        throw std::invalid_argument("encode_pgm: sample count does not match dimensions");
    }
    std::ostringstream out;
    out << "P5\n" << image.width << ' ' << image.height << '\n' << image.maxval << '\n';
    std::string s = out.str();
    const bool wide = image.maxval > 255;
    s.reserve(s.size() + count * (wide ? 2 : 1));
    for (std::uint16_t v : image.samples) {
        if (wide) s.push_back(static_cast<char>(v >> 8));
        s.push_back(static_cast<char>(v & 0xff));
    }
    return s;
}

Pgm read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_pgm(ss.str(), path.string());
}

void write_pgm(const std::filesystem::path& path, const Pgm& image) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    const std::string bytes = encode_pgm(image);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pdseg
