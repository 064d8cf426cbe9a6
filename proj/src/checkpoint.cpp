#include "pdseg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pdseg/errors.hpp"

namespace pdseg {

namespace {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& bytes, const std::string& source) : b_(bytes), source_(source) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(pos_ + i)) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte(pos_ + i)) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == b_.size(); }

    [[noreturn]] void fail(const std::string& what) const {
        throw IoError(source_ + ": invalid checkpoint: " + what);
    }

private:
    unsigned char byte(std::size_t i) const { return static_cast<unsigned char>(b_[i]); }
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) fail("truncated");
    }

    const std::string& b_;
    const std::string& source_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.raw(kCheckpointMagic, 6);
    w.str(ckpt.kind);
    const auto& c = ckpt.config;
    const std::int32_t arch[] = {c.in_channels, c.out_channels, c.base_channels, c.depth,
                                 c.time_embedding_dim};
    w.u32(5);
    for (auto v : arch) w.i32(v);
    if (ckpt.schedule) {
        w.u32(static_cast<std::uint32_t>(ckpt.schedule->total_steps()));
        w.str(to_string(ckpt.schedule->kind()));
        for (double b : ckpt.schedule->betas()) w.f64(b);
    } else {
        w.u32(0);
    }
    w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& p : ckpt.params) {
        w.str(p.name);
        w.u32(static_cast<std::uint32_t>(p.shape.size()));
        std::size_t count = 1;
        for (int d : p.shape) {
            w.u32(static_cast<std::uint32_t>(d));
            count *= static_cast<std::size_t>(d);
        }
        if (count != p.value.size()) {
            throw std::invalid_argument("checkpoint tensor " + p.name + " has inconsistent shape");
        }
        for (float v : p.value) w.f32(v);
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source_name) {
    Reader r(bytes, source_name);
    if (r.raw(6) != std::string(kCheckpointMagic, 6)) r.fail("bad magic");
    Checkpoint ckpt;
    ckpt.kind = r.str();
    const std::uint32_t n_arch = r.u32();
    if (n_arch != 5) r.fail("unexpected architecture block size");
    ckpt.config.in_channels = r.i32();
    ckpt.config.out_channels = r.i32();
    ckpt.config.base_channels = r.i32();
    ckpt.config.depth = r.i32();
    ckpt.config.time_embedding_dim = r.i32();
    try {
        ckpt.config.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    const std::uint32_t steps = r.u32();
    if (steps > 0) {
        if (steps > 1'000'000) r.fail("implausible schedule length");
        const std::string kind = r.str();
        std::vector<double> betas(steps);
        for (auto& b : betas) b = r.f64();
        try {
            ckpt.schedule.emplace(schedule_kind_from_string(kind), std::move(betas));
        } catch (const std::invalid_argument& e) {
            r.fail(e.what());
        }
    }
    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        nn::Param<float> p;
        p.name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank > 8) r.fail("tensor rank too large in " + p.name);
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32();
            if (dim > (1u << 24)) r.fail("tensor dimension too large in " + p.name);
            p.shape.push_back(static_cast<int>(dim));
            count *= dim;
        }
        if (count > (1u << 28)) r.fail("tensor too large: " + p.name);
        p.value.resize(count);
        for (auto& v : p.value) v = r.f32();
        ckpt.params.push_back(std::move(p));
    }
    if (!r.at_end()) r.fail("trailing bytes");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str(), path.string());
}

void load_params(const Checkpoint& ckpt, nn::UNet<float>& net) {
    auto& params = net.params();
    if (params.size() != ckpt.params.size()) {
        throw IoError("checkpoint has " + std::to_string(ckpt.params.size()) +
                      " tensors, network expects " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& src = ckpt.params[i];
        if (src.name != params[i].name || src.shape != params[i].shape) {
            throw IoError("checkpoint tensor " + src.name + " does not match network tensor " +
                          params[i].name);
        }
        params[i].value = src.value;
    }
}

}  // namespace pdseg
