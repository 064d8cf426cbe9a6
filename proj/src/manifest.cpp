#include "pdseg/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>
#include <stdexcept>

#include "pdseg/errors.hpp"
#include "pdseg/report.hpp"
#include "pdseg/rng.hpp"

namespace pdseg {

namespace {

constexpr int kManifestFormat = 1;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hash_file(const std::filesystem::path& path) {
    return hex64(fnv1a64(read_text_file(path)));
}

std::string hash_corpus(const std::filesystem::path& directory) {
    const std::string listing = read_text_file(directory / "manifest.csv");
    std::uint64_t h = fnv1a64(listing);
    std::istringstream lines(listing);
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream cols(line);
        for (std::string f; std::getline(cols, f, ',');) fields.push_back(f);
        if (fields.size() < 4) throw IoError(directory.string() + "/manifest.csv: malformed row");
        h = fnv1a64(read_text_file(directory / fields[2]), h);
        h = fnv1a64(read_text_file(directory / fields[3]), h);
    }
    return hex64(h);
}

std::string hash_input(const std::filesystem::path& path) {
    return std::filesystem::is_directory(path) ? hash_corpus(path) : hash_file(path);
}

std::string encode_manifest(const RunManifest& m) {
    std::ostringstream out;
    out << "format=" << kManifestFormat << '\n';
    out << "command=" << m.command << '\n';
    out << "started=" << m.started << '\n';
    out << "finished=" << m.finished << '\n';
    out << "csv_format=" << m.csv_format << '\n';
    for (const auto& [k, v] : m.args) out << "arg." << k << '=' << v << '\n';
    for (const auto& [k, v] : m.config) out << "config." << k << '=' << v << '\n';
    for (const auto& [k, v] : m.inputs) {
        out << "input." << k << '=' << v << '\n';
        if (const std::string* h = find_value(m.input_hashes, k)) {
            out << "input." << k << ".hash=" << *h << '\n';
        }
    }
    for (const auto& a : m.artifacts) out << "artifact=" << a << '\n';
    return out.str();
}

RunManifest decode_manifest(const std::string& text, const std::string& source_name) {
    RunManifest m;
    std::istringstream lines(text);
    std::string line;
    int line_no = 0;
    bool saw_format = false;
    auto fail = [&](const std::string& why) {
        throw IoError(source_name + ":" + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(lines, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "format") {
            if (value != std::to_string(kManifestFormat)) fail("unsupported manifest format " + value);
            saw_format = true;
        } else if (key == "command") {
            m.command = value;
        } else if (key == "started") {
            m.started = value;
        } else if (key == "finished") {
            m.finished = value;
        } else if (key == "csv_format") {
            m.csv_format = std::stoi(value);
        } else if (key == "artifact") {
            m.artifacts.push_back(value);
        } else if (key.starts_with("arg.")) {
            m.args.emplace_back(key.substr(4), value);
        } else if (key.starts_with("config.")) {
            m.config.emplace_back(key.substr(7), value);
        } else if (key.starts_with("input.") && key.ends_with(".hash")) {
            m.input_hashes.emplace_back(key.substr(6, key.size() - 11), value);
        } else if (key.starts_with("input.")) {
            m.inputs.emplace_back(key.substr(6), value);
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (!saw_format) throw IoError(source_name + ": not a run manifest");
    if (m.command.empty()) throw IoError(source_name + ": no command recorded");
    return m;
}

void write_manifest(const std::filesystem::path& directory, RunManifest m) {
    m.input_hashes.clear();
    for (const auto& [name, path] : m.inputs) m.input_hashes.emplace_back(name, hash_input(path));
    write_text_file(directory / "manifest.txt", encode_manifest(m));
}

RunManifest read_manifest(const std::filesystem::path& path) {
    return decode_manifest(read_text_file(path), path.string());
}

const std::string* find_value(const KeyValues& kv, const std::string& key) {
    for (const auto& [k, v] : kv) {
        if (k == key) return &v;
    }
    return nullptr;
}

}  // namespace pdseg
