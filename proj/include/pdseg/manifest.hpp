#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace pdseg {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Record of one CLI invocation, written as manifest.txt next to its outputs.
///
/// Text form, one `key=value` per line:
///   format=1
///   command=<subcommand>
///   started=<UTC ISO-8601>  finished=<UTC ISO-8601>
///   csv_format=<n>
///   arg.<flag>=<value>        every flag, defaults included
///   config.<name>=<value>     values resolved from flags and inputs
///   input.<name>=<path>  input.<name>.hash=<fnv1a64 hex>
///   artifact=<file>           repeated, relative to the output directory
struct RunManifest {
    std::string command;
    std::string started;
    std::string finished;
    int csv_format = 0;
    KeyValues args;
    KeyValues config;
    KeyValues inputs;  ///< name -> path; hashes are computed on write
    std::vector<std::string> artifacts;
    KeyValues input_hashes;  ///< filled by read_manifest / write_manifest
};

std::string utc_timestamp();

/// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string hash_file(const std::filesystem::path& path);
/// Hash over a corpus directory: manifest.csv followed by every listed image
/// and mask in manifest order.
std::string hash_corpus(const std::filesystem::path& directory);
/// Hash of a file, or of a corpus when `path` is a directory.
std::string hash_input(const std::filesystem::path& path);

std::string encode_manifest(const RunManifest& m);
RunManifest decode_manifest(const std::string& text, const std::string& source_name);

/// Hashes inputs, then writes `directory`/manifest.txt.
void write_manifest(const std::filesystem::path& directory, RunManifest m);
RunManifest read_manifest(const std::filesystem::path& path);

/// Value of `key` in `kv`, or nullptr.
const std::string* find_value(const KeyValues& kv, const std::string& key);

}  // namespace pdseg
