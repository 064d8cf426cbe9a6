#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "pdseg/manifest.hpp"
#include "pdseg/report.hpp"

using namespace pdseg;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "pdseg_unit_cli";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(PDSEG_CLI_PATH) + " " + args + " > " +
                            (work_dir() / "last.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string path(const std::string& rel) { return (work_dir() / rel).string(); }

}  // namespace

TEST_CASE("cli usage errors exit with 2") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("gen-data --out " + path("bad") + " --cases 0") == 2);
    CHECK(run("sample --method ddim --data x --denoiser y --out z") == 2);
}

TEST_CASE("cli missing inputs exit with 3") {
    CHECK(run("sample --method vanilla --data " + path("nowhere") + " --denoiser " +
              path("nowhere.ckpt") + " --out " + path("s")) == 3);
    CHECK(run("rerun --manifest " + path("nowhere/manifest.txt")) == 3);
}

TEST_CASE("cli pipeline reruns bit-identically") {
    REQUIRE(run("gen-data --out " + path("data") + " --cases 10 --size 16") == 0);
    REQUIRE(run("train --kind diffusion --data " + path("data") + " --out " + path("den") +
                " --steps 20 --epochs 1 --steps-per-epoch 2 --batch 4 --base-channels 4") == 0);
    CHECK(fs::exists(path("den/diffusion.ckpt")));
    CHECK(fs::exists(path("den/loss_curve.csv")));
    REQUIRE(run("sample --method pd --data " + path("data") + " --denoiser " + path("den/diffusion.ckpt") +
                " --preseg-oracle 0.8 --t-prime 6 --ensemble 2 --out " + path("pd")) == 0);
    const std::string csv = read_text_file(path("pd/metrics.csv"));
    CHECK(csv.starts_with(std::string(kMetricsHeader) + "\n"));
    CHECK(csv.find("\nmean,pd,6,2,") != std::string::npos);
    const RunManifest m = read_manifest(path("pd/manifest.txt"));
    CHECK(m.command == "sample");
    CHECK(m.csv_format == kCsvFormat);
    CHECK(*find_value(m.args, "t-prime") == "6");
    CHECK(find_value(m.input_hashes, "corpus") != nullptr);

    REQUIRE(run("rerun --manifest " + path("pd/manifest.txt") + " --out " + path("pd_again")) == 0);
    CHECK(read_text_file(path("pd_again/metrics.csv")) == csv);

    REQUIRE(run("sweep --kind ensemble --grid 1,2 --data " + path("data") + " --denoiser " +
                path("den/diffusion.ckpt") + " --preseg-oracle 0.8 --t-prime 6 --out " + path("ens")) == 0);
    const std::string sweep = read_text_file(path("ens/sweep.csv"));
    CHECK(sweep.starts_with(std::string(kSweepHeader) + "\nensemble,1,pd,6,1,"));
    CHECK(fs::exists(path("ens/sweep_dice.svg")));

    // a changed input is detected before anything runs
    fs::copy_file(path("data/manifest.csv"), path("manifest.bak"));
    {
        std::string listing = read_text_file(path("data/manifest.csv"));
        write_text_file(path("data/manifest.csv"), listing + "\n");
    }
    CHECK(run("rerun --manifest " + path("pd/manifest.txt") + " --out " + path("pd_changed")) == 4);
    fs::copy_file(path("manifest.bak"), path("data/manifest.csv"), fs::copy_options::overwrite_existing);
}

TEST_CASE("cli oracle check") {
    CHECK(run("oracle-check --out " + path("oracle")) == 0);
    CHECK(read_text_file(path("oracle/report.txt")).find("PASS vanilla") != std::string::npos);
}
