#include <gtest/gtest.h>

#include <array>
#include <cstdio>

#include "neuroink/common.hpp"
#include "test_util.hpp"

using namespace neuroink;
using nktest::TempDir;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(NEUROINK_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    EXPECT_NE(pipe, nullptr);
    CliResult res;
    std::array<char, 4096> buf;
    while (fgets(buf.data(), buf.size(), pipe)) res.output += buf.data();
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

TEST(Cli, HelpExitsZeroAndListsSubcommands) {
    auto res = run_cli("--help");
    EXPECT_EQ(res.exit_code, 0);
    for (const char* sub :
         {"ingest", "rasterize", "prep-images", "synth", "train", "run", "report"})
        EXPECT_NE(res.output.find(sub), std::string::npos) << sub;
}

TEST(Cli, UnknownSubcommandIsUsageError) {
    auto res = run_cli("frobnicate");
    EXPECT_EQ(res.exit_code, 2);
    EXPECT_NE(res.output.find("UsageError"), std::string::npos);
}

TEST(Cli, MissingRequiredOptionIsUsageError) {
    EXPECT_EQ(run_cli("rasterize --out /tmp/x").exit_code, 2);
    EXPECT_EQ(run_cli("synth").exit_code, 2);
}

TEST(Cli, MissingManifestIsDataError) {
    auto res = run_cli("rasterize --manifest /nonexistent/manifest.json --out /tmp/x");
    EXPECT_EQ(res.exit_code, 3);
    EXPECT_NE(res.output.find("MissingFile"), std::string::npos);
}

TEST(Cli, DryRunExpandsFortyCells) {
    TempDir tmp("cli");
    json cfg = {{"suite", "matrix"}, {"datasets", json::array()}};
    for (const char* n : {"A", "B", "C", "D", "E"})
        cfg["datasets"].push_back({{"name", n}, {"manifest", std::string(n) + "/manifest.json"}});
    write_text_file(tmp / "config.json", cfg.dump());
    auto res = run_cli("run --config " + (tmp / "config.json").string() + " --dry-run");
    EXPECT_EQ(res.exit_code, 0);
    EXPECT_NE(res.output.find("total cells: 40"), std::string::npos);
    EXPECT_NE(res.output.find("cell mono:A -> A [cv5]"), std::string::npos);
    EXPECT_NE(res.output.find("cell cross:E -> E [train-once]"), std::string::npos);
    // 40 cell lines + the total line
    std::size_t lines = 0;
    for (char c : res.output) lines += c == '\n';
    EXPECT_EQ(lines, 41u);
}

TEST(Cli, SynthRunReportPipeline) {
    TempDir tmp("cli");
    // two small synthetic datasets
    for (int i = 1; i <= 2; ++i) {
        auto res = run_cli("synth --out " + (tmp / ("d" + std::to_string(i))).string() +
                           " --n 6 --seed " + std::to_string(i));
        ASSERT_EQ(res.exit_code, 0) << res.output;
    }
    json cfg = {{"suite", "matrix"},
                {"seed", 0},
                {"datasets",
                 {{{"name", "D1"}, {"manifest", "d1/manifest.json"}},
                  {{"name", "D2"}, {"manifest", "d2/manifest.json"}}}}};
    write_text_file(tmp / "config.json", cfg.dump());

    auto run_res = run_cli("run --config " + (tmp / "config.json").string() + " --out " +
                           (tmp / "results").string() + " --backend linear");
    ASSERT_EQ(run_res.exit_code, 0) << run_res.output;
    // 2 mono x2 + 2 multi x2 + 2 cross x1
    EXPECT_NE(run_res.output.find("executed cells: 10"), std::string::npos);
    EXPECT_TRUE(fs::exists(tmp / "results/results.json"));
    EXPECT_TRUE(fs::exists(tmp / "results/transfer_table.md"));

    // resume: identical parameters short-circuit
    auto again = run_cli("run --config " + (tmp / "config.json").string() + " --out " +
                         (tmp / "results").string() + " --backend linear");
    ASSERT_EQ(again.exit_code, 0);
    EXPECT_NE(again.output.find("up-to-date"), std::string::npos);

    auto rep = run_cli("report --results " + (tmp / "results/results.json").string() +
                       " --out " + (tmp / "report").string());
    ASSERT_EQ(rep.exit_code, 0) << rep.output;
    auto table = read_text_file(tmp / "report/transfer_table.md");
    EXPECT_NE(table.find("| Training set | D1 | D2 |"), std::string::npos);
    EXPECT_NE(table.find("**"), std::string::npos);
}

TEST(Cli, RasterizeRoundTripWithResume) {
    TempDir tmp("cli");
    auto synth = run_cli("synth --out " + (tmp / "ds").string() + " --n 5 --seed 3");
    ASSERT_EQ(synth.exit_code, 0) << synth.output;
    auto res = run_cli("rasterize --manifest " + (tmp / "ds/manifest.json").string() +
                       " --out " + (tmp / "img").string());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    EXPECT_NE(res.output.find("rendered 10"), std::string::npos);
    auto m = load_manifest(tmp / "img/manifest.json");
    EXPECT_EQ(m.entries.size(), 10u);

    auto again = run_cli("rasterize --manifest " + (tmp / "ds/manifest.json").string() +
                         " --out " + (tmp / "img").string());
    ASSERT_EQ(again.exit_code, 0);
    EXPECT_NE(again.output.find("up-to-date"), std::string::npos);

    // changed parameters invalidate the digest and re-render
    auto changed = run_cli("rasterize --manifest " + (tmp / "ds/manifest.json").string() +
                           " --out " + (tmp / "img").string() + " --opacity 0.2");
    ASSERT_EQ(changed.exit_code, 0);
    EXPECT_NE(changed.output.find("rendered 10"), std::string::npos);
}

TEST(Cli, NlsTaskSuiteDryRun) {
    TempDir tmp("cli");
    json cfg = {{"suite", "nls-tasks"},
                {"name", "NLS"},
                {"manifest", "nls/manifest.json"}};
    write_text_file(tmp / "config.json", cfg.dump());
    auto res = run_cli("run --config " + (tmp / "config.json").string() + " --dry-run");
    EXPECT_EQ(res.exit_code, 0);
    EXPECT_NE(res.output.find("total cells: 10"), std::string::npos);
    EXPECT_NE(res.output.find("cell nls-task:SpiralDom"), std::string::npos);
    EXPECT_NE(res.output.find("cell nls-task:Numbers"), std::string::npos);
}

}  // namespace
