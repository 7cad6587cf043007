#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
    int rc = -1;
    std::string out;
    std::string err;
};

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("aad_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Result aad(const std::string& args, const fs::path& work)
{
    const auto out = work / "stdout.txt";
    const auto err = work / "stderr.txt";
    const std::string cmd = std::string("\"") + AAD_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Result r;
    r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

// Small, fast synthetic dataset; the noiseless variant decodes perfectly.
std::string synth_args(const fs::path& out, const std::string& extra = "")
{
    return "synth --subjects 2 --duration-s 120 --channels 6 --seed 3 --out \"" + out.string() + "\" " + extra;
}

bool same_tree(const fs::path& a, const fs::path& b)
{
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file())
            continue;
        const auto rel = fs::relative(e.path(), a);
        if (rel == "run_config.json")
            continue; // records the output path
        if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel))
            return false;
        ++n;
    }
    return n > 0;
}

} // namespace

TEST(Cli, SynthIsDeterministic)
{
    const auto w = scratch("synth");
    ASSERT_EQ(aad(synth_args(w / "a"), w).rc, 0);
    ASSERT_EQ(aad(synth_args(w / "b", "--jobs 3"), w).rc, 0);
    EXPECT_TRUE(fs::exists(w / "a" / "manifest.json"));
    EXPECT_TRUE(fs::exists(w / "a" / "run_config.json"));
    EXPECT_EQ(slurp(w / "a" / "VERSION"), "aad 1.0.0\n");
    EXPECT_TRUE(same_tree(w / "a", w / "b"));
    fs::remove_all(w);
}

TEST(Cli, RefusesOverwriteWithoutForce)
{
    const auto w = scratch("force");
    ASSERT_EQ(aad(synth_args(w / "a"), w).rc, 0);
    const auto again = aad(synth_args(w / "a"), w);
    EXPECT_EQ(again.rc, 3);
    EXPECT_EQ(again.err.rfind("aad: error[", 0), 0u);
    EXPECT_EQ(aad(synth_args(w / "a", "--force"), w).rc, 0);
    fs::remove_all(w);
}

TEST(Cli, UnwritableOutputFails)
{
    const auto w = scratch("unwritable");
    {
        std::ofstream blocker(w / "file");
        blocker << "x";
    }
    const auto r = aad(synth_args(w / "file" / "sub"), w);
    EXPECT_NE(r.rc, 0);
    EXPECT_FALSE(r.err.empty());
    fs::remove_all(w);
}

TEST(Cli, NoiselessEvaluationIsPerfect)
{
    const auto w = scratch("eval");
    ASSERT_EQ(aad(synth_args(w / "data", "--snr-db inf --leak-db -inf --variability 0"), w).rc, 0);
    const auto r = aad("evaluate --dataset \"" + (w / "data").string() + "\" --windows 5,60 --out \"" +
                           (w / "eval").string() + "\"",
                       w);
    ASSERT_EQ(r.rc, 0) << r.err;
    for (const char* name : {"report.json", "decisions.csv", "figure_subject_accuracy.csv",
                             "figure_condition_accuracy.csv", "figure_mean_accuracy.csv", "run_config.json", "VERSION"})
        EXPECT_TRUE(fs::exists(w / "eval" / name)) << name;
    std::size_t rows = 0;
    std::istringstream lines(r.out);
    std::string line;
    while (std::getline(lines, line)) {
        for (const char* c : {"no_visuals", "static_video", "moving_video", "moving_target_noise", "all"})
            if (line.rfind(c, 0) == 0) {
                ++rows;
                EXPECT_NE(line.find("100.0%"), std::string::npos) << line;
            }
    }
    EXPECT_EQ(rows, 5u) << r.out;
    fs::remove_all(w);
}

TEST(Cli, RerunReproducesReportByteForByte)
{
    const auto w = scratch("rerun");
    ASSERT_EQ(aad(synth_args(w / "data", "--snr-db -10"), w).rc, 0);
    ASSERT_EQ(aad("evaluate --protocol loco --dataset \"" + (w / "data").string() + "\" --windows 2,10 --out \"" +
                      (w / "first").string() + "\" --jobs 1",
                  w)
                  .rc,
              0);
    const auto r = aad("rerun \"" + (w / "first" / "run_config.json").string() + "\" --out \"" +
                           (w / "second").string() + "\"",
                       w);
    ASSERT_EQ(r.rc, 0) << r.err;
    EXPECT_EQ(slurp(w / "first" / "report.json"), slurp(w / "second" / "report.json"));
    EXPECT_EQ(slurp(w / "first" / "decisions.csv"), slurp(w / "second" / "decisions.csv"));

    // A rerun of the synth step regenerates the same dataset.
    ASSERT_EQ(aad("rerun \"" + (w / "data").string() + "\" --out \"" + (w / "data2").string() + "\"", w).rc, 0);
    EXPECT_TRUE(same_tree(w / "data", w / "data2"));
    fs::remove_all(w);
}

TEST(Cli, CrossDatasetChannelMismatch)
{
    const auto w = scratch("mismatch");
    ASSERT_EQ(aad(synth_args(w / "a"), w).rc, 0);
    ASSERT_EQ(aad("synth --subjects 2 --duration-s 120 --channels 4 --out \"" + (w / "b").string() + "\"", w).rc, 0);
    const auto r = aad("evaluate --protocol cross-dataset --train-dataset \"" + (w / "a").string() + "\" --dataset \"" +
                           (w / "b").string() + "\" --out \"" + (w / "e").string() + "\"",
                       w);
    EXPECT_EQ(r.rc, 3);
    EXPECT_NE(r.err.find("error[compatibility]"), std::string::npos) << r.err;
    fs::remove_all(w);
}

TEST(Cli, ExitCodes)
{
    const auto w = scratch("codes");
    EXPECT_EQ(aad("", w).rc, 2);
    EXPECT_EQ(aad("synth --bogus", w).rc, 2);
    EXPECT_EQ(aad("synth --snr-db loud --out \"" + (w / "x").string() + "\"", w).rc, 2);
    EXPECT_EQ(aad("synth --conditions cinema --out \"" + (w / "x").string() + "\"", w).rc, 2);
    EXPECT_EQ(aad("evaluate --dataset \"" + (w / "none").string() + "\" --out \"" + (w / "x").string() + "\"", w).rc, 3);
    const auto bad = aad("evaluate --protocol kfold --dataset d --out \"" + (w / "x").string() + "\"", w);
    EXPECT_EQ(bad.rc, 2);
    EXPECT_EQ(std::count(bad.err.begin(), bad.err.end(), '\n'), 1);
    EXPECT_EQ(aad("--version", w).out, "aad 1.0.0\n");
    fs::remove_all(w);
}
