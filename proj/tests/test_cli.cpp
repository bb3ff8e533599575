#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
};

// Runs the CLI through the shell with stderr folded into stdout.
Run cli(const std::string& args, const std::string& env = {}) {
    const std::string cmd = env + (env.empty() ? "" : " ") + AUSCULT_CLI + std::string(" ") + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> f(1);
    bool quoted = false;
    for (char c : line) {
        if (c == '"') quoted = !quoted;
        else if (c == ',' && !quoted) f.emplace_back();
        else f.back() += c;
    }
    return f;
}

std::string without_last_column(const std::string& csv) {
    std::string out;
    for (const auto& l : lines(csv)) out += l.substr(0, l.find_last_of(',')) + "\n";
    return out;
}

// One shared workspace: a 40-cycle synthetic corpus ingested under both schemes.
class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / "auscult_cli_test";
        fs::remove_all(root_);
        fs::create_directories(root_);
        ASSERT_EQ(cli(base() + " synth --cycles 40").code, 0);
        ASSERT_EQ(cli(base() + " ingest --data-dir " + (root_ / "out" / "synthetic").string()).code, 0);
        ASSERT_EQ(cli(base() + " ingest --scheme pure --data-dir " + (root_ / "out" / "synthetic").string()).code, 0);
        std::ofstream(root_ / "small.toml") << "seed = 5\n"
                                               "[matrix]\n"
                                               "decompositions = [\"none\", \"dwt\"]\n"
                                               "feature-sets = [\"simple\", \"full\"]\n"
                                               "selectors = [\"none\", \"pca\"]\n"
                                               "output-dim = 5\n"
                                               "classifiers = [\"knn\", \"rf\"]\n"
                                               "grid = [\"knn.n_neighbors=[1, 3]\", \"rf.n_estimators=[8]\"]\n"
                                               "[report]\n"
                                               "top = 2\n";
    }
    static std::string base() { return "--seed 7 --output-dir " + (root_ / "out").string(); }
    static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, PureSchemeKeepsNoMoreCyclesThanGeneral) {
    const auto general = lines(slurp(root_ / "out" / "cycles" / "general" / "manifest.csv")).size();
    const auto pure = lines(slurp(root_ / "out" / "cycles" / "pure" / "manifest.csv")).size();
    EXPECT_EQ(general, 41u);  // header + 40 cycles
    EXPECT_LE(pure, general);
}

TEST_F(Cli, RerunningAStageIsANoOp) {
    const auto manifest = root_ / "out" / "cycles" / "general" / "manifest.csv";
    const auto before = fs::last_write_time(manifest);
    const auto r = cli(base() + " ingest --data-dir " + (root_ / "out" / "synthetic").string());
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("up to date"), std::string::npos) << r.out;
    EXPECT_EQ(fs::last_write_time(manifest), before);

    ASSERT_EQ(cli(base() + " extract --feature-set simple").code, 0);
    const auto again = cli(base() + " extract --feature-set simple");
    EXPECT_NE(again.out.find("up to date"), std::string::npos) << again.out;
    // A changed parameter is not a no-op.
    const auto changed = cli(base() + " extract --feature-set simple --decomposition dwt --dwt-levels 4");
    EXPECT_EQ(changed.code, 0) << changed.out;
    EXPECT_EQ(changed.out.find("up to date"), std::string::npos) << changed.out;
}

TEST_F(Cli, MatrixHasOneRowPerCombinationAndReportTopIsSorted) {
    const auto r = cli(base() + " --config " + (root_ / "small.toml").string() + " matrix");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto csv = lines(slurp(root_ / "out" / "matrix" / "report.csv"));
    ASSERT_EQ(csv.size(), 1u + 2 * 2 * 2 * 2);

    const auto top = cli(base() + " report --top 5");
    ASSERT_EQ(top.code, 0);
    const auto rows = lines(top.out);
    ASSERT_EQ(rows.size(), 6u);
    const auto header = split_csv(rows[0]);
    const auto acc = static_cast<std::size_t>(std::find(header.begin(), header.end(), "accuracy") - header.begin());
    ASSERT_LT(acc, header.size());
    for (std::size_t i = 2; i < rows.size(); ++i) {
        EXPECT_GE(std::stod(split_csv(rows[i - 1])[acc]), std::stod(split_csv(rows[i])[acc]));
    }
    // Config sets top = 2; the environment overrides the file, the flag both.
    EXPECT_EQ(lines(cli(base() + " --config " + (root_ / "small.toml").string() + " report").out).size(), 3u);
    EXPECT_EQ(lines(cli(base() + " --config " + (root_ / "small.toml").string() + " report", "AUSCULT_TOP=4").out).size(), 5u);
    EXPECT_EQ(lines(cli(base() + " --config " + (root_ / "small.toml").string() + " report --top 1", "AUSCULT_TOP=4").out).size(),
              2u);
}

TEST_F(Cli, MatrixCsvIndependentOfWorkers) {
    const std::string cfg = " --config " + (root_ / "small.toml").string();
    ASSERT_EQ(cli(base() + " --force --workers 1" + cfg + " matrix").code, 0);
    const auto one = slurp(root_ / "out" / "matrix" / "report.csv");
    ASSERT_EQ(cli(base() + " --force --workers 3" + cfg + " matrix").code, 0);
    const auto three = slurp(root_ / "out" / "matrix" / "report.csv");
    EXPECT_EQ(without_last_column(one), without_last_column(three));
}

TEST_F(Cli, TrainSelectEvaluateAndDumpBands) {
    auto r = cli(base() + " train --classifier rf --params '{\"n_estimators\": 4}'");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(root_ / "out" / "models" / "general_none_full_none_rf.json"));
    r = cli(base() + " select --selector chi2 --output-dim 6");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(root_ / "out" / "select" / "general_none_full_chi2.csv"));
    r = cli(base() + " evaluate --classifier knn --params '{\"n_neighbors\": [1, 3]}'");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(lines(slurp(root_ / "out" / "eval" / "general_none_full_none_knn.csv")).size(), 2u);
    r = cli(base() + " extract --decomposition dwt --feature-set simple --dump-bands " + (root_ / "bands").string());
    EXPECT_EQ(r.code, 0) << r.out;
    std::size_t dirs = 0;
    for (const auto& e : fs::directory_iterator(root_ / "bands")) dirs += e.is_directory() && fs::exists(e.path() / "bands.json");
    EXPECT_EQ(dirs, 40u);
}

TEST_F(Cli, ExitCodesAndOneLineErrors) {
    auto r = cli(base() + " matrix --decompositions wavelet");
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(lines(r.out).size(), 1u) << r.out;
    EXPECT_NE(r.out.find("unknown decomposition"), std::string::npos);

    r = cli("--output-dir " + (root_ / "empty").string() + " extract");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("run `auscult ingest"), std::string::npos) << r.out;

    EXPECT_EQ(cli(base() + " synth --cycles 3").code, 1);
    EXPECT_EQ(cli(base() + " ingest").code, 1);
    EXPECT_EQ(cli(base() + " ingest --data-dir " + (root_ / "missing").string()).code, 2);
    EXPECT_EQ(cli(base() + " --config " + (root_ / "nope.toml").string() + " report").code, 1);
    EXPECT_EQ(cli(base() + " report --input " + (root_ / "missing.json").string()).code, 2);
    EXPECT_EQ(cli(base() + " train --params '{\"depth\": 3}'").code, 1);
    EXPECT_EQ(cli("--help").code, 0);
}
