#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "filtration/cli_runner.hpp"

using namespace filtration;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("filtration_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_lab(const std::string& args) {
    const std::string cmd = std::string(FILTRATION_LAB_EXE) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_error(const std::string& text) {
    try {
        parse_config_text(text, "cfg");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(ParseConfig, DefaultsFilledForMinimalFile) {
    auto cfg = parse_config_text("# nothing but a comment\n\n");
    EXPECT_EQ(cfg.values.size(), config_schema().size());
    EXPECT_EQ(cfg.real("density.alpha"), 4.0);
    EXPECT_EQ(cfg.int_list("study.j_list"), (std::vector<int>{10, 20, 40}));
    EXPECT_EQ(cfg.optional_real("barriers.alpha_level"), 0.9);
}

TEST(ParseConfig, TypoNamesKeyAndLine) {
    const auto msg = config_error("nonlinearity.m = 2\n\ndensiy.alpha = 4\n");
    EXPECT_NE(msg.find("densiy.alpha"), std::string::npos) << msg;
    EXPECT_NE(msg.find("cfg:3"), std::string::npos) << msg;
}

TEST(ParseConfig, ValueAndSyntaxErrors) {
    EXPECT_NE(config_error("density.alpha = four\n").find("cfg:1"), std::string::npos);
    EXPECT_NE(config_error("scheme.max_newton = 2.5\n").find("not an integer"), std::string::npos);
    EXPECT_NE(config_error("density.kind = cubic\n").find("invalid value"), std::string::npos);
    EXPECT_NE(config_error("density.alpha\n").find("expected"), std::string::npos);
    EXPECT_NE(config_error("density.alpha = 1\ndensity.alpha = 2\n").find("repeats line 1"), std::string::npos);
    EXPECT_NE(config_error("study.radii = 1,x\n").find("not a finite number"), std::string::npos);
    EXPECT_THROW(parse_config("/nonexistent/filtration.cfg"), ConfigError);
}

TEST(ParseConfig, EchoRoundTrip) {
    auto cfg = parse_config_text("density.alpha = 4\nnonlinearity.m = 2\nstudy.radii = 10, 20.5\n");
    const auto echo = cfg.echo();
    auto again = parse_config_text(echo);
    EXPECT_EQ(again.values, cfg.values);
    EXPECT_EQ(again.echo(), echo);
    EXPECT_EQ(again.real("density.alpha"), 4.0);
    EXPECT_EQ(again.real("nonlinearity.m"), 2.0);
}

TEST(ParseConfig, Overrides) {
    RunConfig cfg;
    apply_override(cfg, "density.alpha=1.5");
    EXPECT_EQ(cfg.real("density.alpha"), 1.5);
    EXPECT_THROW(apply_override(cfg, "density.alpah=1"), ConfigError);
    EXPECT_THROW(apply_override(cfg, "density.alpha"), ConfigError);
    EXPECT_THROW(apply_override(cfg, "scheme.h=abc"), ConfigError);
}

TEST(Sha256, KnownDigests) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Dispatch, ClassifyFastDecayAndManifest) {
    RunConfig cfg;
    cfg.subcommand = "classify";
    cfg.out_dir = scratch("classify");
    cfg.set("density.kind", "power", "test");
    cfg.set("classify.expect", "FastDecay", "test");
    const auto m = dispatch(cfg);
    EXPECT_EQ(m.exit_code, ExitCode::Pass) << m.diagnostics;
    const auto csv = slurp(cfg.out_dir / "classify.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "side,tag,integral_estimate,partial_integral,tail_estimate,decade_exponent,local_exponent");
    EXPECT_NE(csv.find("decision,FastDecay"), std::string::npos);

    const auto j = nlohmann::json::parse(slurp(cfg.out_dir / "manifest.json"));
    EXPECT_EQ(j["exit_code"], 0);
    EXPECT_EQ(j["config"]["density.kind"], "power");
    ASSERT_EQ(j["files"].size(), 2u);
    for (const auto& f : j["files"]) {
        const auto bytes = slurp(cfg.out_dir / f["path"].get<std::string>());
        EXPECT_EQ(f["sha256"], sha256_hex(bytes));
        EXPECT_EQ(f["bytes"], bytes.size());
    }
    EXPECT_TRUE(j["tasks"][0].contains("wall_seconds"));

    cfg.set("classify.expect", "SlowDecay", "test");
    cfg.out_dir = scratch("classify_mismatch");
    EXPECT_EQ(dispatch(cfg).exit_code, ExitCode::CriteriaFail);
}

TEST(Dispatch, PreconditionsMapToConfigError) {
    RunConfig cfg;
    cfg.subcommand = "uniqueness-cross";  // default density decays fast
    cfg.out_dir = scratch("precondition");
    const auto m = dispatch(cfg);
    EXPECT_EQ(m.exit_code, ExitCode::ConfigError);
    EXPECT_NE(m.diagnostics.find("slowly decaying"), std::string::npos);
    cfg.subcommand = "plot";
    EXPECT_EQ(dispatch(cfg).exit_code, ExitCode::ConfigError);
}

TEST(Executable, ExitCodes) {
    const auto dir = scratch("exe");
    EXPECT_EQ(run_lab("classify --out " + (dir / "a").string() +
                      " --override density.kind=power --override classify.expect=FastDecay"),
              0);
    EXPECT_EQ(run_lab("classify --out " + (dir / "b").string() + " --override classify.expect=SlowDecay"), 1);
    EXPECT_EQ(run_lab("frobnicate"), 2);
    EXPECT_EQ(run_lab("classify --config /nonexistent.cfg"), 2);
    EXPECT_EQ(run_lab("classify --override densiy.alpha=4"), 2);
    {
        std::ofstream bad(dir / "typo.cfg");
        bad << "density.alpha = 4\ndensiy.kind = power\n";
    }
    EXPECT_EQ(run_lab("classify --config " + (dir / "typo.cfg").string()), 2);
    EXPECT_EQ(run_lab("classify --out /proc/filtration_out"), 2);
}

TEST(Executable, NewtonBudgetOneIsNumericalFailure) {
    const auto dir = scratch("newton");
    {
        std::ofstream cfg(dir / "stiff.cfg");
        cfg << "nonlinearity.m = 3\ninitial.kind = bump\ninitial.base = 0\ninitial.amplitude = 2\n"
               "trace.start = 0.5\nscheme.dt = 0.1\nscheme.max_newton = 1\nsolve.j = 10\n";
    }
    EXPECT_EQ(run_lab("solve --config " + (dir / "stiff.cfg").string() + " --out " + (dir / "out").string()), 3);
    const auto j = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
    EXPECT_EQ(j["exit_code"], 3);
    EXPECT_FALSE(j["diagnostics"].get<std::string>().empty());
}

TEST(Executable, DeterministicAcrossWorkerCounts) {
    const auto dir = scratch("determinism");
    const std::string common = " --override study.j_list=10,20 --override scheme.h=0.2 --override problem.horizon=0.5";
    ASSERT_EQ(run_lab("nonuniqueness --workers 1 --out " + (dir / "w1").string() + common), 0);
    ASSERT_EQ(run_lab("nonuniqueness --workers 4 --out " + (dir / "w4").string() + common), 0);
    ASSERT_EQ(run_lab("nonuniqueness --workers 4 --out " + (dir / "w4b").string() + common), 0);
    std::size_t compared = 0;
    for (const auto& e : fs::directory_iterator(dir / "w1")) {
        const auto name = e.path().filename();
        if (name == "manifest.json") continue;
        const auto a = slurp(e.path());
        EXPECT_EQ(a, slurp(dir / "w4" / name)) << name;
        EXPECT_EQ(a, slurp(dir / "w4b" / name)) << name;
        EXPECT_EQ(a.find("seconds"), std::string::npos) << name;
        ++compared;
    }
    EXPECT_EQ(compared, 3u);
}
