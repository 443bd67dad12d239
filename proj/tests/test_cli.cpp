#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#ifndef LMBRIDGE_BIN_PATH
#error "LMBRIDGE_BIN_PATH must be defined by the build"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("lmbridge_cli_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }

    RunResult run(const std::string& args) const {
        const fs::path out_file = dir_ / "stdout.txt";
        const fs::path err_file = dir_ / "stderr.txt";
        const std::string cmd = std::string("\"") + LMBRIDGE_BIN_PATH + "\" " + args + " > \"" +
                                out_file.string() + "\" 2> \"" + err_file.string() + "\"";
        const int status = std::system(cmd.c_str());
        RunResult r;
        r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = read_file(out_file);
        r.err = read_file(err_file);
        return r;
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void write_config(const json& j, const std::string& name = "config.json") const {
        std::ofstream out(path(name), std::ios::binary);
        out << j.dump(2) << "\n";
    }

    json base_config() const {
        return json{{"kernel", {{"alpha", 0.5}, {"sigma", 1.0}}},
                    {"grid", {{"T", 1.0}, {"n_steps", 20}}},
                    {"sampler", {{"J", 5}, {"n_samples", 3}, {"master_seed", 42}}}};
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpExitsZero) {
    EXPECT_EQ(run("--help").exit_code, 0);
    EXPECT_NE(run("--help").out.find("make-ellipse"), std::string::npos);
}

TEST_F(CliTest, NoSubcommandIsUsageError) {
    EXPECT_EQ(run("").exit_code, 2);
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
    EXPECT_EQ(run("density --no-such-flag").exit_code, 2);
}

TEST_F(CliTest, MakeEllipseWritesExpectedCsv) {
    const auto r = run("make-ellipse --landmarks 4 --a 1 --b 1 --out \"" + path("e.csv").string() + "\"");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const std::string csv = read_file(path("e.csv"));
    // Unit circle with 4 landmarks: (1,0), (0,1), (-1,0), (0,-1).
    EXPECT_NE(csv.find("# N=4 d=2"), std::string::npos);
    EXPECT_NE(csv.find("q0_x,q0_y,q1_x,q1_y,q2_x,q2_y,q3_x,q3_y"), std::string::npos);
    EXPECT_EQ(csv.find('\r'), std::string::npos);
    // Byte-identical on rerun.
    const auto r2 = run("make-ellipse --landmarks 4 --a 1 --b 1 --out \"" + path("e2.csv").string() + "\"");
    ASSERT_EQ(r2.exit_code, 0);
    EXPECT_EQ(read_file(path("e2.csv")), csv);
}

TEST_F(CliTest, SampleIsDeterministic) {
    write_config(base_config());
    ASSERT_EQ(run("make-ellipse --landmarks 3 --out \"" + path("q0.csv").string() + "\"").exit_code, 0);
    const std::string cmd = "sample --config \"" + path("config.json").string() + "\" --q0 \"" +
                            path("q0.csv").string() + "\" --seed 7 --out \"";
    ASSERT_EQ(run(cmd + path("s1.csv").string() + "\"").exit_code, 0);
    ASSERT_EQ(run(cmd + path("s2.csv").string() + "\"").exit_code, 0);
    const std::string a = read_file(path("s1.csv"));
    EXPECT_EQ(a, read_file(path("s2.csv")));
    EXPECT_NE(a.find("label"), std::string::npos);
}

TEST_F(CliTest, DensityFlatCaseMatchesClosedForm) {
    // Single landmark: the transition density is exactly Gaussian, so the
    // Monte Carlo estimate equals exp(-1)/pi with zero standard error.
    json cfg = base_config();
    cfg["sampler"]["J"] = 4;
    write_config(cfg);
    {
        std::ofstream s(path("q0.csv"), std::ios::binary);
        s << "# N=1 d=2\nq0_x,q0_y\n0,0\n";
    }
    {
        std::ofstream s(path("v.csv"), std::ios::binary);
        s << "# N=1 d=2\nq0_x,q0_y\n1,0\n";
    }
    const auto r = run("density --config \"" + path("config.json").string() + "\" --q0 \"" +
                       path("q0.csv").string() + "\" --target \"" + path("v.csv").string() +
                       "\" --seed 3 --out \"" + path("d.json").string() + "\"");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const json d = json::parse(read_file(path("d.json")));
    EXPECT_NEAR(d.at("value").get<double>(), 0.11709966304863834, 1e-14);
    EXPECT_NEAR(d.at("std_error").get<double>(), 0.0, 1e-15);
    EXPECT_EQ(d.at("n_samples").get<int>(), 4);
    EXPECT_TRUE(d.contains("log_value"));
    EXPECT_TRUE(d.contains("seed"));
}

TEST_F(CliTest, BridgeWritesPathAndSidecar) {
    write_config(base_config());
    ASSERT_EQ(run("make-ellipse --landmarks 3 --a 1 --b 1 --out \"" + path("q0.csv").string() + "\"").exit_code, 0);
    ASSERT_EQ(run("make-ellipse --landmarks 3 --a 1.2 --b 0.9 --out \"" + path("v.csv").string() + "\"").exit_code, 0);
    const auto r = run("bridge --config \"" + path("config.json").string() + "\" --q0 \"" +
                       path("q0.csv").string() + "\" --target \"" + path("v.csv").string() +
                       "\" --seed 11 --out \"" + path("b.csv").string() + "\"");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const std::string csv = read_file(path("b.csv"));
    EXPECT_NE(csv.find("step,t,"), std::string::npos);
    // The final row lands exactly on the target configuration.
    std::istringstream lines(csv);
    std::string line, last;
    while (std::getline(lines, line))
        if (!line.empty()) last = line;
    const std::string target = read_file(path("v.csv"));
    const auto last_comma_fields = [](const std::string& s) {
        std::vector<std::string> f;
        std::istringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ',')) f.push_back(tok);
        return f;
    };
    const auto row = last_comma_fields(last);
    std::istringstream tlines(target);
    std::string tline;
    std::getline(tlines, tline);  // shape comment
    std::getline(tlines, tline);  // header
    std::getline(tlines, tline);  // data
    const auto trow = last_comma_fields(tline);
    ASSERT_EQ(row.size(), trow.size() + 2);  // step and t columns prepended
    for (size_t i = 0; i < trow.size(); ++i)
        EXPECT_DOUBLE_EQ(std::stod(row[i + 2]), std::stod(trow[i]));

    const json meta = json::parse(read_file(path("b.json")));
    EXPECT_TRUE(meta.contains("log_phi"));
    EXPECT_EQ(meta.at("n_steps").get<int>(), 20);
    EXPECT_EQ(meta.at("seed").get<int>(), 11);
}

TEST_F(CliTest, InferProducesByteIdenticalJson) {
    json cfg = base_config();
    cfg["grid"]["n_steps"] = 8;
    cfg["sampler"]["J"] = 2;
    cfg["optimizer"] = {{"max_iters", 3}, {"step_size", 0.05}, {"optimize", {"q0", "alpha"}}};
    write_config(cfg);
    {
        std::ofstream s(path("obs.csv"), std::ios::binary);
        s << "# N=1 d=2\nq0_x,q0_y\n1,0\n0,1\n-1,0\n0,-1\n";
    }
    const std::string cmd = "infer --config \"" + path("config.json").string() + "\" --data \"" +
                            path("obs.csv").string() + "\" --seed 4 --out \"";
    const auto r1 = run(cmd + path("i1.json").string() + "\"");
    ASSERT_EQ(r1.exit_code, 0) << r1.err;
    const auto r2 = run(cmd + path("i2.json").string() + "\"");
    ASSERT_EQ(r2.exit_code, 0);
    const std::string a = read_file(path("i1.json"));
    EXPECT_EQ(a, read_file(path("i2.json")));
    const json res = json::parse(a);
    EXPECT_TRUE(res.contains("theta_hat"));
    EXPECT_TRUE(res.at("theta_hat").contains("q0"));
    EXPECT_TRUE(res.at("theta_hat").contains("alpha"));
    EXPECT_TRUE(res.at("theta_hat").contains("sigma"));
    EXPECT_TRUE(res.contains("trace"));
    EXPECT_GE(res.at("trace").size(), 1u);
    const json& it0 = res.at("trace").at(0);
    EXPECT_TRUE(it0.contains("log_lik_before"));
    EXPECT_TRUE(it0.contains("log_lik_after"));
    EXPECT_TRUE(it0.contains("accepted"));
}

TEST_F(CliTest, ModelCheckReportsPerLandmarkStats) {
    json cfg = base_config();
    cfg["sampler"]["n_samples"] = 6;
    write_config(cfg);
    {
        std::ofstream s(path("obs.csv"), std::ios::binary);
        s << "# N=2 d=2\nq0_x,q0_y,q1_x,q1_y\n0,0,2,0\n0.1,0.1,2.1,0.1\n-0.1,0,1.9,-0.1\n";
    }
    const json theta = {{"q0", {{0.0, 0.0}, {2.0, 0.0}}}, {"alpha", 0.3}, {"sigma", {{1.0, 0.0}, {0.0, 1.0}}}};
    {
        std::ofstream t(path("theta.json"), std::ios::binary);
        t << theta.dump(2) << "\n";
    }
    const auto r = run("model-check --config \"" + path("config.json").string() + "\" --data \"" +
                       path("obs.csv").string() + "\" --theta \"" + path("theta.json").string() +
                       "\" --seed 2 --out \"" + path("mc.json").string() + "\"");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const json mc = json::parse(read_file(path("mc.json")));
    EXPECT_TRUE(mc.contains("landmarks"));
    ASSERT_EQ(mc.at("landmarks").size(), 2u);
    EXPECT_TRUE(mc.at("landmarks").at(0).at("data").contains("mean"));
    EXPECT_TRUE(mc.at("landmarks").at(0).at("simulated").contains("cov"));
    EXPECT_EQ(mc.at("n_data").get<int>(), 3);
    EXPECT_EQ(mc.at("n_simulated").get<int>(), 6);
    const std::string csv = read_file(path("mc.csv"));
    EXPECT_NE(csv.find("landmark,source,mean_x,mean_y,cov_xx,cov_xy,cov_yy"), std::string::npos);
    EXPECT_NE(csv.find("0,data,"), std::string::npos);
    EXPECT_NE(csv.find("0,simulated,"), std::string::npos);
}

TEST_F(CliTest, MissingConfigIsConfigError) {
    const auto r = run("density --config \"" + path("nope.json").string() + "\" --q0 a --target b");
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("error: config:"), std::string::npos);
}

TEST_F(CliTest, MalformedConfigIsConfigError) {
    {
        std::ofstream bad(path("bad.json"), std::ios::binary);
        bad << "{ not json";
    }
    {
        std::ofstream s(path("q0.csv"), std::ios::binary);
        s << "# N=1 d=2\nq0_x,q0_y\n0,0\n";
    }
    const auto r = run("sample --config \"" + path("bad.json").string() + "\" --q0 \"" +
                       path("q0.csv").string() + "\" --out \"" + path("s.csv").string() + "\"");
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("error: config:"), std::string::npos);
}

TEST_F(CliTest, UnknownConfigKeyIsConfigError) {
    json cfg = base_config();
    cfg["kernel"]["alfa"] = 0.1;
    write_config(cfg);
    {
        std::ofstream s(path("q0.csv"), std::ios::binary);
        s << "# N=1 d=2\nq0_x,q0_y\n0,0\n";
    }
    const auto r = run("sample --config \"" + path("config.json").string() + "\" --q0 \"" +
                       path("q0.csv").string() + "\" --out \"" + path("s.csv").string() + "\"");
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("error: config:"), std::string::npos);
    EXPECT_NE(r.err.find("alfa"), std::string::npos);
}

TEST_F(CliTest, CoincidentLandmarksAreNumericalError) {
    write_config(base_config());
    {
        std::ofstream s(path("q0.csv"), std::ios::binary);
        s << "# N=2 d=2\nq0_x,q0_y,q1_x,q1_y\n0,0,0,0\n";
    }
    const auto r = run("sample --config \"" + path("config.json").string() + "\" --q0 \"" +
                       path("q0.csv").string() + "\" --seed 1 --out \"" + path("s.csv").string() + "\"");
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_NE(r.err.find("error: numerical:"), std::string::npos);
}
