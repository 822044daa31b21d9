#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "alea/engine.hpp"
#include "alea/registry.hpp"

using namespace alea;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path dir;
  TempDir() {
    static std::atomic<int> counter{0};
    dir = fs::temp_directory_path() /
          ("alea_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string str() const { return dir.string(); }
};

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string drain_fd(int fd) {
  std::string text;
  char buf[4096];
  for (;;) {
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n <= 0) break;
    text.append(buf, static_cast<size_t>(n));
  }
  return text;
}

CliResult run_cli(const std::vector<std::string>& args) {
  int out_pipe[2], err_pipe[2];
  if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0) ADD_FAILURE() << "pipe failed";

  const pid_t pid = ::fork();
  if (pid == 0) {
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[0]);
    ::close(err_pipe[1]);
    std::vector<char*> argv;
    std::string bin = ALEA_CLI_BINARY;
    argv.push_back(bin.data());
    std::vector<std::string> copy = args;
    for (auto& a : copy) argv.push_back(a.data());
    argv.push_back(nullptr);
    ::execv(bin.c_str(), argv.data());
    ::_exit(127);
  }
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);

  CliResult r;
  r.out = drain_fd(out_pipe[0]);
  r.err = drain_fd(err_pipe[0]);
  ::close(out_pipe[0]);
  ::close(err_pipe[0]);
  int status = 0;
  ::waitpid(pid, &status, 0);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

json opt_config(const std::string& name, uint64_t seed, int pop, int max_gens) {
  return json{
      {"Name", name},
      {"Random Seed", seed},
      {"Problem", {{"Type", "Optimization"}, {"Computational Model", "Builtin/ShiftedParabola"}}},
      {"Variables",
       json::array({{{"Name", "x"}, {"Initial Value", 0.5}, {"Initial Standard Deviation", 0.3}}})},
      {"Solver", {{"Type", "CMAES"}, {"Population Size", pop}, {"Max Generations", max_gens}}}};
}

json bayes_config(const std::string& name, uint64_t seed, int pop) {
  return json{
      {"Name", name},
      {"Random Seed", seed},
      {"Distributions",
       json::array({{{"Name", "prior"}, {"Type", "Univariate/Normal"}, {"Mean", 0.0}, {"Sigma", 1.0}}})},
      {"Variables", json::array({{{"Name", "theta"}, {"Prior Distribution", "prior"}}})},
      {"Problem",
       {{"Type", "Bayesian Inference"},
        {"Reference Data", json::array({0.0})},
        {"Computational Model", "Builtin/GaussMean"}}},
      {"Solver", {{"Type", "TMCMC"}, {"Population Size", pop}}}};
}

fs::path write_config(const TempDir& t, const std::string& file, const json& j) {
  const fs::path p = t.dir / file;
  std::ofstream(p) << j.dump(2) << "\n";
  return p;
}

// The seed precedence tests poke at the process environment; make sure earlier
// tests never leak a value into later ones.
struct ScopedNoSeedEnv {
  ScopedNoSeedEnv() { ::unsetenv("KORALI_SEED"); }
  ~ScopedNoSeedEnv() { ::unsetenv("KORALI_SEED"); }
};

double value_after(const std::string& text, const std::string& token) {
  const auto pos = text.find(token);
  if (pos == std::string::npos) {
    ADD_FAILURE() << "missing '" << token << "' in: " << text;
    return 0.0;
  }
  return std::strtod(text.c_str() + pos + token.size(), nullptr);
}

std::vector<std::string> state_files(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".state") out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Usage, MissingSubcommandIsAUsageError) {
  ScopedNoSeedEnv env;
  const CliResult r = run_cli({});
  EXPECT_EQ(r.code, 2);
}

TEST(Validate, AcceptsAGoodConfig) {
  ScopedNoSeedEnv env;
  TempDir t;
  const auto cfg = write_config(t, "opt.json", opt_config("demo", 7, 8, 10));
  const CliResult r = run_cli({"validate", cfg.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "ok: demo solver=CMAES variables=1\n");
}

TEST(Validate, RejectsUnknownKeysWithExitTwo) {
  ScopedNoSeedEnv env;
  TempDir t;
  json bad = opt_config("demo", 7, 8, 10);
  bad["Solver"].erase("Population Size");
  bad["Solver"]["Populatoin Size"] = 8;
  const auto cfg = write_config(t, "bad.json", bad);
  const CliResult r = run_cli({"validate", cfg.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  EXPECT_NE(r.err.find("Populatoin Size"), std::string::npos);
}

TEST(Validate, MissingFileIsAnIoError) {
  ScopedNoSeedEnv env;
  const CliResult r = run_cli({"validate", "/nonexistent/alea.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("cannot read"), std::string::npos);
}

TEST(Run, OptimizesAndWritesCheckpoints) {
  ScopedNoSeedEnv env;
  TempDir t;
  const auto cfg = write_config(t, "opt.json", opt_config("cliopt", 7, 8, 40));
  const auto outdir = t.dir / "runs";
  const CliResult r = run_cli({"run", cfg.string(), "--outdir", outdir.string(), "--workers", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("cliopt: Finished (Max Generations)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("generations=40 evaluations=320"), std::string::npos) << r.out;
  EXPECT_NEAR(value_after(r.out, "best="), 0.0, 1e-3);
  EXPECT_NEAR(value_after(r.out, " at "), 3.0, 0.05);

  const auto files = state_files(outdir / "cliopt");
  ASSERT_EQ(files.size(), 40u);
  EXPECT_EQ(files.front(), "gen00000.state");
  EXPECT_EQ(files.back(), "gen00039.state");
  EXPECT_TRUE(fs::exists(outdir / "cliopt" / "latest"));
  EXPECT_TRUE(fs::exists(outdir / "cliopt" / "summary.csv"));
}

TEST(Run, NoCheckpointFlagSkipsStateFiles) {
  ScopedNoSeedEnv env;
  TempDir t;
  const auto cfg = write_config(t, "opt.json", opt_config("quiet", 7, 8, 4));
  const auto outdir = t.dir / "runs";
  const CliResult r =
      run_cli({"run", cfg.string(), "--outdir", outdir.string(), "--no-checkpoints"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(state_files(outdir / "quiet").empty());
  EXPECT_FALSE(fs::exists(outdir / "quiet" / "latest"));
}

TEST(Run, BayesianRunReportsTheEvidence) {
  ScopedNoSeedEnv env;
  TempDir t;
  const auto cfg = write_config(t, "bayes.json", bayes_config("clibayes", 42, 64));
  const CliResult r = run_cli({"run", cfg.string(), "--outdir", (t.dir / "runs").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("clibayes: Finished (Annealing Complete)"), std::string::npos) << r.out;
  EXPECT_NEAR(value_after(r.out, "log_evidence="), -1.2655121234846454, 0.4);
}

TEST(Run, SeedPrecedenceIsFlagThenEnvThenConfig) {
  ScopedNoSeedEnv env;
  TempDir t;
  const auto cfg = write_config(t, "opt.json", opt_config("seeds", 7, 8, 6));
  const std::vector<std::string> base = {"run", cfg.string(), "--no-checkpoints", "--outdir",
                                         (t.dir / "runs").string()};

  auto with_seed = [&](const std::string& s) {
    auto args = base;
    args.push_back("--seed");
    args.push_back(s);
    return run_cli(args);
  };

  const CliResult from_config = run_cli(base);
  const CliResult ref7 = with_seed("7");
  const CliResult ref11 = with_seed("11");
  const CliResult ref13 = with_seed("13");
  ASSERT_EQ(from_config.code, 0) << from_config.err;
  EXPECT_EQ(from_config.out, ref7.out);
  EXPECT_NE(ref11.out, ref7.out);

  ::setenv("KORALI_SEED", "11", 1);
  const CliResult from_env = run_cli(base);
  const CliResult flag_beats_env = with_seed("13");
  ::unsetenv("KORALI_SEED");
  EXPECT_EQ(from_env.out, ref11.out);
  EXPECT_EQ(flag_beats_env.out, ref13.out);
}

TEST(Run, MalformedSeedEnvIsAConfigError) {
  ScopedNoSeedEnv env;
  TempDir t;
  const auto cfg = write_config(t, "opt.json", opt_config("seeds", 7, 8, 4));
  ::setenv("KORALI_SEED", "banana", 1);
  const CliResult r = run_cli({"run", cfg.string(), "--no-checkpoints"});
  ::unsetenv("KORALI_SEED");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("KORALI_SEED"), std::string::npos);
}

TEST(Run, FailingModelCommandExitsOne) {
  ScopedNoSeedEnv env;
  TempDir t;
  json cfg = opt_config("doomed", 7, 4, 4);
  cfg["Problem"].erase("Computational Model");
  cfg["Problem"]["Execution Mode"] = "Concurrent";
  cfg["Problem"]["Command"] = "/bin/false";
  const auto file = write_config(t, "doomed.json", cfg);
  const CliResult r = run_cli({"run", file.string(), "--outdir", (t.dir / "runs").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("doomed: Finished (Error)"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("NonFiniteObjectiveCount"), std::string::npos) << r.err;
}

TEST(Resume, SessionsContinueAndFinishLikeAStraightRun) {
  ScopedNoSeedEnv env;
  TempDir t;
  const auto cfg = write_config(t, "opt.json", opt_config("resumer", 3, 8, 20));
  const auto paused_dir = t.dir / "paused";
  const auto straight_dir = t.dir / "straight";
  const std::string exp_dir = (paused_dir / "resumer").string();

  CliResult r = run_cli({"run", cfg.string(), "--outdir", paused_dir.string(),
                         "--session-generations", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resumer: Running (Session Generations)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("generations=5 evaluations=40"), std::string::npos) << r.out;

  r = run_cli({"resume", exp_dir, "--generations", "+5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resumer: Running (Session Generations)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("generations=10"), std::string::npos) << r.out;

  r = run_cli({"resume", exp_dir, "--generations", "12"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resumer: Running (Generation Budget)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("generations=12"), std::string::npos) << r.out;

  r = run_cli({"resume", exp_dir});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resumer: Finished (Max Generations)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("generations=20 evaluations=160"), std::string::npos) << r.out;

  r = run_cli({"run", cfg.string(), "--outdir", straight_dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;

  const auto paused_files = state_files(exp_dir);
  ASSERT_EQ(paused_files.size(), 20u);
  ASSERT_EQ(paused_files, state_files(straight_dir / "resumer"));
  for (const auto& f : paused_files)
    EXPECT_EQ(read_file(fs::path(exp_dir) / f), read_file(straight_dir / "resumer" / f)) << f;
  EXPECT_EQ(read_file(fs::path(exp_dir) / "latest"),
            read_file(straight_dir / "resumer" / "latest"));
}

TEST(Resume, SelfCheckDetectsTamperedGenerations) {
  ScopedNoSeedEnv env;
  TempDir t;
  const auto cfg = write_config(t, "opt.json", opt_config("audited", 5, 8, 6));
  const auto outdir = t.dir / "runs";
  const std::string exp_dir = (outdir / "audited").string();
  ASSERT_EQ(run_cli({"run", cfg.string(), "--outdir", outdir.string()}).code, 0);

  CliResult clean = run_cli({"resume", exp_dir, "--self-check"});
  EXPECT_EQ(clean.code, 0) << clean.err;
  EXPECT_NE(clean.out.find("self-check passed"), std::string::npos) << clean.out;

  {
    std::ofstream f(fs::path(exp_dir) / "gen00002.state", std::ios::app);
    f << " ";
  }
  const CliResult dirty = run_cli({"resume", exp_dir, "--self-check"});
  EXPECT_EQ(dirty.code, 3);
  EXPECT_NE(dirty.err.find("divergence:"), std::string::npos) << dirty.err;
  EXPECT_NE(dirty.err.find("gen00002.state"), std::string::npos) << dirty.err;
}

TEST(Resume, EmptyDirectoryIsAConfigError) {
  ScopedNoSeedEnv env;
  TempDir t;
  const CliResult r = run_cli({"resume", t.str()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no latest checkpoint"), std::string::npos);
}

TEST(Bench, PrintsOneReportPerSchedulingMode) {
  ScopedNoSeedEnv env;
  TempDir t;
  const auto csv = t.dir / "timeline.csv";
  const CliResult r = run_cli({"bench", "--workers", "4", "--generations", "2", "--clock", "sim",
                               "--scheduling", "single", "multiple", "--timeline", csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("scheduling=single workers=4 samples=32"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("scheduling=multiple workers=4 samples=32"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("e_ideal=1.0000"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(t.dir / "timeline_single.csv"));
  EXPECT_TRUE(fs::exists(t.dir / "timeline_multiple.csv"));
  EXPECT_TRUE(fs::exists(t.dir / "plot_timeline.py"));
}

TEST(Bench, SweepPrintsACsvTable) {
  ScopedNoSeedEnv env;
  const CliResult r = run_cli({"bench", "--sweep", "2,4", "--repetitions", "1", "--generations",
                               "2", "--experiments", "2", "--clock", "sim"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("workers,single_median,single_min,single_max,multiple_median,", 0), 0u)
      << r.out;
  EXPECT_NE(r.out.find("\n2,"), std::string::npos);
  EXPECT_NE(r.out.find("\n4,"), std::string::npos);
}

TEST(Bench, RejectsAMalformedWaitSpec) {
  ScopedNoSeedEnv env;
  const CliResult r = run_cli({"bench", "--wait", "nope"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("expected SECONDS or LO:HI"), std::string::npos);
}

TEST(Golden, CliRunMatchesTheLibraryByteForByte) {
  ScopedNoSeedEnv env;
  TempDir t;
  const json cfg = opt_config("golden", 5, 8, 8);
  const auto file = write_config(t, "golden.json", cfg);
  const auto cli_dir = t.dir / "cli";
  const auto lib_dir = t.dir / "lib";
  ASSERT_EQ(run_cli({"run", file.string(), "--outdir", cli_dir.string()}).code, 0);

  auto exp = Experiment::from_json(cfg);
  exp->bind_model(builtin_model("Builtin/ShiftedParabola", exp->config()));
  EngineOptions eo;  // mirror the CLI defaults
  eo.workers = 1;
  eo.team_size = 1;
  eo.backend = PoolBackend::Threads;
  eo.outdir = lib_dir.string();
  eo.max_generations = 1000;
  eo.poll_interval_ms = 100;
  Engine engine(eo);
  engine.run({exp.get()});
  ASSERT_FALSE(exp->failed()) << exp->error();

  const auto names = state_files(cli_dir / "golden");
  ASSERT_EQ(names.size(), 8u);
  ASSERT_EQ(names, state_files(lib_dir / "golden"));
  for (const auto& f : names)
    EXPECT_EQ(read_file(cli_dir / "golden" / f), read_file(lib_dir / "golden" / f)) << f;
  EXPECT_EQ(read_file(cli_dir / "golden" / "latest"), read_file(lib_dir / "golden" / "latest"));
}
