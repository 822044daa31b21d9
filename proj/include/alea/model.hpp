#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "alea/common.hpp"
#include "alea/problem.hpp"

extern char** environ;

namespace alea {

inline constexpr const char* kWorkerIdEnvVar = "KORALI_WORKER_ID";

// One model evaluation request as it travels through the conduit.
struct Task {
  uint64_t experiment = 0;
  uint64_t sample = 0;
  std::vector<double> params;
  std::vector<std::pair<std::string, double>> named;  // variable name -> value
};

// The view an in-process model function gets of a task: read parameters,
// write result keys.
class ModelSample {
 public:
  explicit ModelSample(const Task& t) : task_(&t), result_(nlohmann::json::object()) {}

  double param(const std::string& name) const {
    for (const auto& [k, v] : task_->named)
      if (k == name) return v;
    throw Error("model asked for unknown variable " + name);
  }

  const std::vector<double>& params() const { return task_->params; }
  uint64_t id() const { return task_->sample; }

  void set(const std::string& key, double v) { result_[key] = v; }
  void set(const std::string& key, const std::vector<double>& v) { result_[key] = v; }

  nlohmann::json& result() { return result_; }
  const nlohmann::json& result() const { return result_; }

 private:
  const Task* task_;
  nlohmann::json result_;
};

using InProcessModel = std::function<void(ModelSample&)>;

struct ConcurrentModel {
  std::string command;      // argv template, tokens {VariableName}, {SampleId}, {ExperimentId}
  std::string result_file;  // if set, parse this file instead of stdout
  double timeout_s = 0.0;
};

// A model attached to an experiment. Exactly one of fn/command is active;
// sim_duration supplies virtual execution times for the simulated pool.
struct ModelBinding {
  InProcessModel fn;
  std::optional<ConcurrentModel> command;
  std::function<double(const Task&)> sim_duration;

  static ModelBinding in_process(InProcessModel f) {
    ModelBinding b;
    b.fn = std::move(f);
    return b;
  }

  static ModelBinding concurrent(ConcurrentModel c) {
    ModelBinding b;
    b.command = std::move(c);
    return b;
  }

  bool is_concurrent() const { return command.has_value(); }
};

inline std::string substitute_tokens(const std::string& tmpl, const Task& task) {
  std::string out;
  out.reserve(tmpl.size());
  size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] != '{') {
      out += tmpl[i++];
      continue;
    }
    const size_t close = tmpl.find('}', i);
    if (close == std::string::npos)
      throw ConfigError(ConfigError::Kind::Invalid, "Command", "unbalanced { in template");
    const std::string token = tmpl.substr(i + 1, close - i - 1);
    if (token == "SampleId") {
      out += std::to_string(task.sample);
    } else if (token == "ExperimentId") {
      out += std::to_string(task.experiment);
    } else {
      bool found = false;
      for (const auto& [k, v] : task.named) {
        if (k == token) {
          out += format_real(v);
          found = true;
          break;
        }
      }
      if (!found)
        throw ConfigError(ConfigError::Kind::Invalid, "Command", "unresolved token {" + token + "}");
    }
    i = close + 1;
  }
  return out;
}

inline std::vector<std::string> split_command(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// A model's textual output: either a bare real number (shorthand for the
// objective) or a JSON document of result keys.
inline nlohmann::json parse_model_output(const std::string& text) {
  std::string t = text;
  const auto first = t.find_first_not_of(" \t\r\n");
  if (first == std::string::npos)
    throw ConduitError(ConduitError::Kind::ParseFailure, "empty model output");
  const auto last = t.find_last_not_of(" \t\r\n");
  t = t.substr(first, last - first + 1);

  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() + t.size() && errno == 0) return {{kResultObjective, v}};

  nlohmann::json j = nlohmann::json::parse(t, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ConduitError(ConduitError::Kind::ParseFailure,
                       "model output is neither a real number nor a JSON object: " +
                           t.substr(0, std::min<size_t>(t.size(), 120)));
  return j;
}

namespace detail {

inline std::vector<std::string> build_child_env(int worker_id) {
  std::vector<std::string> env;
  for (char** e = environ; e && *e; ++e) {
    if (std::strncmp(*e, "KORALI_WORKER_ID=", 17) == 0) continue;
    env.emplace_back(*e);
  }
  env.push_back(std::string(kWorkerIdEnvVar) + "=" + std::to_string(worker_id));
  return env;
}

}  // namespace detail

// Runs one external model evaluation: substitute the argv template, spawn the
// child with KORALI_WORKER_ID set, capture stdout, enforce the timeout, and
// parse the result from stdout or the declared result file.
inline nlohmann::json run_concurrent_model(const ConcurrentModel& model, const Task& task, int worker_id) {
  const std::vector<std::string> args = split_command(substitute_tokens(model.command, task));
  if (args.empty())
    throw ConfigError(ConfigError::Kind::Invalid, "Command", "empty command template");

  std::vector<char*> argv;
  argv.reserve(args.size() + 1);
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  std::vector<std::string> env = detail::build_child_env(worker_id);
  std::vector<char*> envp;
  envp.reserve(env.size() + 1);
  for (const auto& e : env) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);

  int out_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0)
    throw ConduitError(ConduitError::Kind::SpawnFailure, std::string("pipe2: ") + std::strerror(errno));

  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_adddup2(&fa, out_pipe[1], 1);

  // Each model gets its own process group so a timeout can kill the whole
  // tree; shell wrappers would otherwise leave their children running.
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, argv[0], &fa, &attr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&fa);
  posix_spawnattr_destroy(&attr);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(out_pipe[0]);
    throw ConduitError(ConduitError::Kind::SpawnFailure, args[0] + ": " + std::strerror(rc));
  }

  const auto start = std::chrono::steady_clock::now();
  const bool timed = model.timeout_s > 0.0;
  auto remaining_ms = [&]() -> int {
    if (!timed) return -1;
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double left = model.timeout_s - elapsed;
    return left <= 0.0 ? 0 : static_cast<int>(left * 1000.0) + 1;
  };
  auto kill_child = [&]() {
    ::kill(-pid, SIGKILL);
    int status = 0;
    ::waitpid(pid, &status, 0);
  };

  std::string output;
  char buf[4096];
  for (;;) {
    struct pollfd pfd{out_pipe[0], POLLIN, 0};
    const int timeout = remaining_ms();
    if (timed && timeout == 0) {
      ::close(out_pipe[0]);
      kill_child();
      throw ConduitError(ConduitError::Kind::Timeout, args[0] + " exceeded " + format_real(model.timeout_s) + "s");
    }
    const int pr = ::poll(&pfd, 1, timeout);
    if (pr == 0) continue;  // re-check deadline
    if (pr < 0) {
      if (errno == EINTR) continue;
      ::close(out_pipe[0]);
      kill_child();
      throw ConduitError(ConduitError::Kind::SpawnFailure, std::string("poll: ") + std::strerror(errno));
    }
    const ssize_t n = ::read(out_pipe[0], buf, sizeof(buf));
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(out_pipe[0]);
      kill_child();
      throw ConduitError(ConduitError::Kind::SpawnFailure, std::string("read: ") + std::strerror(errno));
    }
    if (n == 0) break;  // child closed stdout
    output.append(buf, static_cast<size_t>(n));
  }
  ::close(out_pipe[0]);

  // stdout is closed; the child should exit promptly, but honor the deadline.
  int status = 0;
  for (;;) {
    const pid_t w = ::waitpid(pid, &status, timed ? WNOHANG : 0);
    if (w == pid) break;
    if (w < 0 && errno != EINTR)
      throw ConduitError(ConduitError::Kind::SpawnFailure, std::string("waitpid: ") + std::strerror(errno));
    if (timed) {
      if (remaining_ms() == 0) {
        kill_child();
        throw ConduitError(ConduitError::Kind::Timeout,
                           args[0] + " exceeded " + format_real(model.timeout_s) + "s");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    std::string detail = args[0];
    if (WIFEXITED(status)) detail += " exited with status " + std::to_string(WEXITSTATUS(status));
    else if (WIFSIGNALED(status)) detail += " killed by signal " + std::to_string(WTERMSIG(status));
    throw ConduitError(ConduitError::Kind::NonZeroExit, detail);
  }

  if (model.result_file.empty()) return parse_model_output(output);

  const std::string path = substitute_tokens(model.result_file, task);
  auto content = try_read_file(path);
  if (!content)
    throw ConduitError(ConduitError::Kind::ParseFailure, "result file " + path + " was not produced");
  return parse_model_output(*content);
}

}  // namespace alea
