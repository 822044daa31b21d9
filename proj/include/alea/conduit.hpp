#pragma once

#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "alea/common.hpp"
#include "alea/model.hpp"
#include "alea/rng.hpp"
#include "alea/worker.hpp"

namespace alea {

enum class PoolBackend { Threads, Processes, Simulated };

struct ConduitOptions {
  int workers = 1;
  int team_size = 1;
  PoolBackend backend = PoolBackend::Threads;
  uint64_t seed = 0;               // crash-injection stream seed (simulated pool)
  double crash_probability = 0.0;  // simulated pool only
  int poll_interval_ms = 100;      // wakeup guard for the real pools; the simulated pool is event driven
};

struct TaskResult {
  uint64_t experiment = 0;
  uint64_t sample = 0;
  bool ok = false;
  nlohmann::json result;
  std::string error;
  int attempts = 1;
};

namespace detail {

struct Completion {
  int worker = -1;
  bool crashed = false;
  bool ok = false;
  nlohmann::json result;
  std::string error;
};

class PoolBackendImpl {
 public:
  virtual ~PoolBackendImpl() = default;
  virtual void start(int workers) = 0;
  virtual void bind(uint64_t, const ModelBinding&) {}
  virtual void send(int worker, const Task&, const ModelBinding&) = 0;
  virtual std::vector<Completion> wait(bool block) = 0;
  virtual int64_t now_ns() = 0;
  virtual std::vector<int> pids() const { return {}; }
};

// ---- wire protocol (forked-process pool) ------------------------------

inline constexpr int kWireVersion = 1;
inline constexpr uint32_t kMaxFrameBytes = 64u << 20;

inline bool write_all_fd(int fd, const char* data, size_t len) {
  size_t off = 0;
  while (off < len) {
    const ssize_t n = ::send(fd, data + off, len - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<size_t>(n);
  }
  return true;
}

inline bool read_all_fd(int fd, char* data, size_t len) {
  size_t off = 0;
  while (off < len) {
    const ssize_t n = ::read(fd, data + off, len - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (n == 0) return false;
    off += static_cast<size_t>(n);
  }
  return true;
}

// Frames are a 4-byte little-endian length followed by a JSON payload that
// carries a wire version and message type.
inline bool write_frame(int fd, const nlohmann::json& j) {
  const std::string payload = j.dump();
  std::string buf(4 + payload.size(), '\0');
  const uint32_t len = static_cast<uint32_t>(payload.size());
  buf[0] = static_cast<char>(len & 0xff);
  buf[1] = static_cast<char>((len >> 8) & 0xff);
  buf[2] = static_cast<char>((len >> 16) & 0xff);
  buf[3] = static_cast<char>((len >> 24) & 0xff);
  std::memcpy(buf.data() + 4, payload.data(), payload.size());
  return write_all_fd(fd, buf.data(), buf.size());
}

// nullopt on clean EOF; throws on anything that violates the protocol.
inline std::optional<nlohmann::json> read_frame(int fd) {
  unsigned char hdr[4];
  if (!read_all_fd(fd, reinterpret_cast<char*>(hdr), 4)) return std::nullopt;
  const uint32_t len = static_cast<uint32_t>(hdr[0]) | (static_cast<uint32_t>(hdr[1]) << 8) |
                       (static_cast<uint32_t>(hdr[2]) << 16) | (static_cast<uint32_t>(hdr[3]) << 24);
  if (len > kMaxFrameBytes)
    throw ConduitError(ConduitError::Kind::Protocol, "frame length " + std::to_string(len));
  std::string payload(len, '\0');
  if (!read_all_fd(fd, payload.data(), len)) return std::nullopt;
  nlohmann::json j = nlohmann::json::parse(payload, nullptr, false);
  if (j.is_discarded())
    throw ConduitError(ConduitError::Kind::Protocol, "frame payload is not valid JSON");
  return j;
}

inline void check_frame(const nlohmann::json& j, std::initializer_list<const char*> required) {
  if (!j.is_object() || !j.contains("v") || !j.at("v").is_number_integer())
    throw ConduitError(ConduitError::Kind::Protocol, "frame missing version");
  if (j.at("v").get<int>() != kWireVersion)
    throw ConduitError(ConduitError::Kind::Protocol,
                       "wire version " + j.at("v").dump() + ", expected " + std::to_string(kWireVersion));
  if (!j.contains("type") || !j.at("type").is_string())
    throw ConduitError(ConduitError::Kind::Protocol, "frame missing type");
  for (const char* k : required)
    if (!j.contains(k))
      throw ConduitError(ConduitError::Kind::Protocol,
                         std::string("frame ") + j.at("type").get<std::string>() + " missing field " + k);
}

// Loop run inside a forked worker: receive bindings and tasks, run the
// external model, ship results back. Leaves on shutdown frame or parent EOF.
inline void worker_process_main(int fd, int worker_id) {
  std::map<uint64_t, ConcurrentModel> bindings;
  for (;;) {
    std::optional<nlohmann::json> frame;
    try {
      frame = read_frame(fd);
    } catch (const std::exception&) {
      _exit(2);
    }
    if (!frame) break;
    try {
      const nlohmann::json& j = *frame;
      check_frame(j, {});
      const std::string type = j.at("type").get<std::string>();
      if (type == "shutdown") break;
      if (type == "bind") {
        check_frame(j, {"experiment", "command"});
        ConcurrentModel m;
        m.command = j.at("command").get<std::string>();
        m.result_file = j.value("file", std::string());
        m.timeout_s = j.value("timeout", 0.0);
        bindings[j.at("experiment").get<uint64_t>()] = std::move(m);
        continue;
      }
      if (type == "task") {
        check_frame(j, {"experiment", "sample", "params", "named"});
        Task t;
        t.experiment = j.at("experiment").get<uint64_t>();
        t.sample = j.at("sample").get<uint64_t>();
        t.params = j.at("params").get<std::vector<double>>();
        for (const auto& [k, v] : j.at("named").items()) t.named.emplace_back(k, v.get<double>());
        nlohmann::json reply{{"v", kWireVersion}, {"type", "result"},
                             {"experiment", t.experiment}, {"sample", t.sample}};
        try {
          auto it = bindings.find(t.experiment);
          if (it == bindings.end())
            throw ConduitError(ConduitError::Kind::UnknownExperiment, std::to_string(t.experiment));
          reply["result"] = run_concurrent_model(it->second, t, worker_id);
          reply["ok"] = true;
        } catch (const std::exception& e) {
          reply["ok"] = false;
          reply["error"] = e.what();
        }
        if (!write_frame(fd, reply)) break;
        continue;
      }
      throw ConduitError(ConduitError::Kind::Protocol, "unexpected frame type " + type);
    } catch (const std::exception&) {
      _exit(2);
    }
  }
  _exit(0);
}

// ---- in-process thread pool -------------------------------------------

class ThreadBackend final : public PoolBackendImpl {
 public:
  explicit ThreadBackend(int poll_interval_ms) : poll_interval_ms_(poll_interval_ms) {}

  ~ThreadBackend() override {
    for (auto& s : slots_) {
      {
        std::lock_guard<std::mutex> lk(s->m);
        s->stop = true;
      }
      s->cv.notify_one();
    }
    for (auto& s : slots_)
      if (s->th.joinable()) s->th.join();
  }

  void start(int workers) override {
    start_ = std::chrono::steady_clock::now();
    slots_.reserve(static_cast<size_t>(workers));
    for (int i = 0; i < workers; ++i) {
      slots_.push_back(std::make_unique<Slot>());
      slots_.back()->th = std::thread([this, i] { worker_loop(i); });
    }
  }

  void send(int worker, const Task& task, const ModelBinding& binding) override {
    Slot& s = *slots_[static_cast<size_t>(worker)];
    {
      std::lock_guard<std::mutex> lk(s.m);
      s.job = Job{task, &binding};
    }
    s.cv.notify_one();
  }

  std::vector<Completion> wait(bool block) override {
    std::unique_lock<std::mutex> lk(done_m_);
    if (block) {
      while (done_.empty())
        done_cv_.wait_for(lk, std::chrono::milliseconds(poll_interval_ms_));
    }
    std::vector<Completion> out(done_.begin(), done_.end());
    done_.clear();
    return out;
  }

  int64_t now_ns() override {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  struct Job {
    Task task;
    const ModelBinding* binding;
  };
  struct Slot {
    std::mutex m;
    std::condition_variable cv;
    std::optional<Job> job;
    bool stop = false;
    std::thread th;
  };

  void worker_loop(int id) {
    Slot& s = *slots_[static_cast<size_t>(id)];
    for (;;) {
      std::optional<Job> job;
      {
        std::unique_lock<std::mutex> lk(s.m);
        s.cv.wait(lk, [&] { return s.stop || s.job.has_value(); });
        if (s.stop && !s.job) return;
        job.swap(s.job);
      }
      Completion c;
      c.worker = id;
      try {
        if (job->binding->is_concurrent()) {
          c.result = run_concurrent_model(*job->binding->command, job->task, id);
        } else if (job->binding->fn) {
          ModelSample ms(job->task);
          job->binding->fn(ms);
          c.result = ms.result();
        } else {
          throw ConduitError(ConduitError::Kind::Unsupported, "experiment has no model bound");
        }
        c.ok = true;
      } catch (const std::exception& e) {
        c.ok = false;
        c.error = e.what();
      }
      {
        std::lock_guard<std::mutex> lk(done_m_);
        done_.push_back(std::move(c));
      }
      done_cv_.notify_one();
    }
  }

  int poll_interval_ms_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::unique_ptr<Slot>> slots_;
  std::mutex done_m_;
  std::condition_variable done_cv_;
  std::deque<Completion> done_;
};

// ---- forked-process pool ------------------------------------------------

class ProcessBackend final : public PoolBackendImpl {
 public:
  explicit ProcessBackend(int poll_interval_ms) : poll_interval_ms_(poll_interval_ms) {}

  ~ProcessBackend() override {
    for (size_t i = 0; i < fds_.size(); ++i) {
      if (fds_[i] < 0) continue;
      write_frame(fds_[i], {{"v", kWireVersion}, {"type", "shutdown"}});
      ::close(fds_[i]);
      fds_[i] = -1;
    }
    for (pid_t pid : pids_) {
      if (pid <= 0) continue;
      int status = 0;
      ::waitpid(pid, &status, 0);
    }
  }

  void start(int workers) override {
    start_ = std::chrono::steady_clock::now();
    fds_.assign(static_cast<size_t>(workers), -1);
    pids_.assign(static_cast<size_t>(workers), -1);
    for (int i = 0; i < workers; ++i) spawn(i);
  }

  void bind(uint64_t experiment, const ModelBinding& binding) override {
    if (!binding.is_concurrent())
      throw ConduitError(ConduitError::Kind::Unsupported,
                         "in-process models cannot cross a process boundary; use the thread pool");
    bindings_[experiment] = *binding.command;
    for (int fd : fds_)
      if (fd >= 0) send_binding(fd, experiment, *binding.command);
  }

  void send(int worker, const Task& task, const ModelBinding&) override {
    nlohmann::json named = nlohmann::json::object();
    for (const auto& [k, v] : task.named) named[k] = v;
    const nlohmann::json frame{{"v", kWireVersion}, {"type", "task"},     {"experiment", task.experiment},
                               {"sample", task.sample}, {"params", task.params}, {"named", named}};
    if (!write_frame(fds_[static_cast<size_t>(worker)], frame)) {
      // Worker died before it could take the task; surface it as a crash.
      Completion c;
      c.worker = worker;
      c.crashed = true;
      deferred_.push_back(std::move(c));
      respawn(worker);
    }
  }

  std::vector<Completion> wait(bool block) override {
    std::vector<Completion> out;
    std::swap(out, deferred_);
    for (;;) {
      std::vector<struct pollfd> pfds;
      pfds.reserve(fds_.size());
      for (int fd : fds_) pfds.push_back({fd, POLLIN, 0});
      const int timeout = (block && out.empty()) ? poll_interval_ms_ : 0;
      const int pr = ::poll(pfds.data(), pfds.size(), timeout);
      if (pr < 0) {
        if (errno == EINTR) continue;
        throw ConduitError(ConduitError::Kind::Protocol, std::string("poll: ") + std::strerror(errno));
      }
      if (pr > 0) {
        for (size_t i = 0; i < pfds.size(); ++i) {
          if (!(pfds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
          drain_worker(static_cast<int>(i), out);
        }
      }
      if (!out.empty() || !block) return out;
    }
  }

  int64_t now_ns() override {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_)
        .count();
  }

  std::vector<int> pids() const override {
    std::vector<int> out;
    out.reserve(pids_.size());
    for (pid_t p : pids_) out.push_back(static_cast<int>(p));
    return out;
  }

 private:
  void spawn(int worker) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
      throw ConduitError(ConduitError::Kind::SpawnFailure,
                         "worker " + std::to_string(worker) + ": socketpair: " + std::strerror(errno));
    const pid_t pid = ::fork();
    if (pid < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw ConduitError(ConduitError::Kind::SpawnFailure,
                         "worker " + std::to_string(worker) + ": fork: " + std::strerror(errno));
    }
    if (pid == 0) {
      // Drop every parent-side descriptor this child inherited, so sibling
      // crashes are visible to the parent as EOF.
      for (int fd : fds_)
        if (fd >= 0) ::close(fd);
      ::close(sv[0]);
      worker_process_main(sv[1], worker);
      _exit(0);
    }
    ::close(sv[1]);
    fds_[static_cast<size_t>(worker)] = sv[0];
    pids_[static_cast<size_t>(worker)] = pid;
    for (const auto& [exp, model] : bindings_) send_binding(sv[0], exp, model);
  }

  void respawn(int worker) {
    const size_t w = static_cast<size_t>(worker);
    if (fds_[w] >= 0) ::close(fds_[w]);
    fds_[w] = -1;
    if (pids_[w] > 0) {
      ::kill(pids_[w], SIGKILL);
      int status = 0;
      ::waitpid(pids_[w], &status, 0);
      pids_[w] = -1;
    }
    spawn(worker);
  }

  void send_binding(int fd, uint64_t experiment, const ConcurrentModel& m) {
    write_frame(fd, {{"v", kWireVersion}, {"type", "bind"}, {"experiment", experiment},
                     {"command", m.command}, {"file", m.result_file}, {"timeout", m.timeout_s}});
  }

  void drain_worker(int worker, std::vector<Completion>& out) {
    std::optional<nlohmann::json> frame;
    try {
      frame = read_frame(fds_[static_cast<size_t>(worker)]);
    } catch (const ConduitError&) {
      throw;  // protocol violation: fail fast
    }
    if (!frame) {
      Completion c;
      c.worker = worker;
      c.crashed = true;
      out.push_back(std::move(c));
      respawn(worker);
      return;
    }
    check_frame(*frame, {"experiment", "sample", "ok"});
    if (frame->at("type").get<std::string>() != "result")
      throw ConduitError(ConduitError::Kind::Protocol,
                         "unexpected frame type " + frame->at("type").get<std::string>());
    Completion c;
    c.worker = worker;
    c.ok = frame->at("ok").get<bool>();
    if (c.ok) c.result = frame->at("result");
    else c.error = frame->value("error", std::string("model failure"));
    out.push_back(std::move(c));
  }

  int poll_interval_ms_;
  std::chrono::steady_clock::time_point start_;
  std::vector<int> fds_;
  std::vector<pid_t> pids_;
  std::map<uint64_t, ConcurrentModel> bindings_;
  std::vector<Completion> deferred_;
};

// ---- discrete-event simulated pool --------------------------------------

class SimBackend final : public PoolBackendImpl {
 public:
  SimBackend(uint64_t seed, double crash_probability)
      : crash_rng_(seed, "Conduit/CrashInjection"), crash_probability_(crash_probability) {}

  void start(int) override {}

  void send(int worker, const Task& task, const ModelBinding& binding) override {
    int64_t duration = 0;
    if (binding.sim_duration) {
      const double d = binding.sim_duration(task);
      if (d > 0.0) duration = static_cast<int64_t>(std::llround(d * 1e9));
    }
    Event e;
    e.time_ns = now_ + duration;
    e.seq = seq_++;
    e.completion.worker = worker;
    if (crash_probability_ > 0.0 && crash_rng_.uniform01() < crash_probability_) {
      e.completion.crashed = true;
    } else {
      try {
        if (binding.is_concurrent())
          throw ConduitError(ConduitError::Kind::Unsupported,
                             "concurrent models are not available on the simulated pool");
        if (!binding.fn)
          throw ConduitError(ConduitError::Kind::Unsupported, "experiment has no model bound");
        ModelSample ms(task);
        binding.fn(ms);
        e.completion.ok = true;
        e.completion.result = ms.result();
      } catch (const std::exception& ex) {
        e.completion.ok = false;
        e.completion.error = ex.what();
      }
    }
    events_.push(std::move(e));
  }

  // Advances virtual time to the next completion timestamp and returns every
  // completion scheduled for it.
  std::vector<Completion> wait(bool) override {
    std::vector<Completion> out;
    if (events_.empty()) return out;
    const int64_t t0 = events_.top().time_ns;
    now_ = t0;
    while (!events_.empty() && events_.top().time_ns == t0) {
      out.push_back(events_.top().completion);
      events_.pop();
    }
    return out;
  }

  int64_t now_ns() override { return now_; }

 private:
  struct Event {
    int64_t time_ns = 0;
    uint64_t seq = 0;
    Completion completion;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time_ns != b.time_ns) return a.time_ns > b.time_ns;
      return a.seq > b.seq;
    }
  };

  RngStream crash_rng_;
  double crash_probability_;
  int64_t now_ = 0;
  uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
};

}  // namespace detail

// Master side of the pool: owns the common FIFO queue for all experiments,
// the worker handles with their state machine, and the dispatch rule (front
// of queue to the lowest-numbered idle worker). Fault policy: a crashed
// sample is re-queued once, a second crash reports a failed result.
class Conduit {
 public:
  explicit Conduit(ConduitOptions opt) : opt_(opt) {
    if (opt_.workers < 1) throw Error("conduit needs at least one worker");
    if (opt_.team_size < 1) throw Error("team size must be positive");
    switch (opt_.backend) {
      case PoolBackend::Threads:
        impl_ = std::make_unique<detail::ThreadBackend>(opt_.poll_interval_ms);
        break;
      case PoolBackend::Processes:
        impl_ = std::make_unique<detail::ProcessBackend>(opt_.poll_interval_ms);
        break;
      case PoolBackend::Simulated:
        impl_ = std::make_unique<detail::SimBackend>(opt_.seed, opt_.crash_probability);
        break;
    }
    impl_->start(opt_.workers);
    workers_.resize(static_cast<size_t>(opt_.workers));
    for (int i = 0; i < opt_.workers; ++i) {
      workers_[static_cast<size_t>(i)].id = i;
      workers_[static_cast<size_t>(i)].team_size = opt_.team_size;
    }
  }

  void bind(uint64_t experiment, ModelBinding binding) {
    if (bindings_.count(experiment))
      throw Error("experiment " + std::to_string(experiment) + " already bound");
    if (opt_.backend == PoolBackend::Simulated && binding.is_concurrent())
      throw ConduitError(ConduitError::Kind::Unsupported,
                         "concurrent models are not available on the simulated pool");
    impl_->bind(experiment, binding);
    bindings_.emplace(experiment, std::move(binding));
  }

  void unbind(uint64_t experiment) {
    for (const auto& t : queue_)
      if (t.experiment == experiment) throw Error("experiment still has queued work");
    for (const auto& [w, t] : in_flight_)
      if (t.experiment == experiment) throw Error("experiment still has running work");
    bindings_.erase(experiment);
  }

  size_t submit(uint64_t experiment, std::vector<Task> tasks) {
    if (!bindings_.count(experiment))
      throw ConduitError(ConduitError::Kind::UnknownExperiment, std::to_string(experiment));
    for (auto& t : tasks) {
      t.experiment = experiment;
      queue_.push_back(std::move(t));
    }
    return queue_.size();
  }

  // Pairs queued tasks with idle workers until one side runs out.
  size_t dispatch() {
    size_t assigned = 0;
    while (!queue_.empty()) {
      int w = -1;
      for (const auto& wh : workers_) {
        if (wh.state == WorkerState::Idle) {
          w = wh.id;
          break;
        }
      }
      if (w < 0) break;
      Task t = std::move(queue_.front());
      queue_.pop_front();
      assign(w, std::move(t));
      ++assigned;
    }
    return assigned;
  }

  // Retrieves results from every Pending worker and returns them Idle,
  // applying the crash requeue policy.
  std::vector<TaskResult> collect() {
    std::vector<TaskResult> out;
    for (auto& wh : workers_) {
      if (wh.state != WorkerState::Pending) continue;
      detail::Completion c = std::move(payload_[wh.id]);
      payload_.erase(wh.id);
      auto it = in_flight_.find(wh.id);
      Task task = std::move(it->second);
      in_flight_.erase(it);
      transition(wh, WorkerState::Idle, task.experiment, task.sample);
      const std::pair<uint64_t, uint64_t> key{task.experiment, task.sample};
      if (c.crashed) {
        const int crashes = ++crashes_[key];
        if (crashes <= 1) {
          queue_.push_back(std::move(task));
        } else {
          crashes_.erase(key);
          TaskResult r;
          r.experiment = task.experiment;
          r.sample = task.sample;
          r.ok = false;
          r.error = "WorkerCrashed: worker lost twice while evaluating sample " + std::to_string(task.sample);
          r.attempts = crashes;
          out.push_back(std::move(r));
        }
        continue;
      }
      TaskResult r;
      r.experiment = task.experiment;
      r.sample = task.sample;
      r.ok = c.ok;
      r.result = std::move(c.result);
      r.error = std::move(c.error);
      auto cit = crashes_.find(key);
      r.attempts = 1 + (cit == crashes_.end() ? 0 : cit->second);
      if (cit != crashes_.end()) crashes_.erase(cit);
      out.push_back(std::move(r));
    }
    return out;
  }

  // One scheduling step: fill idle workers, block for at least one completion
  // (if anything is running), harvest finished results, refill.
  std::vector<TaskResult> wait() {
    dispatch();
    if (in_flight_.empty()) return collect();
    process_completions(impl_->wait(true));
    auto out = collect();
    dispatch();
    return out;
  }

  std::vector<TaskResult> poll() {
    dispatch();
    process_completions(impl_->wait(false));
    auto out = collect();
    dispatch();
    return out;
  }

  bool drained() const {
    if (!queue_.empty() || !in_flight_.empty()) return false;
    for (const auto& wh : workers_)
      if (wh.state != WorkerState::Idle) return false;
    return true;
  }

  size_t queue_size() const { return queue_.size(); }
  size_t in_flight() const { return in_flight_.size(); }
  int64_t now_ns() const { return impl_->now_ns(); }
  const std::vector<WorkerHandle>& workers() const { return workers_; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  const std::vector<BusyInterval>& busy_intervals() const { return busy_intervals_; }
  std::vector<int> worker_pids() const { return impl_->pids(); }
  const ConduitOptions& options() const { return opt_; }

 private:
  void assign(int worker, Task task) {
    WorkerHandle& wh = workers_[static_cast<size_t>(worker)];
    transition(wh, WorkerState::Busy, task.experiment, task.sample);
    wh.experiment = task.experiment;
    wh.sample = task.sample;
    wh.busy_since_ns = impl_->now_ns();
    const ModelBinding& binding = bindings_.at(task.experiment);
    in_flight_.emplace(worker, task);
    impl_->send(worker, task, binding);
  }

  void process_completions(std::vector<detail::Completion> cs) {
    std::sort(cs.begin(), cs.end(),
              [](const detail::Completion& a, const detail::Completion& b) { return a.worker < b.worker; });
    for (auto& c : cs) {
      WorkerHandle& wh = workers_[static_cast<size_t>(c.worker)];
      if (wh.state != WorkerState::Busy) continue;  // idle worker externally killed; backend respawned it
      const int64_t t = impl_->now_ns();
      busy_intervals_.push_back({wh.id, wh.busy_since_ns, t, wh.experiment, wh.sample, c.crashed});
      transition(wh, WorkerState::Pending, wh.experiment, wh.sample);
      payload_[wh.id] = std::move(c);
    }
  }

  void transition(WorkerHandle& wh, WorkerState to, uint64_t experiment, uint64_t sample) {
    transitions_.push_back({wh.id, wh.state, to, impl_->now_ns(), experiment, sample});
    wh.state = to;
  }

  ConduitOptions opt_;
  std::unique_ptr<detail::PoolBackendImpl> impl_;
  std::vector<WorkerHandle> workers_;
  std::map<uint64_t, ModelBinding> bindings_;
  std::deque<Task> queue_;
  std::map<int, Task> in_flight_;
  std::map<int, detail::Completion> payload_;
  std::map<std::pair<uint64_t, uint64_t>, int> crashes_;
  std::vector<Transition> transitions_;
  std::vector<BusyInterval> busy_intervals_;
};

}  // namespace alea
