#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alea/common.hpp"

namespace alea {

enum class WorkerState { Idle, Busy, Pending };

inline const char* worker_state_name(WorkerState s) {
  switch (s) {
    case WorkerState::Idle: return "Idle";
    case WorkerState::Busy: return "Busy";
    case WorkerState::Pending: return "Pending";
  }
  return "?";
}

// One slot in the pool. The id is stable across crash respawns; only the
// backing process changes.
struct WorkerHandle {
  int id = 0;
  int team_size = 1;
  WorkerState state = WorkerState::Idle;
  uint64_t experiment = 0;  // valid while Busy/Pending
  uint64_t sample = 0;
  int64_t busy_since_ns = 0;
};

struct Transition {
  int worker = 0;
  WorkerState from = WorkerState::Idle;
  WorkerState to = WorkerState::Idle;
  int64_t time_ns = 0;
  uint64_t experiment = 0;
  uint64_t sample = 0;
};

struct BusyInterval {
  int worker = 0;
  int64_t start_ns = 0;
  int64_t end_ns = 0;
  uint64_t experiment = 0;
  uint64_t sample = 0;
  bool crashed = false;
};

// Checks a recorded transition log against the legal worker lifecycle:
// every worker starts Idle and only ever steps Idle->Busy->Pending->Idle.
// Returns human-readable violations (empty means the log is legal).
inline std::vector<std::string> validate_transition_log(std::span<const Transition> log, int workers) {
  std::vector<std::string> violations;
  std::vector<WorkerState> state(static_cast<size_t>(workers), WorkerState::Idle);
  for (size_t i = 0; i < log.size(); ++i) {
    const Transition& tr = log[i];
    if (tr.worker < 0 || tr.worker >= workers) {
      violations.push_back("record " + std::to_string(i) + ": unknown worker " + std::to_string(tr.worker));
      continue;
    }
    WorkerState& cur = state[static_cast<size_t>(tr.worker)];
    if (tr.from != cur) {
      violations.push_back("record " + std::to_string(i) + ": worker " + std::to_string(tr.worker) +
                           " transition from " + worker_state_name(tr.from) + " but state is " +
                           worker_state_name(cur));
    }
    const bool legal = (tr.from == WorkerState::Idle && tr.to == WorkerState::Busy) ||
                       (tr.from == WorkerState::Busy && tr.to == WorkerState::Pending) ||
                       (tr.from == WorkerState::Pending && tr.to == WorkerState::Idle);
    if (!legal) {
      violations.push_back("record " + std::to_string(i) + ": worker " + std::to_string(tr.worker) +
                           " illegal transition " + worker_state_name(tr.from) + " -> " +
                           worker_state_name(tr.to));
    }
    cur = tr.to;
  }
  return violations;
}

// Worker teams that fit in N processes when one process is reserved for the
// engine and each team spans m ranks.
inline int teams_for_processes(int processes, int team_size) {
  if (processes < 1 || team_size < 1) throw Error("processes and team size must be positive");
  return (processes - 1) / team_size;
}

}  // namespace alea
