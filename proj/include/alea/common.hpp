#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace alea {

// Finite stand-in for log(0). Sums of a few sentinels stay representable,
// exp() underflows to an exact 0, and the value survives JSON round trips
// (IEEE infinities do not).
inline constexpr double kLogZero = -1.0e300;
inline constexpr double kLogZeroThreshold = -1.0e290;

inline bool is_log_zero(double x) {
  if (!std::isfinite(x)) return true;
  return x <= kLogZeroThreshold;
}

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
 public:
  enum class Kind { UnknownKey, TypeMismatch, MissingRequired, Invalid };

  ConfigError(Kind kind, std::string path, const std::string& detail = "")
      : Error(compose(kind, path, detail)), kind_(kind), path_(std::move(path)) {}

  Kind kind() const { return kind_; }
  const std::string& path() const { return path_; }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::UnknownKey: return "UnknownKey";
      case Kind::TypeMismatch: return "TypeMismatch";
      case Kind::MissingRequired: return "MissingRequired";
      case Kind::Invalid: return "Invalid";
    }
    return "ConfigError";
  }

 private:
  static std::string compose(Kind k, const std::string& path, const std::string& detail) {
    std::string s = kind_name(k);
    s += ": ";
    s += path;
    if (!detail.empty()) {
      s += " (";
      s += detail;
      s += ")";
    }
    return s;
  }
  Kind kind_;
  std::string path_;
};

class ProblemError : public Error {
 public:
  enum class Kind { MissingResultKey, LengthMismatch, UnresolvedPrior };

  ProblemError(Kind kind, const std::string& detail)
      : Error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

  Kind kind() const { return kind_; }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::MissingResultKey: return "MissingResultKey";
      case Kind::LengthMismatch: return "LengthMismatch";
      case Kind::UnresolvedPrior: return "UnresolvedPrior";
    }
    return "ProblemError";
  }

 private:
  Kind kind_;
};

class SolverError : public Error {
 public:
  enum class Kind { DegenerateCovariance, NonFiniteObjectiveCount, AllLikelihoodsNonFinite };

  SolverError(Kind kind, const std::string& detail)
      : Error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

  Kind kind() const { return kind_; }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::DegenerateCovariance: return "DegenerateCovariance";
      case Kind::NonFiniteObjectiveCount: return "NonFiniteObjectiveCount";
      case Kind::AllLikelihoodsNonFinite: return "AllLikelihoodsNonFinite";
    }
    return "SolverError";
  }

 private:
  Kind kind_;
};

class ConduitError : public Error {
 public:
  enum class Kind { SpawnFailure, UnknownExperiment, NonZeroExit, ParseFailure, Timeout, Protocol, Unsupported };

  ConduitError(Kind kind, const std::string& detail)
      : Error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

  Kind kind() const { return kind_; }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::SpawnFailure: return "SpawnFailure";
      case Kind::UnknownExperiment: return "UnknownExperiment";
      case Kind::NonZeroExit: return "NonZeroExit";
      case Kind::ParseFailure: return "ParseFailure";
      case Kind::Timeout: return "Timeout";
      case Kind::Protocol: return "Protocol";
      case Kind::Unsupported: return "Unsupported";
    }
    return "ConduitError";
  }

 private:
  Kind kind_;
};

class CheckpointError : public Error {
 public:
  enum class Kind { VersionMismatch, CorruptCheckpoint, IoFailure };

  CheckpointError(Kind kind, const std::string& detail)
      : Error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

  Kind kind() const { return kind_; }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::VersionMismatch: return "VersionMismatch";
      case Kind::CorruptCheckpoint: return "CorruptCheckpoint";
      case Kind::IoFailure: return "IoFailure";
    }
    return "CheckpointError";
  }

 private:
  Kind kind_;
};

inline constexpr uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline constexpr uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// One-shot variant for deriving child seeds from a value.
inline constexpr uint64_t mix64(uint64_t x) { return splitmix64(x); }

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::IoFailure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::optional<std::string> try_read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes content to a temporary sibling first and renames into place, so a
// reader never observes a half-written file and a failed write leaves any
// previous version untouched.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::IoFailure, "cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw CheckpointError(CheckpointError::Kind::IoFailure, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ec2;
    fs::remove(tmp, ec2);
    throw CheckpointError(CheckpointError::Kind::IoFailure,
                          "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
  }
}

}  // namespace alea
