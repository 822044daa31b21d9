#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "alea/common.hpp"

namespace alea {

// Inverse of the standard normal CDF (Wichura's AS241, double precision).
// Used instead of rejection or Box-Muller so a generator carries no cached
// half-sample: the stream state is exactly the four xoshiro words.
inline double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    if (p == 0.0) return -HUGE_VAL;
    if (p == 1.0) return HUGE_VAL;
    return NAN;
  }
  const double q = p - 0.5;
  double r, num, den;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    num = (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
              1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
            1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
    den = (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
              5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
            4.2313330701600911252e+1) * r + 1.0);
    return q * num / den;
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  if (r <= 5.0) {
    r -= 1.6;
    num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
              3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
            4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
    den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
            2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
            5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
    den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  const double value = num / den;
  return q < 0.0 ? -value : value;
}

// xoshiro256++ stream with splitmix64 seeding. Streams are identified by a
// name so unrelated consumers (solver, each distribution, bench waits) never
// share a sequence; the derived seed mixes the master seed with an FNV-1a
// hash of the name.
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "xoshiro256++";

  RngStream() : RngStream(0, "") {}

  explicit RngStream(uint64_t seed, std::string_view name = "") : seed_(seed) {
    uint64_t x = seed ^ (name.empty() ? 0ull : fnv1a64(name));
    for (auto& w : s_) w = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on (0,1): 53-bit mantissa shifted to bin midpoints, so neither
  // endpoint can occur and normal_quantile never sees 0 or 1.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal(double mean = 0.0, double sigma = 1.0) {
    return mean + sigma * normal_quantile(uniform01());
  }

  nlohmann::json serialize() const {
    return {{"Algorithm", kAlgorithm},
            {"Seed", seed_},
            {"State", {s_[0], s_[1], s_[2], s_[3]}}};
  }

  static RngStream deserialize(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("Algorithm") || !j.contains("State"))
      throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint, "malformed rng stream record");
    if (j.at("Algorithm").get<std::string>() != kAlgorithm)
      throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                            "rng algorithm " + j.at("Algorithm").get<std::string>());
    const auto& st = j.at("State");
    if (!st.is_array() || st.size() != 4)
      throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint, "rng state must be 4 words");
    RngStream r;
    r.seed_ = j.value("Seed", 0ull);
    for (int i = 0; i < 4; ++i) r.s_[i] = st.at(i).get<uint64_t>();
    return r;
  }

  bool operator==(const RngStream& o) const { return s_ == o.s_; }

  uint64_t seed() const { return seed_; }

 private:
  static constexpr uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t seed_ = 0;
  std::array<uint64_t, 4> s_{};
};

}  // namespace alea
