#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace gwardar {

// Simulated time, in abstract units. One unit per forwarding hop.
using SimTime = std::uint64_t;

enum class Err {
  Unknown,
  InvalidArgument,
  ParseError,
  Io,
  UnknownDevice,
  UnknownIngress,
  DisconnectedTopology,
  EmptyStore,
  DuplicatePacketId,
  NoTrustedSnapshot,
  PartialRestore,
  BadState,
};

class Error : public std::runtime_error {
 public:
  Error(Err code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  Err code() const noexcept { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

inline const char* err_name(Err e) {
  switch (e) {
    case Err::Unknown: return "Unknown";
    case Err::InvalidArgument: return "InvalidArgument";
    case Err::ParseError: return "ParseError";
    case Err::Io: return "Io";
    case Err::UnknownDevice: return "UnknownDevice";
    case Err::UnknownIngress: return "UnknownIngress";
    case Err::DisconnectedTopology: return "DisconnectedTopology";
    case Err::EmptyStore: return "EmptyStore";
    case Err::DuplicatePacketId: return "DuplicatePacketId";
    case Err::NoTrustedSnapshot: return "NoTrustedSnapshot";
    case Err::PartialRestore: return "PartialRestore";
    case Err::BadState: return "BadState";
  }
  return "Unknown";
}

// Discrete simulation clock shared by the driver and the engines.
struct SimClock {
  SimTime now = 0;
  void advance(SimTime dt) { now += dt; }
  void at_least(SimTime t) {
    if (t > now) now = t;
  }
};

// splitmix64. <random> distributions are implementation-defined, and the
// harness promises byte-identical runs per seed, so we own the generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n). Modulo bias is irrelevant at simulation scales.
  std::uint64_t uniform(std::uint64_t n) { return n ? next() % n : 0; }

  double real() { return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0); }

  bool chance(double p) {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return real() < p;
  }

  Rng fork(std::uint64_t tag) { return Rng(next() ^ (tag * 0xd1b54a32d192ed03ull)); }

 private:
  std::uint64_t state_;
};

}  // namespace gwardar
