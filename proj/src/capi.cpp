#include "gwardar/gwardar.h"

#include <cstring>
#include <new>
#include <string>

#include "session.hpp"

using gwardar::Err;
using gwardar::Error;
using gwardar::session::Session;

struct gw_session {
  std::unique_ptr<Session> impl;
};

namespace {

constexpr const char* kVersion = "0.1.0";

void write_err(char* err, size_t err_len, const std::string& msg) {
  if (!err || err_len == 0) return;
  std::size_t n = std::min(err_len - 1, msg.size());
  std::memcpy(err, msg.data(), n);
  err[n] = '\0';
}

gw_status status_of(Err e) {
  switch (e) {
    case Err::InvalidArgument: return GW_ERR_INVALID_ARGUMENT;
    case Err::ParseError: return GW_ERR_PARSE;
    case Err::Io: return GW_ERR_IO;
    case Err::UnknownDevice: return GW_ERR_UNKNOWN_DEVICE;
    case Err::UnknownIngress: return GW_ERR_UNKNOWN_INGRESS;
    case Err::DisconnectedTopology: return GW_ERR_DISCONNECTED_TOPOLOGY;
    case Err::EmptyStore: return GW_ERR_EMPTY_STORE;
    case Err::DuplicatePacketId: return GW_ERR_DUPLICATE_PACKET_ID;
    case Err::NoTrustedSnapshot: return GW_ERR_NO_TRUSTED_SNAPSHOT;
    case Err::PartialRestore: return GW_ERR_PARTIAL_RESTORE;
    case Err::BadState: return GW_ERR_BAD_STATE;
    case Err::Unknown: return GW_ERR_UNKNOWN;
  }
  return GW_ERR_UNKNOWN;
}

template <typename Fn>
gw_status guarded(char* err, size_t err_len, Fn&& fn) {
  try {
    fn();
    return GW_OK;
  } catch (const Error& e) {
    write_err(err, err_len, e.what());
    return status_of(e.code());
  } catch (const std::exception& e) {
    write_err(err, err_len, e.what());
    return GW_ERR_UNKNOWN;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* gw_version(void) { return kVersion; }

const char* gw_status_name(gw_status status) {
  switch (status) {
    case GW_OK: return "ok";
    case GW_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case GW_ERR_PARSE: return "parse_error";
    case GW_ERR_IO: return "io_error";
    case GW_ERR_UNKNOWN_DEVICE: return "unknown_device";
    case GW_ERR_UNKNOWN_INGRESS: return "unknown_ingress";
    case GW_ERR_DISCONNECTED_TOPOLOGY: return "disconnected_topology";
    case GW_ERR_EMPTY_STORE: return "empty_store";
    case GW_ERR_DUPLICATE_PACKET_ID: return "duplicate_packet_id";
    case GW_ERR_NO_TRUSTED_SNAPSHOT: return "no_trusted_snapshot";
    case GW_ERR_PARTIAL_RESTORE: return "partial_restore";
    case GW_ERR_BAD_STATE: return "bad_state";
    case GW_ERR_UNKNOWN: return "unknown";
  }
  return "unknown";
}

gw_session* gw_session_create(const char* config_json, char* err, size_t err_len) {
  gw_session* s = nullptr;
  gw_status rc = guarded(err, err_len, [&] {
    auto j = nlohmann::json::parse(config_json ? config_json : "{}", nullptr, false);
    if (j.is_discarded()) gwardar::fail(Err::ParseError, "config is not valid JSON");
    auto config = gwardar::harness::SimConfig::from_json(j);
    s = new gw_session{std::make_unique<Session>(config)};
  });
  (void)rc;
  return s;
}

gw_session* gw_session_load(const char* state_path, char* err, size_t err_len) {
  gw_session* s = nullptr;
  guarded(err, err_len, [&] {
    if (!state_path) gwardar::fail(Err::InvalidArgument, "state path is null");
    s = new gw_session{Session::load(state_path)};
  });
  return s;
}

gw_status gw_session_save(gw_session* s, const char* state_path, char* err, size_t err_len) {
  if (!s || !state_path) {
    write_err(err, err_len, "null session or path");
    return GW_ERR_INVALID_ARGUMENT;
  }
  return guarded(err, err_len, [&] { s->impl->save(state_path); });
}

void gw_session_destroy(gw_session* s) { delete s; }

gw_status gw_run_experiment(gw_session* s, const char* scenario_json, const char* out_dir,
                            char* err, size_t err_len) {
  if (!s) {
    write_err(err, err_len, "null session");
    return GW_ERR_INVALID_ARGUMENT;
  }
  return guarded(err, err_len, [&] {
    std::optional<gwardar::harness::ScenarioSpec> spec;
    if (scenario_json && *scenario_json) {
      auto j = nlohmann::json::parse(scenario_json, nullptr, false);
      if (j.is_discarded()) gwardar::fail(Err::ParseError, "scenario is not valid JSON");
      spec = gwardar::harness::ScenarioSpec::from_json(j);
    }
    s->impl->run(spec, out_dir ? std::filesystem::path(out_dir) : std::filesystem::path());
  });
}

char* gw_report(gw_session* s, char* err, size_t err_len) {
  if (!s) {
    write_err(err, err_len, "null session");
    return nullptr;
  }
  char* out = nullptr;
  guarded(err, err_len, [&] { out = dup_string(s->impl->report().dump()); });
  return out;
}

char* gw_verify_replica(gw_session* s, char* err, size_t err_len) {
  if (!s) {
    write_err(err, err_len, "null session");
    return nullptr;
  }
  char* out = nullptr;
  guarded(err, err_len, [&] { out = dup_string(s->impl->verify_replica().dump()); });
  return out;
}

char* gw_restore(gw_session* s, int force, char* err, size_t err_len) {
  if (!s) {
    write_err(err, err_len, "null session");
    return nullptr;
  }
  char* out = nullptr;
  guarded(err, err_len, [&] { out = dup_string(s->impl->restore(force != 0).dump()); });
  return out;
}

char* gw_release_takeover(gw_session* s, char* err, size_t err_len) {
  if (!s) {
    write_err(err, err_len, "null session");
    return nullptr;
  }
  char* out = nullptr;
  guarded(err, err_len, [&] { out = dup_string(s->impl->release_takeover().dump()); });
  return out;
}

void gw_free(char* ptr) { std::free(ptr); }

}  // extern "C"
