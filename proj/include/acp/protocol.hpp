#pragma once

// Client side of the external fitness evaluator protocol.
//
// Newline-delimited JSON objects over the child's stdin/stdout:
//   -> {"cmd":"hello","version":1}
//   <- {"ok":true,"parallelism":k}
//   -> {"cmd":"eval","id":..,"arch":..,"channels":[..],"epochs":..,"seed":..}
//   <- {"id":..,"fitness":..}   or   {"id":..,"error":".."}
//   -> {"cmd":"shutdown"}
// A child may have up to k evaluations in flight and may answer them in any
// order; responses are matched by id.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acp/error.hpp"

namespace acp {

inline constexpr int kProtocolVersion = 1;

struct EvalRequest {
  std::int64_t id = 0;
  std::vector<int> channels;
  std::string arch;
  int epochs = 1;
  std::uint64_t seed = 0;
};

struct EvalResponse {
  std::int64_t id = 0;
  std::optional<double> fitness;
  std::string error;                             // empty on success
  ErrorKind error_kind = ErrorKind::EvaluatorFailed;  // meaningful only on error

  bool ok() const noexcept { return fitness.has_value(); }
};

std::string encode_hello();
std::string encode_request(const EvalRequest& r);
std::string encode_shutdown();

struct Handshake {
  int parallelism = 1;
};

/// Throws Protocol on anything but {"ok":true,"parallelism":k>=1}.
Handshake decode_handshake(std::string_view line);

/// Throws Protocol when the line is not an object carrying an integer id.
/// A fitness that is missing, non-finite or outside [0,1] yields an error
/// response of kind Protocol; an "error" member yields EvaluatorFailed.
EvalResponse decode_response(std::string_view line);

struct ExternalConfig {
  std::string command;  // run through /bin/sh -c
  std::chrono::milliseconds timeout{30000};
  int max_parallelism = 1;  // number of child processes
};

/// Owns up to max_parallelism evaluator children. Children are started on
/// first use and restarted on the next batch after they die or hang.
class ExternalEvaluatorClient {
 public:
  explicit ExternalEvaluatorClient(ExternalConfig config);
  ~ExternalEvaluatorClient();
  ExternalEvaluatorClient(const ExternalEvaluatorClient&) = delete;
  ExternalEvaluatorClient& operator=(const ExternalEvaluatorClient&) = delete;

  /// One response per request, in request order. Per-request failures
  /// (timeout, crash, error replies, malformed fitness) are reported in the
  /// response; a child that cannot complete the handshake throws.
  std::vector<EvalResponse> evaluate(std::span<const EvalRequest> requests);

  /// Sends shutdown to every live child and reaps it.
  void shutdown();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Spawns children, evaluates, shuts them down.
std::vector<EvalResponse> external_evaluate(std::span<const EvalRequest> requests, const ExternalConfig& config);

}  // namespace acp
