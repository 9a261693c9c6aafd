#include "acp/protocol.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <deque>
#include <map>
#include <set>
#include <thread>

#include <json.hpp>

namespace acp {

using Clock = std::chrono::steady_clock;
using nlohmann::ordered_json;

std::string encode_hello() {
  ordered_json j;
  j["cmd"] = "hello";
  j["version"] = kProtocolVersion;
  return j.dump();
}

std::string encode_request(const EvalRequest& r) {
  ordered_json j;
  j["cmd"] = "eval";
  j["id"] = r.id;
  j["arch"] = r.arch;
  j["channels"] = r.channels;
  j["epochs"] = r.epochs;
  j["seed"] = r.seed;
  return j.dump();
}

std::string encode_shutdown() { return R"({"cmd":"shutdown"})"; }

namespace {

nlohmann::json parse_object(std::string_view line) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorKind::Protocol, "evaluator sent a malformed line: " + std::string(line.substr(0, 200)));
  }
  return j;
}

}  // namespace

Handshake decode_handshake(std::string_view line) {
  const nlohmann::json j = parse_object(line);
  const auto ok = j.find("ok");
  if (ok == j.end() || !ok->is_boolean() || !ok->get<bool>()) {
    throw Error(ErrorKind::Protocol, "evaluator refused the handshake: " + std::string(line.substr(0, 200)));
  }
  Handshake h;
  if (const auto p = j.find("parallelism"); p != j.end()) {
    if (!p->is_number_integer() || p->get<std::int64_t>() < 1) {
      throw Error(ErrorKind::Protocol, "evaluator advertised an invalid parallelism");
    }
    h.parallelism = static_cast<int>(std::min<std::int64_t>(p->get<std::int64_t>(), 1024));
  }
  return h;
}

EvalResponse decode_response(std::string_view line) {
  const nlohmann::json j = parse_object(line);
  const auto id = j.find("id");
  if (id == j.end() || !id->is_number_integer()) {
    throw Error(ErrorKind::Protocol, "evaluator response without an integer id: " + std::string(line.substr(0, 200)));
  }
  EvalResponse r;
  r.id = id->get<std::int64_t>();
  if (const auto err = j.find("error"); err != j.end()) {
    r.error = err->is_string() ? err->get<std::string>() : err->dump();
    r.error_kind = ErrorKind::EvaluatorFailed;
    return r;
  }
  const auto fit = j.find("fitness");
  if (fit == j.end() || !fit->is_number()) {
    r.error = "response carries neither fitness nor error";
    r.error_kind = ErrorKind::Protocol;
    return r;
  }
  const double f = fit->get<double>();
  if (!std::isfinite(f) || f < 0.0 || f > 1.0) {
    r.error = "fitness " + fit->dump() + " outside [0,1]";
    r.error_kind = ErrorKind::Protocol;
    return r;
  }
  r.fitness = f;
  return r;
}

namespace {

struct InFlight {
  std::size_t index = 0;
  Clock::time_point deadline;
};

struct Child {
  pid_t pid = -1;
  int fd = -1;
  int capacity = 1;
  std::string buffer;
  std::map<std::int64_t, InFlight> in_flight;

  bool alive() const noexcept { return fd >= 0; }
};

Child spawn(const std::string& command) {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw Error(ErrorKind::EvaluatorCrashed, "socketpair failed: " + std::string(std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw Error(ErrorKind::EvaluatorCrashed, "fork failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(sv[1]);
  Child c;
  c.pid = pid;
  c.fd = sv[0];
  return c;
}

void kill_child(Child& c) {
  if (c.pid > 0) {
    ::kill(-c.pid, SIGKILL);
    ::kill(c.pid, SIGKILL);
  }
  if (c.fd >= 0) ::close(c.fd);
  if (c.pid > 0) {
    int status = 0;
    while (::waitpid(c.pid, &status, 0) < 0 && errno == EINTR) {
    }
  }
  c = Child{};
}

void stop_child(Child& c) {
  if (!c.alive()) return;
  const std::string line = encode_shutdown() + "\n";
  ::send(c.fd, line.data(), line.size(), MSG_NOSIGNAL);
  ::shutdown(c.fd, SHUT_WR);
  const auto deadline = Clock::now() + std::chrono::milliseconds(1000);
  int status = 0;
  while (Clock::now() < deadline) {
    const pid_t r = ::waitpid(c.pid, &status, WNOHANG);
    if (r == c.pid || (r < 0 && errno != EINTR)) {
      // Exited; take down any stragglers left in its process group.
      ::kill(-c.pid, SIGKILL);
      ::close(c.fd);
      c = Child{};
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  kill_child(c);
}

bool send_line(Child& c, const std::string& text) {
  const std::string line = text + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = ::send(c.fd, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

// Appends available bytes to the buffer. False on EOF or error.
bool fill(Child& c) {
  char chunk[4096];
  for (;;) {
    const ssize_t n = ::recv(c.fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    c.buffer.append(chunk, static_cast<std::size_t>(n));
    return true;
  }
}

std::optional<std::string> take_line(Child& c) {
  const auto nl = c.buffer.find('\n');
  if (nl == std::string::npos) return std::nullopt;
  std::string line = c.buffer.substr(0, nl);
  c.buffer.erase(0, nl + 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

int millis_until(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return static_cast<int>(std::clamp<long long>(left, 0, 60'000));
}

}  // namespace

struct ExternalEvaluatorClient::Impl {
  ExternalConfig config;
  std::vector<Child> children;

  void start(Child& c) {
    c = spawn(config.command);
    const auto deadline = Clock::now() + config.timeout;
    if (!send_line(c, encode_hello())) {
      kill_child(c);
      throw Error(ErrorKind::EvaluatorCrashed, "evaluator '" + config.command + "' exited before the handshake");
    }
    for (;;) {
      if (auto line = take_line(c)) {
        if (line->empty()) continue;
        try {
          c.capacity = decode_handshake(*line).parallelism;
        } catch (...) {
          kill_child(c);
          throw;
        }
        return;
      }
      pollfd p{c.fd, POLLIN, 0};
      const int ready = ::poll(&p, 1, millis_until(deadline));
      if (ready < 0 && errno == EINTR) continue;
      if (ready == 0 && Clock::now() >= deadline) {
        kill_child(c);
        throw Error(ErrorKind::EvalTimeout, "evaluator '" + config.command + "' did not answer the handshake within " +
                                                std::to_string(config.timeout.count()) + " ms");
      }
      if (ready > 0 && !fill(c)) {
        kill_child(c);
        throw Error(ErrorKind::EvaluatorCrashed, "evaluator '" + config.command + "' exited during the handshake");
      }
    }
  }

  std::vector<EvalResponse> run(std::span<const EvalRequest> requests) {
    std::vector<EvalResponse> out(requests.size());
    if (requests.empty()) return out;

    std::set<std::int64_t> ids;
    for (const EvalRequest& r : requests) {
      if (!ids.insert(r.id).second) {
        throw Error(ErrorKind::Protocol, "duplicate request id " + std::to_string(r.id));
      }
    }

    children.resize(static_cast<std::size_t>(std::max(1, config.max_parallelism)));
    const std::size_t wanted = std::min(children.size(), requests.size());
    for (std::size_t i = 0; i < wanted; ++i) {
      if (!children[i].alive()) start(children[i]);
    }

    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < requests.size(); ++i) queue.push_back(i);
    std::size_t remaining = requests.size();
    ErrorKind last_death = ErrorKind::EvaluatorCrashed;

    const auto fail = [&](std::size_t index, ErrorKind kind, const std::string& why) {
      out[index].id = requests[index].id;
      out[index].fitness.reset();
      out[index].error = why;
      out[index].error_kind = kind;
      --remaining;
    };
    const auto bury = [&](Child& c, ErrorKind kind, const std::string& why) {
      for (const auto& [id, flight] : c.in_flight) fail(flight.index, kind, why);
      kill_child(c);
      last_death = kind;
    };

    while (remaining > 0) {
      for (Child& c : children) {
        while (c.alive() && static_cast<int>(c.in_flight.size()) < c.capacity && !queue.empty()) {
          const std::size_t index = queue.front();
          queue.pop_front();
          c.in_flight[requests[index].id] = {index, Clock::now() + config.timeout};
          if (!send_line(c, encode_request(requests[index]))) {
            bury(c, ErrorKind::EvaluatorCrashed, "evaluator closed its input");
          }
        }
      }

      std::vector<pollfd> fds;
      std::vector<Child*> owners;
      Clock::time_point earliest = Clock::time_point::max();
      for (Child& c : children) {
        if (!c.alive() || c.in_flight.empty()) continue;
        fds.push_back({c.fd, POLLIN, 0});
        owners.push_back(&c);
        for (const auto& [id, flight] : c.in_flight) earliest = std::min(earliest, flight.deadline);
      }
      if (fds.empty()) {
        // Nothing in flight and no live child to take the rest.
        while (!queue.empty()) {
          fail(queue.front(), last_death, "no live evaluator process left");
          queue.pop_front();
        }
        break;
      }

      const int ready = ::poll(fds.data(), fds.size(), millis_until(earliest));
      if (ready < 0 && errno != EINTR) {
        throw Error(ErrorKind::EvaluatorCrashed, "poll failed: " + std::string(std::strerror(errno)));
      }
      for (std::size_t k = 0; ready > 0 && k < fds.size(); ++k) {
        if (fds[k].revents == 0) continue;
        Child& c = *owners[k];
        const bool open = fill(c);
        while (c.alive()) {
          auto line = take_line(c);
          if (!line) break;
          if (line->empty()) continue;
          EvalResponse response;
          try {
            response = decode_response(*line);
          } catch (const Error& e) {
            bury(c, ErrorKind::Protocol, e.what());
            break;
          }
          const auto it = c.in_flight.find(response.id);
          if (it == c.in_flight.end()) {
            bury(c, ErrorKind::Protocol, "response for unknown id " + std::to_string(response.id));
            break;
          }
          const std::size_t index = it->second.index;
          c.in_flight.erase(it);
          out[index] = std::move(response);
          --remaining;
        }
        if (!open && c.alive()) bury(c, ErrorKind::EvaluatorCrashed, "evaluator process exited");
      }

      const auto now = Clock::now();
      for (Child& c : children) {
        const bool expired = std::any_of(c.in_flight.begin(), c.in_flight.end(),
                                         [&](const auto& entry) { return entry.second.deadline <= now; });
        if (c.alive() && expired) {
          bury(c, ErrorKind::EvalTimeout, "no response within " + std::to_string(config.timeout.count()) + " ms");
        }
      }
    }
    return out;
  }
};

ExternalEvaluatorClient::ExternalEvaluatorClient(ExternalConfig config) : impl_(std::make_unique<Impl>()) {
  if (config.command.empty()) throw Error(ErrorKind::Config, "external evaluator needs a command");
  if (config.timeout.count() <= 0) throw Error(ErrorKind::Config, "external evaluator timeout must be positive");
  impl_->config = std::move(config);
}

ExternalEvaluatorClient::~ExternalEvaluatorClient() { shutdown(); }

std::vector<EvalResponse> ExternalEvaluatorClient::evaluate(std::span<const EvalRequest> requests) {
  return impl_->run(requests);
}

void ExternalEvaluatorClient::shutdown() {
  for (Child& c : impl_->children) stop_child(c);
}

std::vector<EvalResponse> external_evaluate(std::span<const EvalRequest> requests, const ExternalConfig& config) {
  ExternalEvaluatorClient client(config);
  auto responses = client.evaluate(requests);
  client.shutdown();
  return responses;
}

}  // namespace acp
