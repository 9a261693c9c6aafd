// Scriptable evaluator child for exercising the wire protocol.
//
//   acp_stub_evaluator [--mode M] [--parallelism K] [--crash-after N]
//                      [--delay-ms D] [--fitness F] [--log FILE]
//
// Fitness is F when given, otherwise min(1, channels[0] / 1000). Modes:
//   echo       answer each request as it arrives
//   reverse    collect K requests, answer them last-first
//   silent     handshake, then never answer
//   mute       never answer the handshake
//   crash      exit after answering --crash-after requests (default 0)
//   malformed  answer with a line that is not JSON
//   error      answer every request with an error member
//   range      answer with fitness 1.5

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

using nlohmann::json;

namespace {

struct Options {
  std::string mode = "echo";
  int parallelism = 1;
  int crash_after = 0;
  int delay_ms = 0;
  double fitness = -1.0;
  std::string log_path;
};

Options parse(int argc, char** argv) {
  Options o;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string key = argv[i];
    const std::string value = argv[i + 1];
    if (key == "--mode") o.mode = value;
    else if (key == "--parallelism") o.parallelism = std::stoi(value);
    else if (key == "--crash-after") o.crash_after = std::stoi(value);
    else if (key == "--delay-ms") o.delay_ms = std::stoi(value);
    else if (key == "--fitness") o.fitness = std::stod(value);
    else if (key == "--log") o.log_path = value;
  }
  return o;
}

double fitness_of(const json& request, const Options& o) {
  if (o.fitness >= 0.0) return o.fitness;
  return std::min(1.0, request.at("channels").at(0).get<double>() / 1000.0);
}

void send(const json& reply) { std::cout << reply.dump() << '\n' << std::flush; }

}  // namespace

int main(int argc, char** argv) {
  const Options o = parse(argc, argv);
  std::ofstream log;
  if (!o.log_path.empty()) log.open(o.log_path, std::ios::app);

  std::string line;
  if (!std::getline(std::cin, line)) return 0;
  if (o.mode == "mute") {
    std::this_thread::sleep_for(std::chrono::hours(1));
    return 0;
  }
  send({{"ok", true}, {"parallelism", o.parallelism}});

  int answered = 0;
  std::vector<json> pending;
  while (std::getline(std::cin, line)) {
    const json request = json::parse(line, nullptr, false);
    if (request.is_discarded()) return 3;
    if (request.value("cmd", "") == "shutdown") return 0;
    if (log.is_open()) log << line << '\n' << std::flush;
    if (o.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(o.delay_ms));

    const json id = request.at("id");
    if (o.mode == "silent") continue;
    if (o.mode == "crash" && answered >= o.crash_after) std::_Exit(9);
    if (o.mode == "malformed") {
      std::cout << "this is not json\n" << std::flush;
    } else if (o.mode == "error") {
      send({{"id", id}, {"error", "stub refused"}});
    } else if (o.mode == "range") {
      send({{"id", id}, {"fitness", 1.5}});
    } else if (o.mode == "reverse") {
      pending.push_back(request);
      if (static_cast<int>(pending.size()) < o.parallelism) continue;
      for (auto it = pending.rbegin(); it != pending.rend(); ++it) {
        send({{"id", it->at("id")}, {"fitness", fitness_of(*it, o)}});
      }
      pending.clear();
    } else {
      send({{"id", id}, {"fitness", fitness_of(request, o)}});
    }
    ++answered;
  }
  return 0;
}
