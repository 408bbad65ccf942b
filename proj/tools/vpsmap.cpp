#include <atomic>
#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "vps/cli/app.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const std::vector<std::string> args(argv + 1, argv + argc);
  return vps::run_cli(args, std::cout, std::cerr, &g_stop);
}
