#include <chrono>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <set>
#include <string>

#include "acceptance.hpp"

using namespace vps::acceptance;

namespace {

struct Criterion {
  int number;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion criteria[] = {
      {1, "zero-noise fixed points", 60, fixed_points},
      {2, "robustness to outliers", 300, robustness},
      {3, "localisation rate across map conditions", 900, condition_trend},
      {4, "map yield with repeated experiences", 600, map_yield_trend},
      {5, "end-to-end error model", 600, error_model},
      {6, "determinism and parallel safety", 600, determinism},
      {7, "protocol conformance", 60, protocol_conformance},
      {8, "geometry invariants", 60, geometry_invariants},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome.check("ran to completion", false, e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    outcome.check("runtime", seconds < c.budget_s, fmt(seconds, 3) + " s (budget " + fmt(c.budget_s) + " s)");
    std::cout << (outcome.pass() ? "PASS" : "FAIL") << " [" << c.number << "] " << c.name << '\n';
    for (const auto& line : outcome.lines()) std::cout << "       " << line << '\n';
    std::cout.flush();
    failures += outcome.pass() ? 0 : 1;
  }
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
