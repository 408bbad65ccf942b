#pragma once

#include <sstream>
#include <string>
#include <vector>

namespace vps::acceptance {

// Sub-checks of one criterion; the criterion passes when all of them do.
class Outcome {
 public:
  bool check(const std::string& what, bool ok, const std::string& detail = {}) {
    pass_ = pass_ && ok;
    lines_.push_back(std::string(ok ? "ok    " : "FAIL  ") + what + (detail.empty() ? "" : ": " + detail));
    return ok;
  }
  void note(const std::string& text) { lines_.push_back("      " + text); }
  bool pass() const { return pass_; }
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  bool pass_ = true;
  std::vector<std::string> lines_;
};

inline std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

Outcome fixed_points();
Outcome robustness();
Outcome condition_trend();
Outcome map_yield_trend();
Outcome error_model();
Outcome determinism();
Outcome protocol_conformance();
Outcome geometry_invariants();

}  // namespace vps::acceptance
