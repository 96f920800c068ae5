#include "mshoot/errors.hpp"

#include <sstream>

namespace mshoot {

namespace {

std::string blowup_message(double time, int interval) {
  std::ostringstream os;
  os.precision(17);
  os << "integration blew up at t=" << time;
  if (interval >= 0)
    os << " on interval " << interval;
  return os.str();
}

} // namespace

BlowUp::BlowUp(double time, int interval)
    : Error("BlowUp", blowup_message(time, interval)), time_(time),
      interval_(interval) {}

SingularKkt::SingularKkt(double smallest_pivot)
    : Error("SingularKkt",
            "KKT system is rank deficient (smallest pivot " +
                std::to_string(smallest_pivot) +
                "); degenerate shooting configuration"),
      pivot_(smallest_pivot) {}

ParseError::ParseError(int line, const std::string &message)
    : Error("ParseError", "line " + std::to_string(line) + ": " + message),
      line_(line) {}

UninitializableState::UninitializableState(int component)
    : Error("UninitializableState",
            "state component x" + std::to_string(component + 1) +
                " is not measured at any node"),
      component_(component) {}

StudyDegenerate::StudyDegenerate(int converged_runs)
    : Error("StudyDegenerate", "only " + std::to_string(converged_runs) +
                                   " run(s) converged; need at least 2") {}

GradMismatch::GradMismatch(double max_rel_error, const std::string &where)
    : Error("GradMismatch", "relative gradient error " +
                                std::to_string(max_rel_error) + " at " + where),
      err_(max_rel_error) {}

} // namespace mshoot
