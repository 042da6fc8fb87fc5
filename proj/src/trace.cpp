#include "skevo/trace.hpp"

#include <set>

#include "skevo/text.hpp"

namespace skevo {

std::string render_pair(const TraceStep& step, int index) {
  std::string out;
  out += "step " + std::to_string(index + 1) + " action: " + step.action + "\n";
  out += "step " + std::to_string(index + 1) + " observation: " + step.observation + "\n";
  return out;
}

std::string render_state(const Trace& trace, std::size_t upto_steps) {
  std::string out = "[task " + trace.task_id + "]\n";
  for (std::size_t i = 0; i < upto_steps && i < trace.steps.size(); ++i) {
    out += render_pair(trace.steps[i], static_cast<int>(i));
  }
  return out;
}

std::string render_trace(const Trace& trace) {
  return render_state(trace, trace.steps.size());
}

std::vector<std::string> exposed_refs(const Trace& trace) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& record : trace.retrieval) {
    for (const auto& ref : record.exposed) {
      if (seen.insert(ref).second) out.push_back(ref);
    }
  }
  return out;
}

}  // namespace skevo
