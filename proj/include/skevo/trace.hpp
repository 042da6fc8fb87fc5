#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace skevo {

struct TraceStep {
  std::string action;
  std::string observation;
  bool error = false;
  // FNV digest of the cumulative serialized state after appending this
  // step; x_{i+1} = x_i + (a_i, o_i) is checked against these.
  std::uint64_t state_digest = 0;
};

// Full task record: initial task plus ordered action/observation pairs and
// the per-turn retrieval exposure.
struct Trace {
  std::string task_id;

  struct RetrievalRecord {
    int turn = 0;
    std::string query_render;           // canonical rendering of the query
    std::vector<std::string> exposed;   // "id@vN", in exposure order
  };

  std::vector<TraceStep> steps;
  std::vector<RetrievalRecord> retrieval;
  long input_tokens = 0;
  long output_tokens = 0;
};

// Scalar utility with the deskworld diagnostics behind it.
struct Utility {
  double score = 0.0;
  int matched_calls = 0;
  int expected_calls = 0;
  int emitted_calls = 0;
  double precision = 0.0;
  double recall = 0.0;
};

// Per-turn slice of the task handed to retrieval.
struct TaskContext {
  std::string task_id;
  std::string instruction;
  std::vector<std::string> tool_names;
  std::string turn_request;
};

std::string render_pair(const TraceStep& step, int index);
// Serialized state after the first `upto_steps` steps (the task header plus
// that many appended pairs).
std::string render_state(const Trace& trace, std::size_t upto_steps);
std::string render_trace(const Trace& trace);

// All "id@vN" refs exposed anywhere in the trace, deduplicated, first
// exposure order preserved.
std::vector<std::string> exposed_refs(const Trace& trace);

}  // namespace skevo
