#pragma once

#include <string>

namespace skevo {

// Run-wide knobs. Everything here is overridable from the config file; the
// defaults are the values the rest of the runtime assumes.
struct RunConfig {
  // Retrieval
  int retrieval_k = 4;  // K: skills exposed per turn
  double lambda_sparse = 0.30;
  double lambda_emb = 0.40;
  double lambda_tool = 0.20;
  double lambda_trust = 0.10;

  // Maintenance cadence (in tasks)
  int k_micro = 1;
  int k_macro = 5;

  // Role sampling / budgets
  int extractor_samples = 3;
  int retry_budget = 2;

  // Filter gate thresholds
  long tau_filter = 2;
  long tau_protect = 1;

  // Overlap graph
  double alpha = 0.45;
  double beta = 0.35;
  double gamma = 0.20;
  double eta = 0.18;
  int clique_min = 3;
  int clique_max = 6;
  int max_candidate_groups = 4;   // top-k cliques per macro step
  int segment_window_tasks = 25;  // sliding window over segment sources

  // Meta evolving
  int buffer_sample_n = 20;
  int maturity_min_exposures = 3;

  // Bundles
  int bundle_case_cap = 12;

  // Execution
  int max_rounds = 20;
  unsigned long long seed = 0;

  // Prompt slot truncation limits (characters)
  int trace_slot_limit = 8000;
  int body_slot_limit = 2000;
  int evidence_slot_limit = 4000;
  int query_digest_limit = 512;
  int fragment_limit = 600;

  std::string template_dir;  // empty -> compiled-in default location
};

}  // namespace skevo
