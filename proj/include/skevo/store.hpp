#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skevo/config.hpp"
#include "skevo/maintenance.hpp"
#include "skevo/overlap_graph.hpp"
#include "skevo/retrieval.hpp"
#include "skevo/roles.hpp"
#include "skevo/skill.hpp"

namespace skevo {

struct StoreError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DuplicateVersion : StoreError {
  using StoreError::StoreError;
};
struct UnknownSkill : StoreError {
  using StoreError::StoreError;
};
struct IllegalState : StoreError {
  using StoreError::StoreError;
};
struct InvalidCandidate : StoreError {
  using StoreError::StoreError;
};
struct IoFailure : StoreError {
  using StoreError::StoreError;
};
struct CorruptRepository : StoreError {
  using StoreError::StoreError;
};

struct SkillVersion {
  Skill skill;
  Stage stage = Stage::trial;
  bool gate_passed = false;
  std::string gate_failure;
};

// Append-only ledger lines; ordinals are global across the credit and
// lifecycle ledgers so "gate passed before exposure" is well defined.
struct CreditLedgerLine {
  long ordinal = 0;
  std::string task_id;
  std::string skill_id;
  int skill_version = 1;
  Judgment judgment = Judgment::uncertain;
  std::string scope_digest;
};

struct LifecycleLedgerLine {
  long ordinal = 0;
  std::string kind;  // "publish" | "revise" | "transition" | "exposure"
  std::string skill_id;
  int skill_version = 1;
  bool gate_passed = false;
  std::string detail;
  std::string task_id;
};

// Versioned repository of skills, bundles, credit ledgers, role buffers and
// meta rules. Single writer; readers work from immutable view snapshots.
class Repository {
 public:
  Repository() = default;
  explicit Repository(RunConfig config) : config_(std::move(config)) {}

  RunConfig& config() { return config_; }
  const RunConfig& config() const { return config_; }

  struct PublishResult {
    std::string id;
    int version = 1;
    Stage stage = Stage::trial;
  };

  // Stores a validated candidate. Gate pass -> trial (training policy);
  // gate fail -> archived with the failure attached. Candidates carrying an
  // id that already exists raise DuplicateVersion; validation failures raise
  // InvalidCandidate.
  PublishResult publish(Skill candidate, TestBundle bundle, const GateResult& gate,
                        const std::string& task_id);

  // Gate pass: new version takes the old version's stage, the old version is
  // archived as superseded, credit counters reset, parent recorded. Gate
  // fail: the failed revision is archived and the old version is untouched.
  int revise(const std::string& skill_id, Skill new_version, TestBundle new_bundle,
             const GateResult& gate, const std::string& task_id);

  // Applies a lifecycle event through the transition table and records it.
  void apply_transition(const std::string& skill_id, int version, LifecycleEvent event,
                        const std::string& task_id, const std::string& detail);

  const std::map<std::string, std::vector<SkillVersion>>& skills() const { return skills_; }
  const SkillVersion* find_version(const std::string& id, int version) const;
  // The single non-archived version of an id, if any.
  const SkillVersion* current(const std::string& id) const;

  std::vector<SkillRetrievalView> retrieval_views() const;
  std::vector<Skill> graph_skills() const;  // non-archived, for skill-summary nodes

  // e_t(s) for the id's current version: bundle + credit events + usage.
  EvidenceState evidence_snapshot(const std::string& id) const;
  TestBundle* find_bundle(const std::string& id, int version);
  const TestBundle* find_bundle(const std::string& id, int version) const;
  void set_bundle(const std::string& id, int version, TestBundle bundle);

  CreditTable& credit() { return credit_; }
  const CreditTable& credit() const { return credit_; }

  // Ledger append + live table + per-skill evidence update in one step.
  void append_credit_events(const std::vector<CreditEvent>& events);
  // Usage counters; also writes an exposure line so release gating is
  // auditable from the ledger alone.
  void note_exposure(const std::string& id, int version, long retrieved_turns, bool executed,
                     const std::string& task_id);

  CreditTable rebuild_credit_from_ledger() const;

  MetaRuleSet& meta(Role role);
  const MetaRuleSet& meta(Role role) const;
  std::vector<ReplayRow>& buffer(Role role) { return buffers_[role]; }
  const std::map<Role, std::vector<ReplayRow>>& buffers() const { return buffers_; }

  OverlapGraph& graph() { return graph_; }
  const OverlapGraph& graph() const { return graph_; }

  const std::vector<CreditLedgerLine>& credit_ledger() const { return credit_ledger_; }
  const std::vector<LifecycleLedgerLine>& lifecycle_ledger() const { return lifecycle_ledger_; }

  bool gate_passed(const std::string& id, int version) const;

  // Canonical serialization: path -> file content, stable order, sorted
  // maps, fixed-precision floats. persist() writes exactly these files plus
  // per-file checksums in the manifest.
  std::map<std::string, std::string> serialize_files() const;
  std::uint64_t checksum() const;

  void persist(const std::filesystem::path& dir) const;
  static Repository restore(const std::filesystem::path& dir);

  // Structural invariant check; returns violations (empty means healthy).
  std::vector<std::string> check_invariants() const;

  bool operator==(const Repository& other) const;

 private:
  long next_ordinal() { return ordinal_counter_++; }
  std::string allocate_id();

  RunConfig config_;
  std::map<std::string, std::vector<SkillVersion>> skills_;
  std::map<std::pair<std::string, int>, TestBundle> bundles_;
  std::map<std::string, std::vector<CreditEvent>> credits_;  // current version's events
  std::map<std::string, UsageStats> usage_;                  // current version's counters
  std::map<Role, MetaRuleSet> meta_;
  std::map<Role, std::vector<ReplayRow>> buffers_;
  OverlapGraph graph_;
  CreditTable credit_;
  std::vector<CreditLedgerLine> credit_ledger_;
  std::vector<LifecycleLedgerLine> lifecycle_ledger_;
  long ordinal_counter_ = 0;
  long next_id_ = 1;
};

// Config file round-trip used by persist/restore and the CLI.
std::string config_to_json_text(const RunConfig& config);
RunConfig config_from_json_text(const std::string& json_text);

}  // namespace skevo
