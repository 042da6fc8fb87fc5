#pragma once

#include <map>
#include <string>

#include "skevo/config.hpp"
#include "skevo/oracle.hpp"

namespace skevo {

// Loads the seven role templates from a directory of <role_tag>.tmpl files
// and renders them with {{slot}} substitution. Slot values are truncated to
// the config-driven limits before substitution (trace/evidence/body slots
// each have their own limit).
class PromptLibrary {
 public:
  static PromptLibrary load(const std::string& dir);

  // Renders with config defaults when no explicit limits are needed.
  std::string render(RoleTag role, const std::map<std::string, std::string>& slots,
                     const RunConfig& config) const;

  const std::string& raw(RoleTag role) const;

 private:
  std::map<RoleTag, std::string> templates_;
};

// Compile-time default template directory; the CLI exposes --templates to
// override it.
std::string default_template_dir();

}  // namespace skevo
