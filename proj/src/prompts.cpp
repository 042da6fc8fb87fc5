#include "skevo/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "skevo/text.hpp"

#ifndef SKEVO_DEFAULT_TEMPLATE_DIR
#define SKEVO_DEFAULT_TEMPLATE_DIR "templates"
#endif

namespace skevo {

std::string default_template_dir() {
  return SKEVO_DEFAULT_TEMPLATE_DIR;
}

PromptLibrary PromptLibrary::load(const std::string& dir) {
  PromptLibrary lib;
  for (RoleTag tag : kAllRoleTags) {
    const auto path = std::filesystem::path(dir) / (to_string(tag) + ".tmpl");
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw std::runtime_error("missing prompt template: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    lib.templates_[tag] = buf.str();
  }
  return lib;
}

const std::string& PromptLibrary::raw(RoleTag role) const {
  return templates_.at(role);
}

namespace {

int slot_limit(const std::string& key, const RunConfig& config) {
  if (key == "trace" || key == "history" || key == "group") return config.trace_slot_limit;
  if (key == "body" || key == "skill_body" || key == "skill") return config.body_slot_limit;
  if (key == "evidence") return config.evidence_slot_limit;
  return config.trace_slot_limit;
}

}  // namespace

std::string PromptLibrary::render(RoleTag role, const std::map<std::string, std::string>& slots,
                                  const RunConfig& config) const {
  std::string out = templates_.at(role);
  for (const auto& [key, value] : slots) {
    const std::string needle = "{{" + key + "}}";
    const std::string replacement =
        text::truncate_bytes(value, static_cast<std::size_t>(slot_limit(key, config)));
    std::size_t pos = 0;
    while ((pos = out.find(needle, pos)) != std::string::npos) {
      out.replace(pos, needle.size(), replacement);
      pos += replacement.size();
    }
  }
  return out;
}

}  // namespace skevo
