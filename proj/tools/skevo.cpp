#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "skevo/harness.hpp"
#include "skevo/text.hpp"

namespace fs = std::filesystem;
using namespace skevo;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

RunConfig load_config(const std::string& config_file, unsigned long long seed,
                      const std::string& template_dir) {
  RunConfig config;
  if (!config_file.empty()) config = config_from_json_text(read_file(config_file));
  if (seed != 0) config.seed = seed;
  if (!template_dir.empty()) config.template_dir = template_dir;
  if (config.template_dir.empty()) config.template_dir = default_template_dir();
  return config;
}

std::unique_ptr<ChatBackend> make_backend(const std::string& kind, const TaskPack& pack) {
  if (kind == "remote") {
    auto remote = RemoteConfig::from_env();
    if (remote.endpoint_url.empty()) {
      throw std::runtime_error("remote backend requires SKEVO_ENDPOINT");
    }
    return std::make_unique<RemoteBackend>(remote);
  }
  return make_scripted_backend(pack);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skill-evolving runtime"};
  app.require_subcommand(1);

  std::string tasks_file, repo_dir, config_file, template_dir, backend_kind = "scripted";
  std::string baseline_file, output_file, init_meta_file, skill_id;
  unsigned long long seed = 0;
  bool static_mode = false, freeze_meta = false, parallel = false, no_skill = false;
  int families = 20;

  auto* train = app.add_subcommand("train", "online skill evolving over a task pack");
  train->add_option("tasks", tasks_file, "deskworld task pack (json)")->required();
  train->add_option("--repo", repo_dir, "repository directory to write")->required();
  train->add_flag("--static", static_mode, "disable online meta updates");
  train->add_option("--init-meta", init_meta_file, "seed role rules from an exported file");
  train->add_flag("--freeze-meta", freeze_meta, "keep injected rules fixed");
  train->add_option("--seed", seed, "run seed");
  train->add_flag("--parallel", parallel, "run each macro window's tasks concurrently");
  train->add_option("--config", config_file, "run config (json)");
  train->add_option("--templates", template_dir, "prompt template directory");
  train->add_option("--backend", backend_kind, "scripted|remote");

  auto* eval = app.add_subcommand("eval", "frozen evaluation over held-out tasks");
  eval->add_option("tasks", tasks_file, "deskworld task pack (json)")->required();
  eval->add_option("--repo", repo_dir, "repository directory (omit for a no-skill run)");
  eval->add_option("--baseline", baseline_file, "no-skill baseline report for the delta");
  eval->add_option("-o,--output", output_file, "report output path");
  eval->add_flag("--no-skill", no_skill, "evaluate with an empty store");
  eval->add_option("--config", config_file, "run config (json)");
  eval->add_option("--templates", template_dir, "prompt template directory");
  eval->add_option("--backend", backend_kind, "scripted|remote");

  auto* inspect = app.add_subcommand("inspect", "summarize a repository");
  inspect->add_option("--repo", repo_dir, "repository directory")->required();
  inspect->add_option("--skill", skill_id, "print one skill in full");

  auto* meta_export = app.add_subcommand("meta-export", "dump role rules for reuse");
  meta_export->add_option("--repo", repo_dir, "repository directory")->required();
  meta_export->add_option("-o,--output", output_file, "rules file to write")->required();

  auto* deskworld = app.add_subcommand("deskworld", "benchmark utilities");
  auto* generate = deskworld->add_subcommand("generate", "generate a task pack");
  generate->add_option("--families", families, "number of task families");
  generate->add_option("--seed", seed, "generator seed");
  generate->add_option("-o,--output", output_file, "pack directory or file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto pack = load_task_pack(tasks_file);
      auto config = load_config(config_file, seed, template_dir);
      auto prompts = PromptLibrary::load(config.template_dir);
      auto backend = make_backend(backend_kind, pack);

      TrainOptions options;
      options.static_mode = static_mode;
      options.freeze_meta = freeze_meta;
      options.parallel = parallel;
      if (!init_meta_file.empty()) {
        options.init_meta = parse_rules_text(read_file(init_meta_file));
        if (!freeze_meta && !static_mode) {
          throw std::runtime_error("--init-meta requires --freeze-meta or --static");
        }
      }
      auto result = run_training(pack.train, config, *backend, prompts, options);
      result.repo.persist(repo_dir);

      double total = 0.0;
      for (const auto& u : result.utilities) total += u.score;
      std::cout << "trained " << result.traces.size() << " tasks, mean train utility "
                << text::format_fixed(
                       result.utilities.empty() ? 0.0 : total / result.utilities.size(), 4)
                << "\n";
      std::cout << "macro passes " << result.macro_passes << ", meta update attempts "
                << result.meta_update_attempts << "\n";
      std::cout << "repository checksum " << std::hex << result.repo.checksum() << std::dec
                << "\n";
      for (const auto& failure : result.task_failures) {
        std::cout << "task failure: " << failure << "\n";
      }
      return 0;
    }

    if (*eval) {
      auto pack = load_task_pack(tasks_file);
      auto config = load_config(config_file, seed, template_dir);
      Repository repo(config);
      if (!no_skill && !repo_dir.empty()) {
        repo = Repository::restore(repo_dir);
        if (!template_dir.empty()) repo.config().template_dir = template_dir;
        if (repo.config().template_dir.empty()) {
          repo.config().template_dir = default_template_dir();
        }
      }
      auto prompts = PromptLibrary::load(repo.config().template_dir);
      auto backend = make_backend(backend_kind, pack);

      std::optional<double> baseline;
      if (!baseline_file.empty()) {
        baseline = report_mean_from_json_text(read_file(baseline_file));
      }
      auto report = evaluate_frozen(pack.heldout, repo, *backend, prompts, baseline);
      const auto rendered = report_to_json_text(report);
      if (!output_file.empty()) {
        write_file(output_file, rendered);
      }
      std::cout << rendered;
      return 0;
    }

    if (*inspect) {
      auto repo = Repository::restore(repo_dir);
      if (!skill_id.empty()) {
        auto it = repo.skills().find(skill_id);
        if (it == repo.skills().end()) {
          std::cerr << "unknown skill " << skill_id << "\n";
          return 1;
        }
        for (const auto& record : it->second) {
          std::cout << record.skill.version_ref() << " [" << to_string(record.stage) << "] "
                    << record.skill.name << "\n";
          std::cout << "  semantics: " << to_string(record.skill.semantics)
                    << ", source: " << to_string(record.skill.source_role) << "\n";
          if (record.skill.parent_id) {
            std::cout << "  parent: " << *record.skill.parent_id << "\n";
          }
          std::cout << "  body: " << record.skill.body << "\n";
        }
        return 0;
      }
      std::cout << "skills:\n";
      for (const auto& [id, versions] : repo.skills()) {
        const auto* cur = repo.current(id);
        const auto& shown = cur ? *cur : versions.back();
        std::cout << "  " << shown.skill.version_ref() << " [" << to_string(shown.stage)
                  << "] " << shown.skill.name << " (" << versions.size() << " versions)\n";
      }
      for (Role role : kAllRoles) {
        std::cout << to_string(role) << " rules:\n";
        for (const auto& rule : repo.meta(role).rules) {
          std::cout << "  - " << rule << "\n";
        }
      }
      return 0;
    }

    if (*meta_export) {
      auto repo = Repository::restore(repo_dir);
      write_file(output_file, export_meta_rules(repo));
      std::cout << "wrote " << output_file << "\n";
      return 0;
    }

    if (*generate) {
      auto pack = generate_task_pack(families, seed);
      fs::path out = output_file;
      if (out.extension() != ".json") out /= "tasks.json";
      save_task_pack(pack, out);
      std::cout << "wrote " << out.string() << " (" << pack.train.size() << " train, "
                << pack.heldout.size() << " held-out tasks)\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
