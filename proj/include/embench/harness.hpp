#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "embench/embedding.hpp"
#include "embench/metrics.hpp"
#include "embench/reformulator.hpp"
#include "embench/task_model.hpp"

namespace embench {

// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitPartial = 2,
  kExitFatal = 3,
};

struct TaskEntry {
  std::string task_name;
  TaskCategory category = TaskCategory::Classification;
  // Single task file; for retrieval, a directory holding the three files
  // unless `retrieval` is set explicitly.
  std::filesystem::path path;
  std::optional<RetrievalPaths> retrieval;
  std::string metric_name;
  LabelRender label_render = LabelRender::Plain;
  std::filesystem::path label_specs;  // optional; built-ins otherwise
  std::size_t k = 10;
  bool symmetric = false;

  RetrievalPaths retrieval_paths() const {
    return retrieval ? *retrieval : RetrievalPaths::in_directory(path);
  }
};

struct RunManifest {
  std::vector<TaskEntry> tasks;
  ProviderConfig provider;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;

  // Paths inside the manifest are relative to its directory. Throws
  // ConfigError for unknown categories, duplicate names, missing files or
  // an empty task list.
  static RunManifest load(const std::filesystem::path& path);
};

// --- reports ------------------------------------------------------------------

Json report_to_json(const EvalReport& r);
// One JSON object per line, in the given order.
std::string format_jsonl(const std::vector<EvalReport>& reports);
// Aligned "Task | Metric | Random | Score" table, values in percent.
std::string format_table(const std::vector<EvalReport>& reports);
std::string format_csv(const std::vector<EvalReport>& reports);
// Percent with three significant digits ("33.3", "75", "0.25").
std::string format_percent(double fraction);

// Runs every task of the manifest through `provider`. Tasks may run on up
// to `jobs` threads; the result order always follows the manifest. A task
// that throws yields a failed report and does not stop the others.
std::vector<EvalReport> evaluate_manifest(const RunManifest& manifest, const EmbeddingProvider& provider,
                                          std::size_t jobs = 1);

// Analytic random baseline per task, computed from the task files.
EvalReport baseline_for(const TaskEntry& task);

// --- commands -----------------------------------------------------------------

enum class OutputFormat { Table, Jsonl, Csv };

struct CommandContext {
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::filesystem::path output_dir;
  std::filesystem::path provider_config;
  OutputFormat format = OutputFormat::Table;
  std::ostream* out = nullptr;  // defaults to std::cout
  std::ostream* err = nullptr;  // defaults to std::cerr
};

// Each returns a process exit code and never throws.
int cmd_reformulate(const std::filesystem::path& mapping_config, const std::filesystem::path& raw_records,
                    const std::filesystem::path& out_path, const CommandContext& ctx);
int cmd_augment(const std::filesystem::path& task_path, const std::filesystem::path& label_specs,
                const std::filesystem::path& out_path, bool with_explanations, const std::string& task_name,
                const CommandContext& ctx);
int cmd_evaluate(const std::filesystem::path& manifest_path, const CommandContext& ctx);
int cmd_train_adapter(const std::filesystem::path& triplets_path, const std::filesystem::path& train_config,
                      const std::filesystem::path& checkpoint_out, const CommandContext& ctx);
int cmd_baseline(const std::filesystem::path& manifest_path, const CommandContext& ctx);
int cmd_validate(const std::filesystem::path& path, const std::string& category, const CommandContext& ctx);

}  // namespace embench
