#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "embench/harness.hpp"

int main(int argc, char** argv) {
  using namespace embench;
  CLI::App app{"embench: turn NLP datasets into embedding tasks and score providers"};
  app.require_subcommand(1);
  app.fallthrough();

  CommandContext ctx;
  std::uint64_t seed = 0;
  std::string format = "table";
  auto* seed_opt = app.add_option("--seed", seed, "override every seed")->group("Global");
  app.add_option("--jobs", ctx.jobs, "tasks evaluated in parallel")->check(CLI::PositiveNumber)->group("Global");
  app.add_option("--output-dir", ctx.output_dir, "where evaluate writes its results")->group("Global");
  app.add_option("--provider-config", ctx.provider_config, "embedding provider config (JSON)")->group("Global");
  app.add_option("--format", format, "table, jsonl or csv")
      ->check(CLI::IsMember({"table", "jsonl", "csv"}))
      ->group("Global");

  std::string a1, a2, a3, name, category;
  bool explain = false;
  int code = kExitOk;

  auto* reform = app.add_subcommand("reformulate", "raw records -> canonical task file");
  reform->add_option("mapping", a1, "mapping config")->required();
  reform->add_option("input", a2, "raw records (JSONL)")->required();
  reform->add_option("-o,--out", a3, "output file (directory for retrieval)")->required();

  auto* augment = app.add_subcommand("augment", "classification task -> training triplets");
  augment->add_option("task", a1, "classification task file")->required();
  augment->add_option("-o,--out", a3, "triplet output file")->required();
  augment->add_option("--label-specs", a2, "label specs (JSON); built-ins otherwise");
  augment->add_flag("--with-explanations", explain, "append label explanations to targets");
  augment->add_option("--task-name", name, "uid namespace; defaults to the file stem");

  auto* evaluate = app.add_subcommand("evaluate", "score a provider on every task of a manifest");
  evaluate->add_option("manifest", a1, "run manifest")->required();

  auto* trainer = app.add_subcommand("train-adapter", "fit a linear adapter on triplets");
  trainer->add_option("triplets", a1, "triplet file")->required();
  trainer->add_option("--config", a2, "training config (JSON)")->required();
  trainer->add_option("-o,--out", a3, "checkpoint path")->required();

  auto* baseline = app.add_subcommand("baseline", "random baselines for a manifest");
  baseline->add_option("manifest", a1, "run manifest")->required();

  auto* validate = app.add_subcommand("validate", "check a task or triplet file");
  validate->add_option("path", a1, "file, or directory for retrieval")->required();
  validate->add_option("--category", category, "task category or \"triplets\"")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  if (*seed_opt) ctx.seed = seed;
  static const std::map<std::string, OutputFormat> formats{
      {"table", OutputFormat::Table}, {"jsonl", OutputFormat::Jsonl}, {"csv", OutputFormat::Csv}};
  ctx.format = formats.at(format);

  if (*reform) code = cmd_reformulate(a1, a2, a3, ctx);
  else if (*augment) code = cmd_augment(a1, a2, a3, explain, name, ctx);
  else if (*evaluate) code = cmd_evaluate(a1, ctx);
  else if (*trainer) code = cmd_train_adapter(a1, a2, a3, ctx);
  else if (*baseline) code = cmd_baseline(a1, ctx);
  else if (*validate) code = cmd_validate(a1, category, ctx);
  return code;
}
