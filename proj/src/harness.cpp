#include "embench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "embench/adapter.hpp"
#include "embench/error.hpp"

namespace embench {

namespace fs = std::filesystem;

namespace {

std::ostream& out_of(const CommandContext& ctx) { return ctx.out ? *ctx.out : std::cout; }
std::ostream& err_of(const CommandContext& ctx) { return ctx.err ? *ctx.err : std::cerr; }

// Maps an exception escaping a command onto an exit code and a message.
template <typename Fn>
int guarded(const CommandContext& ctx, const char* verb, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err_of(ctx) << verb << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    err_of(ctx) << verb << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err_of(ctx) << verb << ": " << e.what() << '\n';
    return kExitFatal;
  }
}

Json load_json_file(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) {
    if ((c & 0xc0) != 0x80) ++w;
  }
  return w;
}

std::string random_cell(const EvalReport& r) {
  // Retrieval's expected nDCG is close to zero; the stored number is k/n.
  if (r.category == TaskCategory::Retrieval) return "≈0";
  return format_percent(r.random_baseline);
}

std::vector<LabelSpec> specs_for(const TaskEntry& task) {
  if (!task.label_specs.empty()) return read_label_specs(task.label_specs);
  return builtin_label_specs();
}

void print_violations(std::ostream& err, const ValidationResult& v) {
  for (const auto& x : v.violations) {
    err << x.file;
    if (x.line) err << ':' << x.line;
    err << ": " << x.message << '\n';
  }
}

EvalReport evaluate_task(const TaskEntry& task, const EmbeddingProvider& provider, std::size_t batch_size) {
  EvalOptions opts;
  opts.task_name = task.task_name;
  opts.batch_size = batch_size;
  opts.label_render = task.label_render;
  opts.k = task.k;
  opts.symmetric_bitext = task.symmetric;
  EvalReport r;
  switch (task.category) {
    case TaskCategory::Classification:
      if (task.label_render == LabelRender::WithExplanation) opts.label_specs = specs_for(task);
      r = eval_classification(read_jsonl<ClassificationExample>(task.path), provider, opts);
      break;
    case TaskCategory::Reranking:
      r = eval_reranking(read_jsonl<RerankingExample>(task.path), provider, opts);
      break;
    case TaskCategory::Retrieval:
      r = eval_retrieval(read_retrieval_task(task.retrieval_paths()), provider, opts);
      break;
    case TaskCategory::PairwiseClassification:
      r = eval_pairwise(read_jsonl<PairExample>(task.path), provider, opts);
      break;
    case TaskCategory::BitextMining:
      r = eval_bitext(read_jsonl<BitextExample>(task.path), provider, opts);
      break;
  }
  if (!task.metric_name.empty()) r.metric_name = task.metric_name;
  return r;
}

}  // namespace

// --- manifest -----------------------------------------------------------------

RunManifest RunManifest::load(const fs::path& path) {
  const Json j = load_json_file(path, "manifest");
  const fs::path dir = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path x(p);
    return x.is_relative() ? dir / x : x;
  };
  try {
    RunManifest m;
    m.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("output_dir")) m.output_dir = resolve(j["output_dir"].get<std::string>());

    if (!j.contains("provider")) throw ConfigError("manifest has no provider");
    const Json& pj = j["provider"];
    if (pj.is_string()) {
      const fs::path pp = resolve(pj.get<std::string>());
      Json cfg = load_json_file(pp, "provider config");
      if (!cfg.contains("seed")) cfg["seed"] = m.seed;
      m.provider = ProviderConfig::from_json(cfg, pp.parent_path());
    } else {
      Json cfg = pj;
      if (!cfg.contains("seed")) cfg["seed"] = m.seed;
      m.provider = ProviderConfig::from_json(cfg, dir);
    }

    if (!j.contains("tasks") || !j["tasks"].is_array() || j["tasks"].empty()) throw ConfigError("no tasks");
    std::set<std::string> names;
    for (const auto& t : j["tasks"]) {
      TaskEntry e;
      e.task_name = t.at("task_name").get<std::string>();
      if (e.task_name.empty()) throw ConfigError("empty task_name");
      if (!names.insert(e.task_name).second) throw ConfigError("duplicate task_name \"" + e.task_name + "\"");
      e.category = parse_category(t.at("category").get<std::string>());
      e.metric_name = t.value("metric_name", "");
      e.label_render = parse_label_render(t.value("label_render", "plain"));
      e.k = t.value("k", std::size_t{10});
      e.symmetric = t.value("symmetric", false);
      if (t.contains("label_specs")) e.label_specs = resolve(t["label_specs"].get<std::string>());
      if (t.contains("paths")) {
        const auto& p = t["paths"];
        e.retrieval = RetrievalPaths{resolve(p.at("queries").get<std::string>()),
                                     resolve(p.at("corpus").get<std::string>()),
                                     resolve(p.at("qrels").get<std::string>())};
      } else {
        e.path = resolve(t.at("path").get<std::string>());
      }

      std::vector<fs::path> required;
      if (e.category == TaskCategory::Retrieval) {
        const auto rp = e.retrieval_paths();
        required = {rp.queries, rp.corpus, rp.qrels};
      } else {
        required = {e.path};
      }
      if (!e.label_specs.empty()) required.push_back(e.label_specs);
      for (const auto& f : required) {
        if (!fs::exists(f)) throw ConfigError("task \"" + e.task_name + "\": missing file " + f.string());
      }
      m.tasks.push_back(std::move(e));
    }
    return m;
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// --- reports ------------------------------------------------------------------

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", fraction * 100.0);
  return buf;
}

Json report_to_json(const EvalReport& r) {
  Json j{{"task_name", r.task_name},
         {"category", std::string(to_string(r.category))},
         {"metric_name", r.metric_name},
         {"n_examples", r.n_examples},
         {"random_baseline", r.random_baseline}};
  if (r.failed()) {
    j["status"] = "failed";
    j["error"] = r.error;
  } else {
    j["status"] = "ok";
    j["value"] = r.value;
    if (!r.secondary.empty()) j["secondary"] = r.secondary;
  }
  return j;
}

std::string format_jsonl(const std::vector<EvalReport>& reports) {
  std::string s;
  for (const auto& r : reports) {
    s += report_to_json(r).dump();
    s += '\n';
  }
  return s;
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::vector<std::vector<std::string>> rows{{"Task", "Metric", "Random (%)", "Score (%)"}};
  for (const auto& r : reports) {
    rows.push_back({r.task_name, r.metric_name, random_cell(r), r.failed() ? "FAILED" : format_percent(r.value)});
  }
  std::vector<std::size_t> width(4, 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], display_width(row[c]));
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      const auto& cell = rows[i][c];
      const std::string pad(width[c] - display_width(cell), ' ');
      if (c > 0) os << " | ";
      // Text columns left-aligned, numbers right-aligned.
      if (c < 2) {
        os << cell << (c == 3 ? "" : pad);
      } else {
        os << pad << cell;
      }
    }
    os << '\n';
    if (i == 0) {
      for (std::size_t c = 0; c < 4; ++c) os << (c ? "-|-" : "") << std::string(width[c], '-');
      os << '\n';
    }
  }
  return os.str();
}

std::string format_csv(const std::vector<EvalReport>& reports) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + '"';
  };
  std::ostringstream os;
  os << "task,category,metric,random,score,n_examples,status\n";
  char buf[64];
  for (const auto& r : reports) {
    os << quote(r.task_name) << ',' << to_string(r.category) << ',' << quote(r.metric_name) << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.random_baseline);
    os << buf << ',';
    if (!r.failed()) {
      std::snprintf(buf, sizeof buf, "%.6f", r.value);
      os << buf;
    }
    os << ',' << r.n_examples << ',' << (r.failed() ? "failed" : "ok") << '\n';
  }
  return os.str();
}

// --- evaluation ---------------------------------------------------------------

std::vector<EvalReport> evaluate_manifest(const RunManifest& manifest, const EmbeddingProvider& provider,
                                          std::size_t jobs) {
  std::vector<EvalReport> reports(manifest.tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < manifest.tasks.size();) {
      const auto& task = manifest.tasks[i];
      try {
        reports[i] = evaluate_task(task, provider, manifest.provider.batch_size);
      } catch (const std::exception& e) {
        EvalReport r;
        r.task_name = task.task_name;
        r.category = task.category;
        r.metric_name = task.metric_name.empty() ? std::string(default_metric(task.category)) : task.metric_name;
        r.error = e.what();
        reports[i] = std::move(r);
      }
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), manifest.tasks.size());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return reports;
}

EvalReport baseline_for(const TaskEntry& task) {
  EvalReport r;
  r.task_name = task.task_name;
  r.category = task.category;
  r.metric_name = task.metric_name.empty() ? std::string(default_metric(task.category)) : task.metric_name;
  BaselineParams bp;
  switch (task.category) {
    case TaskCategory::Classification: {
      const auto xs = read_jsonl<ClassificationExample>(task.path);
      if (xs.empty()) throw ValidationError("task has no examples");
      double sum = 0.0;
      for (const auto& x : xs) {
        bp.k = x.candidate_labels.size();
        sum += random_baseline(task.category, bp);
      }
      r.n_examples = xs.size();
      r.random_baseline = sum / static_cast<double>(xs.size());
      break;
    }
    case TaskCategory::Reranking: {
      const auto xs = read_jsonl<RerankingExample>(task.path);
      if (xs.empty()) throw ValidationError("task has no examples");
      std::map<std::pair<std::size_t, std::size_t>, double> cache;
      double sum = 0.0;
      for (const auto& x : xs) {
        auto key = std::make_pair(x.positives.size(), x.negatives.size());
        auto it = cache.find(key);
        if (it == cache.end()) {
          bp.positives = key.first;
          bp.negatives = key.second;
          it = cache.emplace(key, random_baseline(task.category, bp)).first;
        }
        sum += it->second;
      }
      r.n_examples = xs.size();
      r.random_baseline = sum / static_cast<double>(xs.size());
      break;
    }
    case TaskCategory::Retrieval: {
      const auto t = read_retrieval_task(task.retrieval_paths());
      bp.n = t.corpus.size();
      bp.top_k = task.k;
      r.n_examples = t.queries.size();
      r.random_baseline = random_baseline(task.category, bp);
      break;
    }
    case TaskCategory::PairwiseClassification: {
      const auto xs = read_jsonl<PairExample>(task.path);
      for (const auto& x : xs) (x.is_match ? bp.matches : bp.non_matches)++;
      r.n_examples = xs.size();
      r.random_baseline = random_baseline(task.category, bp);
      break;
    }
    case TaskCategory::BitextMining: {
      const auto xs = read_jsonl<BitextExample>(task.path);
      bp.n = xs.size();
      r.n_examples = xs.size();
      r.random_baseline = random_baseline(task.category, bp);
      break;
    }
  }
  r.value = r.random_baseline;
  return r;
}

// --- commands -----------------------------------------------------------------

int cmd_reformulate(const fs::path& mapping_config, const fs::path& raw_records, const fs::path& out_path,
                    const CommandContext& ctx) {
  return guarded(ctx, "reformulate", [&] {
    MappingConfig cfg = MappingConfig::load(mapping_config);
    if (ctx.seed) cfg.seed = *ctx.seed;
    const auto records = read_raw_records(raw_records);

    std::size_t written = 0;
    std::vector<RecordError> skipped;
    switch (cfg.category) {
      case TaskCategory::Classification: {
        auto r = reformulate_classification(records, cfg);
        write_jsonl(out_path, r.output);
        written = r.output.size();
        skipped = std::move(r.skipped);
        break;
      }
      case TaskCategory::Reranking: {
        auto r = reformulate_reranking(records, cfg);
        write_jsonl(out_path, r.output);
        written = r.output.size();
        skipped = std::move(r.skipped);
        break;
      }
      case TaskCategory::Retrieval: {
        auto r = reformulate_reasoning_retrieval(records, cfg);
        fs::create_directories(out_path);
        write_retrieval_task(RetrievalPaths::in_directory(out_path), r.output);
        written = r.output.queries.size();
        skipped = std::move(r.skipped);
        break;
      }
      case TaskCategory::PairwiseClassification: {
        auto r = reformulate_paraphrase_pairwise(records, cfg);
        write_jsonl(out_path, r.output);
        written = r.output.size();
        skipped = std::move(r.skipped);
        break;
      }
      case TaskCategory::BitextMining: {
        auto r = reformulate_bitext(records, cfg);
        write_jsonl(out_path, r.output);
        written = r.output.size();
        skipped = std::move(r.skipped);
        break;
      }
    }
    for (const auto& s : skipped) {
      err_of(ctx) << "warning: " << raw_records.string() << ": record " << s.index << " skipped: " << s.message
                  << '\n';
    }
    out_of(ctx) << "records: " << written << "\nskipped: " << skipped.size() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_augment(const fs::path& task_path, const fs::path& label_specs, const fs::path& out_path,
                bool with_explanations, const std::string& task_name, const CommandContext& ctx) {
  return guarded(ctx, "augment", [&] {
    const auto v = validate_task_file(task_path, TaskCategory::Classification);
    if (!v.ok()) {
      print_violations(err_of(ctx), v);
      return static_cast<int>(kExitUsage);
    }
    const auto examples = read_jsonl<ClassificationExample>(task_path);
    const auto specs = label_specs.empty() ? builtin_label_specs() : read_label_specs(label_specs);
    const std::string name = task_name.empty() ? task_path.stem().string() : task_name;
    const auto triplets = augment_task(examples, specs, name,
                                       with_explanations ? LabelRender::WithExplanation : LabelRender::Plain);
    write_jsonl(out_path, triplets);
    out_of(ctx) << "triplets: " << triplets.size() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_evaluate(const fs::path& manifest_path, const CommandContext& ctx) {
  return guarded(ctx, "evaluate", [&] {
    RunManifest m = RunManifest::load(manifest_path);
    if (!ctx.provider_config.empty()) m.provider = ProviderConfig::load(ctx.provider_config);
    if (ctx.seed) m.provider.seed = *ctx.seed;
    if (!ctx.output_dir.empty()) m.output_dir = ctx.output_dir;
    if (m.output_dir.empty()) m.output_dir = manifest_path.parent_path() / "results";

    const auto provider = make_provider(m.provider);
    const auto reports = evaluate_manifest(m, *provider, ctx.jobs);

    fs::create_directories(m.output_dir);
    write_text(m.output_dir / "results.jsonl", format_jsonl(reports));
    write_text(m.output_dir / "results.txt", format_table(reports));
    if (ctx.format == OutputFormat::Csv) write_text(m.output_dir / "results.csv", format_csv(reports));

    switch (ctx.format) {
      case OutputFormat::Table: out_of(ctx) << format_table(reports); break;
      case OutputFormat::Jsonl: out_of(ctx) << format_jsonl(reports); break;
      case OutputFormat::Csv: out_of(ctx) << format_csv(reports); break;
    }
    std::size_t failed = 0;
    for (const auto& r : reports) {
      if (r.failed()) {
        ++failed;
        err_of(ctx) << "task " << r.task_name << " failed: " << r.error << '\n';
      }
    }
    out_of(ctx) << "results: " << (m.output_dir / "results.jsonl").string() << '\n';
    if (failed == 0) return static_cast<int>(kExitOk);
    return static_cast<int>(failed == reports.size() ? kExitFatal : kExitPartial);
  });
}

int cmd_train_adapter(const fs::path& triplets_path, const fs::path& train_config, const fs::path& checkpoint_out,
                      const CommandContext& ctx) {
  return guarded(ctx, "train-adapter", [&] {
    if (ctx.provider_config.empty()) throw ConfigError("--provider-config is required");
    TrainConfig cfg = TrainConfig::load(train_config);
    if (ctx.seed) cfg.seed = *ctx.seed;
    const ProviderConfig pcfg = ProviderConfig::load(ctx.provider_config);

    const auto v = validate_triplet_file(triplets_path);
    if (!v.ok()) {
      print_violations(err_of(ctx), v);
      return static_cast<int>(kExitUsage);
    }
    const auto triplets = read_jsonl<TripletRecord>(triplets_path);
    const auto provider = make_provider(pcfg);
    const auto result = train(triplets, *provider, cfg);

    save_checkpoint(checkpoint_out, result.params);
    fs::path history = checkpoint_out;
    history.replace_extension(".history.jsonl");
    write_history(history, result.history);

    auto& out = out_of(ctx);
    if (!result.history.steps.empty()) {
      out << "first loss: " << result.history.steps.front().loss << '\n'
          << "last loss: " << result.history.steps.back().loss << '\n';
    }
    out << "checkpoint: " << checkpoint_out.string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_baseline(const fs::path& manifest_path, const CommandContext& ctx) {
  return guarded(ctx, "baseline", [&] {
    const RunManifest m = RunManifest::load(manifest_path);
    std::vector<EvalReport> rows;
    for (const auto& t : m.tasks) rows.push_back(baseline_for(t));

    std::ostringstream os;
    std::size_t w_task = 4, w_metric = 6;
    for (const auto& r : rows) {
      w_task = std::max(w_task, r.task_name.size());
      w_metric = std::max(w_metric, r.metric_name.size());
    }
    switch (ctx.format) {
      case OutputFormat::Jsonl: os << format_jsonl(rows); break;
      case OutputFormat::Csv: os << format_csv(rows); break;
      case OutputFormat::Table:
        os << "Task" << std::string(w_task - 4, ' ') << " | Metric" << std::string(w_metric - 6, ' ')
           << " | Random (%)\n";
        for (const auto& r : rows) {
          os << r.task_name << std::string(w_task - r.task_name.size(), ' ') << " | " << r.metric_name
             << std::string(w_metric - r.metric_name.size(), ' ') << " | " << random_cell(r);
          if (r.category == TaskCategory::Retrieval) os << " (recall@k " << format_percent(r.random_baseline) << ")";
          os << '\n';
        }
        break;
    }
    out_of(ctx) << os.str();
    return static_cast<int>(kExitOk);
  });
}

int cmd_validate(const fs::path& path, const std::string& category, const CommandContext& ctx) {
  return guarded(ctx, "validate", [&] {
    const ValidationResult v = category == "triplets" ? validate_triplet_file(path)
                                                      : validate_task_file(path, parse_category(category));
    if (!v.ok()) {
      print_violations(err_of(ctx), v);
      out_of(ctx) << "invalid: " << v.violations.size() << " violation(s)\n";
      return static_cast<int>(kExitUsage);
    }
    out_of(ctx) << "records: " << v.count << '\n';
    return static_cast<int>(kExitOk);
  });
}

}  // namespace embench
