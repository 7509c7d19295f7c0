#include "embench/task_model.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "embench/error.hpp"
#include "embench/random.hpp"

namespace embench {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::pair<TaskCategory, std::string_view>, 5> kCategoryNames{{
    {TaskCategory::Classification, "classification"},
    {TaskCategory::Reranking, "reranking"},
    {TaskCategory::Retrieval, "retrieval"},
    {TaskCategory::PairwiseClassification, "pairwise_classification"},
    {TaskCategory::BitextMining, "bitext_mining"},
}};

const Json& require(const Json& j, const char* key) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing key \"") + key + "\"");
  return *it;
}

std::string get_string(const Json& j, const char* key) {
  const Json& v = require(j, key);
  if (!v.is_string()) throw ValidationError(std::string("\"") + key + "\" must be a string");
  return v.get<std::string>();
}

std::vector<std::string> get_strings(const Json& j, const char* key) {
  const Json& v = require(j, key);
  if (!v.is_array()) throw ValidationError(std::string("\"") + key + "\" must be an array");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_string()) {
      throw ValidationError(std::string("\"") + key + "\" must contain only strings");
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

bool has_duplicates(const std::vector<std::string>& v) {
  std::unordered_set<std::string_view> seen;
  for (const auto& s : v) {
    if (!seen.insert(s).second) return true;
  }
  return false;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::ifstream open_for_read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  auto in = open_for_read(path);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    fn(no, line);
  }
}

// Per-record id of a canonical record, used for duplicate detection.
const std::string& record_id(const ClassificationExample& x) { return x.id; }
const std::string& record_id(const RerankingExample& x) { return x.id; }
const std::string& record_id(const PairExample& x) { return x.id; }
const std::string& record_id(const BitextExample& x) { return x.id; }
const std::string& record_id(const TripletRecord& x) { return x.uid; }

template <typename T>
ValidationResult validate_lines(const fs::path& path) {
  ValidationResult result;
  std::unordered_set<std::string> ids;
  std::size_t count = 0;
  for_each_line(path, [&](std::size_t no, const std::string& line) {
    auto fail = [&](std::string msg) {
      result.violations.push_back({no, path.string(), std::move(msg)});
    };
    if (line.empty()) {
      fail("empty line");
      return;
    }
    T rec;
    try {
      rec = from_json<T>(Json::parse(line));
    } catch (const Json::exception& e) {
      fail(std::string("malformed JSON: ") + e.what());
      return;
    } catch (const ValidationError& e) {
      fail(e.what());
      return;
    }
    if (auto msg = check(rec); !msg.empty()) {
      fail(msg);
      return;
    }
    if (!ids.insert(record_id(rec)).second) {
      fail("duplicate id \"" + record_id(rec) + "\"");
      return;
    }
    ++count;
  });
  if (result.ok()) result.count = count;
  return result;
}

}  // namespace

std::string_view to_string(TaskCategory c) noexcept {
  for (const auto& [cat, name] : kCategoryNames) {
    if (cat == c) return name;
  }
  return "unknown";
}

TaskCategory parse_category(std::string_view name) {
  for (const auto& [cat, n] : kCategoryNames) {
    if (n == name) return cat;
  }
  throw ConfigError("unknown task category \"" + std::string(name) + "\"");
}

std::string_view default_metric(TaskCategory c) noexcept {
  switch (c) {
    case TaskCategory::Classification: return "accuracy";
    case TaskCategory::Reranking: return "map";
    case TaskCategory::Retrieval: return "ndcg_at_10";
    case TaskCategory::PairwiseClassification: return "max_accuracy";
    case TaskCategory::BitextMining: return "accuracy";
  }
  return "";
}

std::string generate_uid(std::string_view dataset_name, std::uint64_t index) {
  if (dataset_name.empty()) throw ValidationError("generate_uid: empty dataset name");
  std::string key(dataset_name);
  key += ':';
  key += std::to_string(index);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(key)));
  return std::string(buf, 16);
}

// --- codecs -------------------------------------------------------------------

Json to_json(const ClassificationExample& x) {
  return Json{{"id", x.id},
              {"input_text", x.input_text},
              {"candidate_labels", x.candidate_labels},
              {"gold_index", x.gold_index}};
}

Json to_json(const RerankingExample& x) {
  return Json{{"id", x.id}, {"query", x.query}, {"positives", x.positives}, {"negatives", x.negatives}};
}

Json to_json(const RetrievalQuery& x) { return Json{{"query_id", x.query_id}, {"text", x.text}}; }
Json to_json(const RetrievalDoc& x) { return Json{{"doc_id", x.doc_id}, {"text", x.text}}; }

Json to_json(const PairExample& x) {
  return Json{{"id", x.id}, {"text_a", x.text_a}, {"text_b", x.text_b}, {"is_match", x.is_match}};
}

Json to_json(const BitextExample& x) {
  return Json{{"id", x.id}, {"source_text", x.source_text}, {"target_text", x.target_text}};
}

Json to_json(const LabelSpec& x) { return Json{{"label", x.label}, {"explanation", x.explanation}}; }

Json to_json(const TripletRecord& x) {
  Json j{{"uid", x.uid},
         {"input_text", x.input_text},
         {"positive_text", x.positive_text},
         {"negative_texts", x.negative_texts}};
  if (!x.source.empty()) j["source"] = x.source;
  return j;
}

template <>
ClassificationExample from_json<ClassificationExample>(const Json& j) {
  ClassificationExample x;
  x.id = get_string(j, "id");
  x.input_text = get_string(j, "input_text");
  x.candidate_labels = get_strings(j, "candidate_labels");
  const Json& g = require(j, "gold_index");
  if (!g.is_number_integer() || g.get<long long>() < 0) {
    throw ValidationError("\"gold_index\" must be a non-negative integer");
  }
  x.gold_index = g.get<std::size_t>();
  return x;
}

template <>
RerankingExample from_json<RerankingExample>(const Json& j) {
  return {get_string(j, "id"), get_string(j, "query"), get_strings(j, "positives"),
          get_strings(j, "negatives")};
}

template <>
RetrievalQuery from_json<RetrievalQuery>(const Json& j) {
  return {get_string(j, "query_id"), get_string(j, "text")};
}

template <>
RetrievalDoc from_json<RetrievalDoc>(const Json& j) {
  return {get_string(j, "doc_id"), get_string(j, "text")};
}

template <>
PairExample from_json<PairExample>(const Json& j) {
  PairExample x{get_string(j, "id"), get_string(j, "text_a"), get_string(j, "text_b"), false};
  const Json& m = require(j, "is_match");
  if (!m.is_boolean()) throw ValidationError("\"is_match\" must be a boolean");
  x.is_match = m.get<bool>();
  return x;
}

template <>
BitextExample from_json<BitextExample>(const Json& j) {
  return {get_string(j, "id"), get_string(j, "source_text"), get_string(j, "target_text")};
}

template <>
LabelSpec from_json<LabelSpec>(const Json& j) {
  LabelSpec x{get_string(j, "label"), ""};
  if (j.contains("explanation")) x.explanation = get_string(j, "explanation");
  return x;
}

template <>
TripletRecord from_json<TripletRecord>(const Json& j) {
  TripletRecord x{get_string(j, "uid"), get_string(j, "input_text"), get_string(j, "positive_text"),
                  get_strings(j, "negative_texts"), ""};
  if (j.contains("source")) x.source = get_string(j, "source");
  return x;
}

// --- invariants ---------------------------------------------------------------

std::string check(const ClassificationExample& x) {
  if (x.id.empty()) return "empty id";
  if (x.input_text.empty()) return "empty input_text";
  if (x.candidate_labels.size() < 2) return "fewer than 2 candidate_labels";
  if (x.gold_index >= x.candidate_labels.size()) return "gold_index out of range";
  if (has_duplicates(x.candidate_labels)) return "candidate_labels not distinct";
  for (const auto& l : x.candidate_labels) {
    if (l.empty()) return "empty candidate label";
  }
  return {};
}

std::string check(const RerankingExample& x) {
  if (x.id.empty()) return "empty id";
  if (x.query.empty()) return "empty query";
  if (x.positives.empty()) return "no positives";
  if (x.negatives.empty()) return "no negatives";
  for (const auto& p : x.positives) {
    if (p.empty()) return "empty positive";
  }
  std::unordered_set<std::string_view> pos(x.positives.begin(), x.positives.end());
  for (const auto& n : x.negatives) {
    if (n.empty()) return "empty negative";
    if (pos.count(n)) return "text appears among both positives and negatives";
  }
  return {};
}

std::string check(const PairExample& x) {
  if (x.id.empty()) return "empty id";
  if (x.text_a.empty() || x.text_b.empty()) return "empty pair text";
  return {};
}

std::string check(const BitextExample& x) {
  if (x.id.empty()) return "empty id";
  if (x.source_text.empty()) return "empty source_text";
  if (x.target_text.empty()) return "empty target_text";
  return {};
}

std::string check(const TripletRecord& x) {
  if (x.uid.empty()) return "empty uid";
  if (x.input_text.empty()) return "empty input_text";
  if (x.negative_texts.empty()) return "no negative_texts";
  if (!ends_with(x.positive_text, x.uid)) return "positive_text does not end with uid";
  for (const auto& n : x.negative_texts) {
    if (!ends_with(n, x.uid)) return "negative_text does not end with uid";
    if (n == x.positive_text) return "positive_text repeated among negative_texts";
  }
  if (has_duplicates(x.negative_texts)) return "negative_texts not distinct";
  return {};
}

std::vector<std::string> check(const RetrievalTask& task) {
  std::vector<std::string> errs;
  std::unordered_set<std::string> qids, dids;
  for (const auto& q : task.queries) {
    if (q.query_id.empty()) errs.push_back("empty query_id");
    if (q.text.empty()) errs.push_back("empty text for query \"" + q.query_id + "\"");
    if (!qids.insert(q.query_id).second) errs.push_back("duplicate query_id \"" + q.query_id + "\"");
  }
  for (const auto& d : task.corpus) {
    if (d.doc_id.empty()) errs.push_back("empty doc_id");
    if (d.text.empty()) errs.push_back("empty text for doc \"" + d.doc_id + "\"");
    if (!dids.insert(d.doc_id).second) errs.push_back("duplicate doc_id \"" + d.doc_id + "\"");
  }
  for (const auto& [qid, docs] : task.qrels) {
    if (!qids.count(qid)) errs.push_back("qrels references unknown query_id \"" + qid + "\"");
    if (docs.empty()) errs.push_back("qrels for \"" + qid + "\" is empty");
    for (const auto& d : docs) {
      if (!dids.count(d)) errs.push_back("qrels references unknown doc_id \"" + d + "\"");
    }
  }
  return errs;
}

// --- files --------------------------------------------------------------------

template <typename T>
void write_jsonl(const fs::path& path, const std::vector<T>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

template <typename T>
std::vector<T> read_jsonl(const fs::path& path) {
  std::vector<T> out;
  for_each_line(path, [&](std::size_t no, const std::string& line) {
    try {
      out.push_back(from_json<T>(Json::parse(line)));
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  });
  return out;
}

template void write_jsonl(const fs::path&, const std::vector<ClassificationExample>&);
template void write_jsonl(const fs::path&, const std::vector<RerankingExample>&);
template void write_jsonl(const fs::path&, const std::vector<RetrievalQuery>&);
template void write_jsonl(const fs::path&, const std::vector<RetrievalDoc>&);
template void write_jsonl(const fs::path&, const std::vector<PairExample>&);
template void write_jsonl(const fs::path&, const std::vector<BitextExample>&);
template void write_jsonl(const fs::path&, const std::vector<LabelSpec>&);
template void write_jsonl(const fs::path&, const std::vector<TripletRecord>&);
template std::vector<ClassificationExample> read_jsonl(const fs::path&);
template std::vector<RerankingExample> read_jsonl(const fs::path&);
template std::vector<RetrievalQuery> read_jsonl(const fs::path&);
template std::vector<RetrievalDoc> read_jsonl(const fs::path&);
template std::vector<PairExample> read_jsonl(const fs::path&);
template std::vector<BitextExample> read_jsonl(const fs::path&);
template std::vector<LabelSpec> read_jsonl(const fs::path&);
template std::vector<TripletRecord> read_jsonl(const fs::path&);

RetrievalPaths RetrievalPaths::in_directory(const fs::path& dir) {
  return {dir / "queries.jsonl", dir / "corpus.jsonl", dir / "qrels.jsonl"};
}

void write_retrieval_task(const RetrievalPaths& paths, const RetrievalTask& task) {
  write_jsonl(paths.queries, task.queries);
  write_jsonl(paths.corpus, task.corpus);
  std::ofstream out(paths.qrels, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + paths.qrels.string());
  // Emitted in query order so the file mirrors queries.jsonl.
  for (const auto& q : task.queries) {
    auto it = task.qrels.find(q.query_id);
    if (it == task.qrels.end()) continue;
    Json j{{"query_id", q.query_id}, {"doc_ids", std::vector<std::string>(it->second.begin(), it->second.end())}};
    out << j.dump() << '\n';
  }
}

RetrievalTask read_retrieval_task(const RetrievalPaths& paths) {
  RetrievalTask task;
  task.queries = read_jsonl<RetrievalQuery>(paths.queries);
  task.corpus = read_jsonl<RetrievalDoc>(paths.corpus);
  for_each_line(paths.qrels, [&](std::size_t no, const std::string& line) {
    try {
      Json j = Json::parse(line);
      auto docs = get_strings(j, "doc_ids");
      task.qrels[get_string(j, "query_id")].insert(docs.begin(), docs.end());
    } catch (const std::exception& e) {
      throw ValidationError(paths.qrels.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  });
  if (auto errs = check(task); !errs.empty()) throw ValidationError(errs.front());
  return task;
}

std::vector<LabelSpec> read_label_specs(const fs::path& path) {
  auto in = open_for_read(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const Json& arr = j.is_object() && j.contains("label_specs") ? j["label_specs"] : j;
  if (!arr.is_array()) throw ConfigError(path.string() + ": expected an array of label specs");
  std::vector<LabelSpec> specs;
  for (const auto& e : arr) specs.push_back(from_json<LabelSpec>(e));
  return specs;
}

// --- validation ---------------------------------------------------------------

ValidationResult validate_task_file(const fs::path& path, TaskCategory category) {
  if (!fs::exists(path)) {
    return {0, {{0, path.string(), "file does not exist"}}};
  }
  switch (category) {
    case TaskCategory::Classification: return validate_lines<ClassificationExample>(path);
    case TaskCategory::Reranking: return validate_lines<RerankingExample>(path);
    case TaskCategory::PairwiseClassification: return validate_lines<PairExample>(path);
    case TaskCategory::BitextMining: return validate_lines<BitextExample>(path);
    case TaskCategory::Retrieval: return validate_retrieval_task(RetrievalPaths::in_directory(path));
  }
  return {};
}

ValidationResult validate_triplet_file(const fs::path& path) {
  if (!fs::exists(path)) return {0, {{0, path.string(), "file does not exist"}}};
  return validate_lines<TripletRecord>(path);
}

ValidationResult validate_retrieval_task(const RetrievalPaths& paths) {
  ValidationResult result;
  for (const auto* p : {&paths.queries, &paths.corpus, &paths.qrels}) {
    if (!fs::exists(*p)) result.violations.push_back({0, p->string(), "file does not exist"});
  }
  if (!result.ok()) return result;

  // Line-level pass; ids are tracked with their line for cross-references.
  std::map<std::string, std::size_t> qids, dids;
  auto scan = [&](const fs::path& path, const char* id_key, std::map<std::string, std::size_t>& ids) {
    for_each_line(path, [&](std::size_t no, const std::string& line) {
      try {
        Json j = Json::parse(line);
        std::string id = get_string(j, id_key);
        std::string text = get_string(j, "text");
        if (id.empty()) throw ValidationError(std::string("empty ") + id_key);
        if (text.empty()) throw ValidationError("empty text");
        if (!ids.emplace(id, no).second) throw ValidationError("duplicate id \"" + id + "\"");
      } catch (const Json::exception& e) {
        result.violations.push_back({no, path.string(), std::string("malformed JSON: ") + e.what()});
      } catch (const ValidationError& e) {
        result.violations.push_back({no, path.string(), e.what()});
      }
    });
  };
  scan(paths.queries, "query_id", qids);
  scan(paths.corpus, "doc_id", dids);

  std::unordered_set<std::string> seen_q;
  for_each_line(paths.qrels, [&](std::size_t no, const std::string& line) {
    auto fail = [&](std::string msg) {
      result.violations.push_back({no, paths.qrels.string(), std::move(msg)});
    };
    try {
      Json j = Json::parse(line);
      std::string qid = get_string(j, "query_id");
      auto docs = get_strings(j, "doc_ids");
      if (!qids.count(qid)) fail("unknown query_id \"" + qid + "\"");
      if (!seen_q.insert(qid).second) fail("duplicate qrels entry for \"" + qid + "\"");
      if (docs.empty()) fail("empty doc_ids for \"" + qid + "\"");
      for (const auto& d : docs) {
        if (!dids.count(d)) fail("unknown doc_id \"" + d + "\"");
      }
    } catch (const Json::exception& e) {
      fail(std::string("malformed JSON: ") + e.what());
    } catch (const ValidationError& e) {
      fail(e.what());
    }
  });
  if (result.ok()) result.count = qids.size();
  return result;
}

}  // namespace embench
