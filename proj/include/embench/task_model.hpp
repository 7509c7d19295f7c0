#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace embench {

using Json = nlohmann::json;

enum class TaskCategory {
  Classification,
  Reranking,
  Retrieval,
  PairwiseClassification,
  BitextMining,
};

std::string_view to_string(TaskCategory c) noexcept;
// Accepts the snake_case names produced by to_string. Throws ConfigError.
TaskCategory parse_category(std::string_view name);

// Metric reported for a category by default ("accuracy", "map", ...).
std::string_view default_metric(TaskCategory c) noexcept;

struct ClassificationExample {
  std::string id;
  std::string input_text;
  std::vector<std::string> candidate_labels;
  std::size_t gold_index = 0;

  const std::string& gold_label() const { return candidate_labels.at(gold_index); }
  bool operator==(const ClassificationExample&) const = default;
};

struct RerankingExample {
  std::string id;
  std::string query;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;

  bool operator==(const RerankingExample&) const = default;
};

struct RetrievalQuery {
  std::string query_id;
  std::string text;
  bool operator==(const RetrievalQuery&) const = default;
};

struct RetrievalDoc {
  std::string doc_id;
  std::string text;
  bool operator==(const RetrievalDoc&) const = default;
};

struct RetrievalTask {
  std::vector<RetrievalQuery> queries;
  std::vector<RetrievalDoc> corpus;
  std::map<std::string, std::set<std::string>> qrels;

  bool operator==(const RetrievalTask&) const = default;
};

struct PairExample {
  std::string id;
  std::string text_a;
  std::string text_b;
  bool is_match = false;

  bool operator==(const PairExample&) const = default;
};

struct BitextExample {
  std::string id;
  std::string source_text;
  std::string target_text;

  bool operator==(const BitextExample&) const = default;
};

struct LabelSpec {
  std::string label;
  std::string explanation;

  bool operator==(const LabelSpec&) const = default;
};

// A label-augmented training instance. `source` names the dataset the
// triplet came from and drives unmixed batching; it is optional on disk.
struct TripletRecord {
  std::string uid;
  std::string input_text;
  std::string positive_text;
  std::vector<std::string> negative_texts;
  std::string source;

  bool operator==(const TripletRecord&) const = default;
};

// Returns a 16-character lowercase hex token derived from FNV-1a 64 of
// "dataset_name:index". Throws ValidationError on an empty name.
std::string generate_uid(std::string_view dataset_name, std::uint64_t index);

// --- JSON codecs ------------------------------------------------------------
//
// One JSON object per line; keys are exactly the field names above. The
// from_json overloads throw ValidationError on a missing key or wrong type.

Json to_json(const ClassificationExample& x);
Json to_json(const RerankingExample& x);
Json to_json(const RetrievalQuery& x);
Json to_json(const RetrievalDoc& x);
Json to_json(const PairExample& x);
Json to_json(const BitextExample& x);
Json to_json(const LabelSpec& x);
Json to_json(const TripletRecord& x);

template <typename T>
T from_json(const Json& j);

template <> ClassificationExample from_json<ClassificationExample>(const Json& j);
template <> RerankingExample from_json<RerankingExample>(const Json& j);
template <> RetrievalQuery from_json<RetrievalQuery>(const Json& j);
template <> RetrievalDoc from_json<RetrievalDoc>(const Json& j);
template <> PairExample from_json<PairExample>(const Json& j);
template <> BitextExample from_json<BitextExample>(const Json& j);
template <> LabelSpec from_json<LabelSpec>(const Json& j);
template <> TripletRecord from_json<TripletRecord>(const Json& j);

// Invariant checks shared by the validator and the reformulator. Each
// returns an empty string when the record is valid, else a description of
// the first violation found.
std::string check(const ClassificationExample& x);
std::string check(const RerankingExample& x);
std::string check(const PairExample& x);
std::string check(const BitextExample& x);
std::string check(const TripletRecord& x);

// --- line files -------------------------------------------------------------

// Serializes one record per line with '\n' endings.
template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records);

// Strict reader: throws ValidationError naming the first bad line. Use
// validate_task_file when every violation must be reported.
template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path);

// Retrieval tasks live in three files. When a directory is given, the
// files are "queries.jsonl", "corpus.jsonl" and "qrels.jsonl" inside it.
struct RetrievalPaths {
  std::filesystem::path queries;
  std::filesystem::path corpus;
  std::filesystem::path qrels;

  static RetrievalPaths in_directory(const std::filesystem::path& dir);
};

void write_retrieval_task(const RetrievalPaths& paths, const RetrievalTask& task);
RetrievalTask read_retrieval_task(const RetrievalPaths& paths);

std::vector<LabelSpec> read_label_specs(const std::filesystem::path& path);

// --- validation -------------------------------------------------------------

struct Violation {
  std::size_t line = 0;  // 1-based; 0 when the violation is not tied to a line
  std::string file;
  std::string message;
};

struct ValidationResult {
  std::size_t count = 0;
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
};

// Parses every line against the category's record schema. `count` is only
// meaningful when ok(); on failure every (line, violation) pair is reported
// and no record is accepted. For Retrieval, `path` is a directory holding
// the three task files.
ValidationResult validate_task_file(const std::filesystem::path& path,
                                    TaskCategory category);
ValidationResult validate_retrieval_task(const RetrievalPaths& paths);
ValidationResult validate_triplet_file(const std::filesystem::path& path);

// In-memory check of a whole retrieval task (id uniqueness, qrels closure).
std::vector<std::string> check(const RetrievalTask& task);

}  // namespace embench
