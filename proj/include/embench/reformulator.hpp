#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "embench/task_model.hpp"

namespace embench {

// One raw source record: field name -> string or list of strings. This is
// the line format the ingestion scripts emit (one JSON object per line).
class RawRecord {
 public:
  using Value = std::variant<std::string, std::vector<std::string>>;

  RawRecord() = default;
  RawRecord(std::initializer_list<std::pair<const std::string, Value>> fields)
      : fields_(fields) {}

  void set(std::string name, Value value) { fields_[std::move(name)] = std::move(value); }
  bool has(const std::string& name) const { return fields_.count(name) != 0; }

  // Throw ValidationError if the field is absent or has the other shape.
  const std::string& text(const std::string& name) const;
  const std::vector<std::string>& list(const std::string& name) const;

  const std::map<std::string, Value>& fields() const noexcept { return fields_; }

  static RawRecord from_json(const Json& j);
  Json to_json() const;

 private:
  std::map<std::string, Value> fields_;
};

std::vector<RawRecord> read_raw_records(const std::filesystem::path& path);
void write_raw_records(const std::filesystem::path& path, const std::vector<RawRecord>& records);

// Declarative description of how one source dataset maps onto a canonical
// task shape. `bindings` maps a role ("premise", "responses", "answer", ...)
// to the raw field names supplying it. Most roles take one field; the
// reranking "responses" role may name several single-text fields, in which
// case the preference value is matched against those field names.
struct MappingConfig {
  std::string source_name;
  TaskCategory category = TaskCategory::Classification;
  std::map<std::string, std::vector<std::string>> bindings;
  std::vector<LabelSpec> label_specs;

  // Classification: template over role names, e.g.
  // "Premise: {premise} Hypothesis: {hypothesis}". Empty selects a default
  // from the bound roles.
  std::string input_template;
  // Raw label value -> canonical label (e.g. "contradiction" ->
  // "contradictory", "1" -> "unsafe").
  std::map<std::string, std::string> label_aliases;
  // Reranking: fixed task instruction used when no "instruction" role is
  // bound.
  std::string instruction;
  // Pairwise: mismatched pairs per document and sampling seed.
  std::size_t negatives_per_doc = 1;
  std::uint64_t seed = 0;

  const std::string& field(const std::string& role) const;
  bool binds(const std::string& role) const { return bindings.count(role) != 0; }

  static MappingConfig from_json(const Json& j);
  static MappingConfig load(const std::filesystem::path& path);
};

// Roles each category needs bound. Exposed for validation and docs.
std::vector<std::string> required_roles(const MappingConfig& cfg);

// Throws ConfigError when bindings do not cover the category's roles, or
// label specs are missing or repeated.
void check_mapping(const MappingConfig& cfg);

struct RecordError {
  std::size_t index = 0;  // position in the input record list
  std::string message;
};

template <typename T>
struct Reformulated {
  T output;
  std::vector<RecordError> skipped;
};

// Query separator between task instruction and context.
inline constexpr std::string_view kQuerySeparator = "\n";

Reformulated<std::vector<ClassificationExample>> reformulate_classification(
    const std::vector<RawRecord>& records, const MappingConfig& cfg);

Reformulated<std::vector<RerankingExample>> reformulate_reranking(
    const std::vector<RawRecord>& records, const MappingConfig& cfg);

Reformulated<RetrievalTask> reformulate_reasoning_retrieval(
    const std::vector<RawRecord>& records, const MappingConfig& cfg);

// For every document: one matching pair with its own paraphrase, plus
// `negatives_per_doc` pairs with paraphrases of distinct other documents
// drawn without replacement. Throws ConfigError with fewer than
// negatives_per_doc + 1 documents.
std::vector<PairExample> reformulate_paraphrase_pairwise(
    const std::vector<std::pair<std::string, std::string>>& docs, std::size_t negatives_per_doc,
    std::uint64_t seed, std::string_view source_name = "pairs");

// Mapping-config front end for the above: binds roles "document" and
// "paraphrase".
Reformulated<std::vector<PairExample>> reformulate_paraphrase_pairwise(
    const std::vector<RawRecord>& records, const MappingConfig& cfg);

Reformulated<std::vector<BitextExample>> reformulate_bitext(
    const std::vector<RawRecord>& records, const MappingConfig& cfg);

// --- label augmentation -------------------------------------------------------

enum class LabelRender { Plain, WithExplanation };

std::string_view to_string(LabelRender r) noexcept;
LabelRender parse_label_render(std::string_view name);

// "label" or "label. explanation".
std::string render_label(const LabelSpec& spec, LabelRender mode);

// Builds the triplet for one example. Positive is the gold label rendered
// with `mode` followed by " " and the uid; negatives are every other
// candidate label rendered the same way, in candidate order, with the same
// uid. Throws ValidationError when specs do not cover exactly the
// candidate labels or uid is empty.
TripletRecord augment_labels(const ClassificationExample& ex, const std::vector<LabelSpec>& specs,
                             std::string_view uid,
                             LabelRender mode = LabelRender::WithExplanation);

inline TripletRecord augment_labels_plain(const ClassificationExample& ex,
                                          const std::vector<LabelSpec>& specs,
                                          std::string_view uid) {
  return augment_labels(ex, specs, uid, LabelRender::Plain);
}

// Augments a whole task: uid i = generate_uid(task_name, i). The task name
// is also stored as each triplet's source tag.
std::vector<TripletRecord> augment_task(const std::vector<ClassificationExample>& examples,
                                        const std::vector<LabelSpec>& specs,
                                        std::string_view task_name, LabelRender mode);

// Label explanations shipped with the project, keyed by label.
const std::vector<LabelSpec>& builtin_label_specs();
// Looks up each label in builtin_label_specs(); throws ConfigError on a miss.
std::vector<LabelSpec> builtin_specs_for(const std::vector<std::string>& labels);

}  // namespace embench
