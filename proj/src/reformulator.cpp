#include "embench/reformulator.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "embench/error.hpp"
#include "embench/random.hpp"

namespace embench {

namespace fs = std::filesystem;

namespace {

std::string with_index(std::string_view source, std::size_t i) {
  std::string s(source);
  s += '-';
  s += std::to_string(i);
  return s;
}

// Expands "{role}" placeholders. Unknown roles were rejected by
// check_mapping, so every placeholder here is bound.
std::string expand_template(const std::string& tmpl, const MappingConfig& cfg, const RawRecord& r) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    auto open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    auto close = tmpl.find('}', open);
    if (close == std::string::npos) throw ConfigError("unterminated placeholder in input_template");
    out.append(tmpl, pos, open - pos);
    out += r.text(cfg.field(tmpl.substr(open + 1, close - open - 1)));
    pos = close + 1;
  }
  return out;
}

std::vector<std::string> template_roles(const std::string& tmpl) {
  std::vector<std::string> roles;
  std::size_t pos = 0;
  while ((pos = tmpl.find('{', pos)) != std::string::npos) {
    auto close = tmpl.find('}', pos);
    if (close == std::string::npos) throw ConfigError("unterminated placeholder in input_template");
    roles.push_back(tmpl.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return roles;
}

std::string classification_template(const MappingConfig& cfg) {
  if (!cfg.input_template.empty()) return cfg.input_template;
  if (cfg.binds("premise") && cfg.binds("hypothesis")) return "Premise: {premise} Hypothesis: {hypothesis}";
  if (cfg.binds("query") && cfg.binds("answer")) return "{query} {answer}";
  return "{input}";
}

// Values of a role that may be bound to a single text field or a list field.
std::vector<std::string> values_of(const RawRecord& r, const std::string& field) {
  auto it = r.fields().find(field);
  if (it == r.fields().end()) throw ValidationError("missing field \"" + field + "\"");
  if (const auto* s = std::get_if<std::string>(&it->second)) return {*s};
  return std::get<std::vector<std::string>>(it->second);
}

void require_category(const MappingConfig& cfg, TaskCategory want) {
  if (cfg.category != want) {
    throw ConfigError("mapping \"" + cfg.source_name + "\" declares category " +
                      std::string(to_string(cfg.category)) + ", expected " +
                      std::string(to_string(want)));
  }
}

}  // namespace

// --- RawRecord ----------------------------------------------------------------

const std::string& RawRecord::text(const std::string& name) const {
  auto it = fields_.find(name);
  if (it == fields_.end()) throw ValidationError("missing field \"" + name + "\"");
  const auto* s = std::get_if<std::string>(&it->second);
  if (!s) throw ValidationError("field \"" + name + "\" is a list, expected text");
  return *s;
}

const std::vector<std::string>& RawRecord::list(const std::string& name) const {
  auto it = fields_.find(name);
  if (it == fields_.end()) throw ValidationError("missing field \"" + name + "\"");
  const auto* v = std::get_if<std::vector<std::string>>(&it->second);
  if (!v) throw ValidationError("field \"" + name + "\" is text, expected a list");
  return *v;
}

RawRecord RawRecord::from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("raw record is not a JSON object");
  RawRecord r;
  for (const auto& [key, value] : j.items()) {
    if (value.is_string()) {
      r.set(key, value.get<std::string>());
    } else if (value.is_array()) {
      std::vector<std::string> items;
      for (const auto& e : value) {
        if (!e.is_string()) throw ValidationError("field \"" + key + "\" has a non-string item");
        items.push_back(e.get<std::string>());
      }
      r.set(key, std::move(items));
    } else if (value.is_number() || value.is_boolean()) {
      // Numeric labels ("label": 1) are common in source dumps.
      r.set(key, value.dump());
    } else {
      throw ValidationError("field \"" + key + "\" must be a string or list of strings");
    }
  }
  return r;
}

Json RawRecord::to_json() const {
  Json j = Json::object();
  for (const auto& [k, v] : fields_) {
    std::visit([&](const auto& x) { j[k] = x; }, v);
  }
  return j;
}

std::vector<RawRecord> read_raw_records(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<RawRecord> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    try {
      out.push_back(RawRecord::from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

void write_raw_records(const fs::path& path, const std::vector<RawRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

// --- MappingConfig ------------------------------------------------------------

const std::string& MappingConfig::field(const std::string& role) const {
  auto it = bindings.find(role);
  if (it == bindings.end() || it->second.empty()) {
    throw ConfigError("mapping \"" + source_name + "\" does not bind role \"" + role + "\"");
  }
  return it->second.front();
}

MappingConfig MappingConfig::from_json(const Json& j) {
  try {
    MappingConfig cfg;
    cfg.source_name = j.at("source_name").get<std::string>();
    cfg.category = parse_category(j.at("category").get<std::string>());
    for (const auto& [role, v] : j.at("bindings").items()) {
      if (v.is_string()) {
        cfg.bindings[role] = {v.get<std::string>()};
      } else {
        cfg.bindings[role] = v.get<std::vector<std::string>>();
      }
    }
    if (j.contains("label_specs")) {
      for (const auto& s : j["label_specs"]) cfg.label_specs.push_back(embench::from_json<LabelSpec>(s));
    }
    cfg.input_template = j.value("input_template", "");
    if (j.contains("label_aliases")) {
      cfg.label_aliases = j["label_aliases"].get<std::map<std::string, std::string>>();
    }
    cfg.instruction = j.value("instruction", "");
    cfg.negatives_per_doc = j.value("negatives_per_doc", std::size_t{1});
    cfg.seed = j.value("seed", std::uint64_t{0});
    check_mapping(cfg);
    return cfg;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("invalid mapping config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("invalid mapping config: ") + e.what());
  }
}

MappingConfig MappingConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open mapping config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::vector<std::string> required_roles(const MappingConfig& cfg) {
  switch (cfg.category) {
    case TaskCategory::Classification: {
      auto roles = template_roles(classification_template(cfg));
      roles.push_back("label");
      return roles;
    }
    case TaskCategory::Reranking:
      if (cfg.instruction.empty()) return {"instruction", "context", "responses", "preference"};
      return {"context", "responses", "preference"};
    case TaskCategory::Retrieval: return {"question", "answer"};
    case TaskCategory::PairwiseClassification: return {"document", "paraphrase"};
    case TaskCategory::BitextMining: return {"source", "target"};
  }
  return {};
}

void check_mapping(const MappingConfig& cfg) {
  if (cfg.source_name.empty()) throw ConfigError("mapping has empty source_name");
  for (const auto& role : required_roles(cfg)) {
    if (!cfg.binds(role) || cfg.bindings.at(role).empty()) {
      throw ConfigError("mapping \"" + cfg.source_name + "\" does not bind required role \"" + role + "\"");
    }
  }
  if (cfg.category == TaskCategory::Classification) {
    if (cfg.label_specs.size() < 2) {
      throw ConfigError("mapping \"" + cfg.source_name + "\" needs at least 2 label_specs");
    }
    std::set<std::string> seen;
    for (const auto& s : cfg.label_specs) {
      if (s.label.empty()) throw ConfigError("empty label in label_specs");
      if (!seen.insert(s.label).second) throw ConfigError("repeated label \"" + s.label + "\"");
    }
  }
  if (cfg.category == TaskCategory::PairwiseClassification && cfg.negatives_per_doc < 1) {
    throw ConfigError("negatives_per_doc must be >= 1");
  }
}

// --- reformulations -----------------------------------------------------------

Reformulated<std::vector<ClassificationExample>> reformulate_classification(
    const std::vector<RawRecord>& records, const MappingConfig& cfg) {
  require_category(cfg, TaskCategory::Classification);
  check_mapping(cfg);
  const std::string tmpl = classification_template(cfg);

  std::vector<std::string> labels;
  for (const auto& s : cfg.label_specs) labels.push_back(s.label);

  Reformulated<std::vector<ClassificationExample>> result;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      const auto& r = records[i];
      std::string raw_label = r.text(cfg.field("label"));
      if (auto a = cfg.label_aliases.find(raw_label); a != cfg.label_aliases.end()) raw_label = a->second;
      auto gold = std::find(labels.begin(), labels.end(), raw_label);
      if (gold == labels.end()) throw ValidationError("label \"" + raw_label + "\" not in label_specs");

      ClassificationExample ex{with_index(cfg.source_name, i), expand_template(tmpl, cfg, r), labels,
                               static_cast<std::size_t>(gold - labels.begin())};
      if (auto msg = check(ex); !msg.empty()) throw ValidationError(msg);
      result.output.push_back(std::move(ex));
    } catch (const ValidationError& e) {
      result.skipped.push_back({i, e.what()});
    }
  }
  return result;
}

Reformulated<std::vector<RerankingExample>> reformulate_reranking(
    const std::vector<RawRecord>& records, const MappingConfig& cfg) {
  require_category(cfg, TaskCategory::Reranking);
  check_mapping(cfg);
  const auto& response_fields = cfg.bindings.at("responses");

  Reformulated<std::vector<RerankingExample>> result;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      const auto& r = records[i];
      // Candidate (name, text) pairs. Several bound fields are named by
      // field; a single list-valued field is named by position.
      std::vector<std::pair<std::string, std::string>> candidates;
      if (response_fields.size() > 1) {
        for (const auto& f : response_fields) candidates.emplace_back(f, r.text(f));
      } else {
        auto texts = values_of(r, response_fields.front());
        for (std::size_t k = 0; k < texts.size(); ++k) candidates.emplace_back(std::to_string(k), texts[k]);
      }
      if (candidates.size() < 2) throw ValidationError("fewer than 2 responses");

      std::set<std::string> preferred;
      for (const auto& p : values_of(r, cfg.field("preference"))) {
        bool found = std::any_of(candidates.begin(), candidates.end(),
                                 [&](const auto& c) { return c.first == p; });
        if (!found) throw ValidationError("preference names nonexistent response \"" + p + "\"");
        preferred.insert(p);
      }
      if (preferred.empty()) throw ValidationError("empty preference");

      const std::string& instruction =
          cfg.binds("instruction") ? r.text(cfg.field("instruction")) : cfg.instruction;
      RerankingExample ex;
      ex.id = with_index(cfg.source_name, i);
      ex.query = instruction;
      ex.query += kQuerySeparator;
      ex.query += r.text(cfg.field("context"));
      for (auto& [name, text] : candidates) {
        (preferred.count(name) ? ex.positives : ex.negatives).push_back(std::move(text));
      }
      if (auto msg = check(ex); !msg.empty()) throw ValidationError(msg);
      result.output.push_back(std::move(ex));
    } catch (const ValidationError& e) {
      result.skipped.push_back({i, e.what()});
    }
  }
  return result;
}

Reformulated<RetrievalTask> reformulate_reasoning_retrieval(const std::vector<RawRecord>& records,
                                                            const MappingConfig& cfg) {
  require_category(cfg, TaskCategory::Retrieval);
  check_mapping(cfg);

  Reformulated<RetrievalTask> result;
  std::unordered_map<std::string, std::string> doc_for_answer;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      const auto& question = records[i].text(cfg.field("question"));
      const auto& answer = records[i].text(cfg.field("answer"));
      if (question.empty()) throw ValidationError("empty question");
      if (answer.empty()) throw ValidationError("empty answer");

      // Identical answer strings collapse onto the first doc that used them.
      auto [it, inserted] = doc_for_answer.try_emplace(answer);
      if (inserted) {
        it->second = cfg.source_name + "-d" + std::to_string(result.output.corpus.size());
        result.output.corpus.push_back({it->second, answer});
      }
      std::string qid = cfg.source_name + "-q" + std::to_string(i);
      result.output.queries.push_back({qid, question});
      result.output.qrels[qid].insert(it->second);
    } catch (const ValidationError& e) {
      result.skipped.push_back({i, e.what()});
    }
  }
  return result;
}

std::vector<PairExample> reformulate_paraphrase_pairwise(
    const std::vector<std::pair<std::string, std::string>>& docs, std::size_t negatives_per_doc,
    std::uint64_t seed, std::string_view source_name) {
  if (negatives_per_doc < 1) throw ConfigError("negatives_per_doc must be >= 1");
  if (docs.size() < negatives_per_doc + 1) {
    throw ConfigError("pairwise reformulation needs at least " + std::to_string(negatives_per_doc + 1) +
                      " documents, got " + std::to_string(docs.size()));
  }
  Rng rng(seed);
  std::vector<PairExample> out;
  out.reserve(docs.size() * (negatives_per_doc + 1));
  std::vector<std::size_t> others(docs.size() - 1);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const std::string base = with_index(source_name, i);
    out.push_back({base + "-match", docs[i].first, docs[i].second, true});

    // Partial Fisher-Yates over the other documents' indices.
    std::iota(others.begin(), others.begin() + i, std::size_t{0});
    std::iota(others.begin() + i, others.end(), i + 1);
    for (std::size_t r = 0; r < negatives_per_doc; ++r) {
      std::swap(others[r], others[r + rng.below(others.size() - r)]);
      out.push_back({base + "-mismatch-" + std::to_string(r), docs[i].first, docs[others[r]].second, false});
    }
  }
  return out;
}

Reformulated<std::vector<PairExample>> reformulate_paraphrase_pairwise(const std::vector<RawRecord>& records,
                                                                       const MappingConfig& cfg) {
  require_category(cfg, TaskCategory::PairwiseClassification);
  check_mapping(cfg);
  Reformulated<std::vector<PairExample>> result;
  std::vector<std::pair<std::string, std::string>> docs;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      const auto& d = records[i].text(cfg.field("document"));
      const auto& p = records[i].text(cfg.field("paraphrase"));
      if (d.empty() || p.empty()) throw ValidationError("empty document or paraphrase");
      docs.emplace_back(d, p);
    } catch (const ValidationError& e) {
      result.skipped.push_back({i, e.what()});
    }
  }
  result.output = reformulate_paraphrase_pairwise(docs, cfg.negatives_per_doc, cfg.seed, cfg.source_name);
  return result;
}

Reformulated<std::vector<BitextExample>> reformulate_bitext(const std::vector<RawRecord>& records,
                                                            const MappingConfig& cfg) {
  require_category(cfg, TaskCategory::BitextMining);
  check_mapping(cfg);
  Reformulated<std::vector<BitextExample>> result;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      BitextExample ex{with_index(cfg.source_name, i), records[i].text(cfg.field("source")),
                       records[i].text(cfg.field("target"))};
      if (auto msg = check(ex); !msg.empty()) throw ValidationError(msg);
      result.output.push_back(std::move(ex));
    } catch (const ValidationError& e) {
      result.skipped.push_back({i, e.what()});
    }
  }
  return result;
}

// --- label augmentation -------------------------------------------------------

std::string_view to_string(LabelRender r) noexcept {
  return r == LabelRender::Plain ? "plain" : "with_explanation";
}

LabelRender parse_label_render(std::string_view name) {
  if (name == "plain") return LabelRender::Plain;
  if (name == "with_explanation") return LabelRender::WithExplanation;
  throw ConfigError("unknown label_render \"" + std::string(name) + "\"");
}

std::string render_label(const LabelSpec& spec, LabelRender mode) {
  if (mode == LabelRender::Plain) return spec.label;
  return spec.label + ". " + spec.explanation;
}

TripletRecord augment_labels(const ClassificationExample& ex, const std::vector<LabelSpec>& specs,
                             std::string_view uid, LabelRender mode) {
  if (uid.empty()) throw ValidationError("augment_labels: empty uid");
  if (auto msg = check(ex); !msg.empty()) throw ValidationError(ex.id + ": " + msg);

  std::unordered_map<std::string_view, const LabelSpec*> by_label;
  for (const auto& s : specs) by_label.emplace(s.label, &s);
  if (by_label.size() != ex.candidate_labels.size()) {
    throw ValidationError(ex.id + ": label specs do not match the candidate labels");
  }

  TripletRecord t;
  t.uid = std::string(uid);
  t.input_text = ex.input_text;
  for (std::size_t k = 0; k < ex.candidate_labels.size(); ++k) {
    auto it = by_label.find(ex.candidate_labels[k]);
    if (it == by_label.end()) {
      throw ValidationError(ex.id + ": no label spec for \"" + ex.candidate_labels[k] + "\"");
    }
    if (mode == LabelRender::WithExplanation && it->second->explanation.empty()) {
      throw ValidationError("label \"" + it->second->label + "\" has no explanation");
    }
    std::string target = render_label(*it->second, mode);
    target += ' ';
    target += uid;
    if (k == ex.gold_index) {
      t.positive_text = std::move(target);
    } else {
      t.negative_texts.push_back(std::move(target));
    }
  }
  return t;
}

std::vector<TripletRecord> augment_task(const std::vector<ClassificationExample>& examples,
                                        const std::vector<LabelSpec>& specs, std::string_view task_name,
                                        LabelRender mode) {
  std::unordered_map<std::string, LabelSpec> by_label;
  for (const auto& s : specs) by_label.emplace(s.label, s);

  std::vector<TripletRecord> out;
  out.reserve(examples.size());
  std::vector<LabelSpec> chosen;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    chosen.clear();
    for (const auto& l : examples[i].candidate_labels) {
      auto it = by_label.find(l);
      if (it == by_label.end()) {
        throw ValidationError(examples[i].id + ": no label spec for \"" + l + "\"");
      }
      chosen.push_back(it->second);
    }
    auto t = augment_labels(examples[i], chosen, generate_uid(task_name, i), mode);
    t.source = std::string(task_name);
    out.push_back(std::move(t));
  }
  return out;
}

// Only the "entailment" explanation is the published wording; the others
// were written for this project in the same register.
const std::vector<LabelSpec>& builtin_label_specs() {
  static const std::vector<LabelSpec> specs{
      {"entailment",
       "In the context of Natural Language Inference (NLI), 'entailment' refers to a specific type of "
       "relationship between two sentences, where the truth of one sentence (the hypothesis) is logically "
       "guaranteed by the truth of another sentence (the premise)."},
      {"contradictory",
       "In the context of Natural Language Inference (NLI), 'contradictory' describes a relationship between "
       "two sentences in which the hypothesis cannot be true if the premise is true. Accepting the premise "
       "forces the hypothesis to be false."},
      {"neutral",
       "In the context of Natural Language Inference (NLI), 'neutral' describes a relationship between two "
       "sentences where the premise neither guarantees nor rules out the hypothesis. The hypothesis may be "
       "true or false given the premise."},
      {"safe",
       "In the context of content safety, 'safe' means the question and response contain no harmful material: "
       "no encouragement of violence, crime, self-harm, abuse, or dangerous activities. A safe exchange can be "
       "shared without risk of causing harm."},
      {"unsafe",
       "In the context of content safety, 'unsafe' means the question or response contains or promotes "
       "harmful material, such as instructions for crime, violence, self-harm, abuse, or other dangerous "
       "activities. An unsafe exchange could cause real harm if acted on."},
  };
  return specs;
}

std::vector<LabelSpec> builtin_specs_for(const std::vector<std::string>& labels) {
  std::vector<LabelSpec> out;
  for (const auto& l : labels) {
    const auto& all = builtin_label_specs();
    auto it = std::find_if(all.begin(), all.end(), [&](const LabelSpec& s) { return s.label == l; });
    if (it == all.end()) throw ConfigError("no built-in explanation for label \"" + l + "\"");
    out.push_back(*it);
  }
  return out;
}

}  // namespace embench
