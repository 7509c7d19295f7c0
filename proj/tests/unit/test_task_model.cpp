#include <doctest.h>

#include <unordered_set>

#include "embench/error.hpp"
#include "embench/task_model.hpp"
#include "support.hpp"

using namespace embench;
using testsupport::TempDir;
using testsupport::random_text;
using testsupport::spit;

TEST_SUITE("task_model") {

TEST_CASE("uid is deterministic and fixed width") {
  CHECK(generate_uid("esnli", 0) == generate_uid("esnli", 0));
  CHECK(generate_uid("esnli", 0) != generate_uid("esnli", 1));
  // Frozen from an independent FNV-1a 64 implementation of "esnli:7".
  CHECK(generate_uid("esnli", 7) == "01a9fb3dbce7b659");
  CHECK(generate_uid("esnli", 0) == "01a9fc3dbce7b80c");
  CHECK(generate_uid("x", 123456789).size() == 16);
  CHECK_THROWS_AS(generate_uid("", 0), ValidationError);
}

TEST_CASE("uid is injective over a million indices") {
  std::unordered_set<std::string> seen;
  seen.reserve(1'000'000);
  for (std::uint64_t i = 0; i < 1'000'000; ++i) seen.insert(generate_uid("mnli", i));
  CHECK(seen.size() == 1'000'000);
}

TEST_CASE("category names round trip") {
  for (auto c : {TaskCategory::Classification, TaskCategory::Reranking, TaskCategory::Retrieval,
                 TaskCategory::PairwiseClassification, TaskCategory::BitextMining}) {
    CHECK(parse_category(to_string(c)) == c);
  }
  CHECK_THROWS(parse_category("regression"));
  CHECK(default_metric(TaskCategory::Reranking) == "map");
  CHECK(default_metric(TaskCategory::Retrieval) == "ndcg_at_10");
}

TEST_CASE("json round trip over random records") {
  Rng rng(11);
  for (int iter = 0; iter < 300; ++iter) {
    ClassificationExample c{random_text(rng), random_text(rng), {"l0" + random_text(rng), "l1" + random_text(rng)}, rng.below(2)};
    CHECK(from_json<ClassificationExample>(Json::parse(to_json(c).dump())) == c);

    RerankingExample r{random_text(rng), random_text(rng), {"p" + random_text(rng)}, {"n" + random_text(rng), "m" + random_text(rng)}};
    CHECK(from_json<RerankingExample>(Json::parse(to_json(r).dump())) == r);

    PairExample p{random_text(rng), random_text(rng), random_text(rng), rng.below(2) == 1};
    CHECK(from_json<PairExample>(Json::parse(to_json(p).dump())) == p);

    BitextExample b{random_text(rng), random_text(rng), random_text(rng)};
    CHECK(from_json<BitextExample>(Json::parse(to_json(b).dump())) == b);

    TripletRecord t{generate_uid("rt", rng.next()), random_text(rng), "pos", {"neg a", "neg b"}, iter % 2 ? "src" : ""};
    CHECK(from_json<TripletRecord>(Json::parse(to_json(t).dump())) == t);
  }
}

TEST_CASE("files round trip, retrieval included") {
  TempDir dir;
  Rng rng(5);
  std::vector<ClassificationExample> xs;
  for (int i = 0; i < 50; ++i) {
    xs.push_back({"id-" + std::to_string(i), random_text(rng), {"yes", "no", "maybe"}, rng.below(3)});
  }
  write_jsonl(dir / "c.jsonl", xs);
  CHECK(read_jsonl<ClassificationExample>(dir / "c.jsonl") == xs);

  RetrievalTask t;
  for (int i = 0; i < 5; ++i) {
    t.queries.push_back({"q" + std::to_string(i), random_text(rng)});
    t.corpus.push_back({"d" + std::to_string(i), random_text(rng)});
    t.qrels["q" + std::to_string(i)] = {"d" + std::to_string(i), "d0"};
  }
  const auto paths = RetrievalPaths::in_directory(dir.path());
  write_retrieval_task(paths, t);
  CHECK(read_retrieval_task(paths) == t);
}

TEST_CASE("record invariants") {
  CHECK(check(ClassificationExample{"a", "text", {"x", "y"}, 1}).empty());
  CHECK_FALSE(check(ClassificationExample{"a", "text", {"x", "y"}, 2}).empty());
  CHECK_FALSE(check(ClassificationExample{"a", "text", {"x", "x"}, 0}).empty());
  CHECK_FALSE(check(ClassificationExample{"a", "", {"x", "y"}, 0}).empty());
  CHECK_FALSE(check(ClassificationExample{"a", "t", {"x"}, 0}).empty());

  CHECK(check(RerankingExample{"r", "q", {"p"}, {"n"}}).empty());
  CHECK_FALSE(check(RerankingExample{"r", "q", {"same"}, {"same"}}).empty());
  CHECK_FALSE(check(RerankingExample{"r", "q", {}, {"n"}}).empty());

  CHECK_FALSE(check(PairExample{"p", "", "b", true}).empty());
  CHECK_FALSE(check(BitextExample{"b", "s", ""}).empty());

  const std::string uid = generate_uid("d", 0);
  CHECK(check(TripletRecord{uid, "in", "yes " + uid, {"no " + uid}, ""}).empty());
  CHECK_FALSE(check(TripletRecord{uid, "in", "yes " + uid, {"no"}, ""}).empty());
  CHECK_FALSE(check(TripletRecord{uid, "in", "yes " + uid, {"yes " + uid}, ""}).empty());
  CHECK_FALSE(check(TripletRecord{uid, "in", "yes " + uid, {"no " + uid, "no " + uid}, ""}).empty());
  CHECK_FALSE(check(TripletRecord{uid, "in", "yes " + uid, {}, ""}).empty());

  RetrievalTask t;
  t.queries = {{"q0", "question"}};
  t.corpus = {{"d0", "answer"}};
  t.qrels["q0"] = {"d0"};
  CHECK(check(t).empty());
  t.qrels["q0"] = {"d9"};
  auto errs = check(t);
  REQUIRE_FALSE(errs.empty());
  CHECK(errs.front().find("d9") != std::string::npos);
}

TEST_CASE("validator") {
  TempDir dir;
  SUBCASE("empty file has zero records") {
    spit(dir / "e.jsonl", "");
    auto v = validate_task_file(dir / "e.jsonl", TaskCategory::Classification);
    CHECK(v.ok());
    CHECK(v.count == 0);
  }
  SUBCASE("one good line") {
    spit(dir / "g.jsonl", to_json(ClassificationExample{"a", "x", {"p", "q"}, 0}).dump() + "\n");
    auto v = validate_task_file(dir / "g.jsonl", TaskCategory::Classification);
    CHECK(v.ok());
    CHECK(v.count == 1);
  }
  SUBCASE("every bad line is reported") {
    std::string text;
    text += to_json(ClassificationExample{"a", "x", {"p", "q"}, 0}).dump() + "\n";
    text += "{not json\n";
    text += to_json(ClassificationExample{"a", "y", {"p", "q"}, 1}).dump() + "\n";
    text += to_json(ClassificationExample{"c", "z", {"p", "q"}, 5}).dump() + "\n";
    text += R"({"id":"d"})" "\n";
    spit(dir / "b.jsonl", text);
    auto v = validate_task_file(dir / "b.jsonl", TaskCategory::Classification);
    CHECK_FALSE(v.ok());
    std::vector<std::size_t> lines;
    for (const auto& x : v.violations) lines.push_back(x.line);
    CHECK(lines == std::vector<std::size_t>{2, 3, 4, 5});
  }
  SUBCASE("retrieval with a dangling qrel names the id") {
    RetrievalTask t;
    t.queries = {{"q0", "question"}};
    t.corpus = {{"d0", "answer"}};
    t.qrels["q0"] = {"d0"};
    write_retrieval_task(RetrievalPaths::in_directory(dir.path()), t);
    spit(dir / "qrels.jsonl", R"({"query_id":"q0","doc_ids":["d0","missing-doc"]})" "\n");
    auto v = validate_task_file(dir.path(), TaskCategory::Retrieval);
    REQUIRE_FALSE(v.ok());
    CHECK(v.violations.front().message.find("missing-doc") != std::string::npos);
  }
  SUBCASE("empty retrieval task is valid") {
    write_retrieval_task(RetrievalPaths::in_directory(dir.path()), RetrievalTask{});
    auto v = validate_task_file(dir.path(), TaskCategory::Retrieval);
    CHECK(v.ok());
    CHECK(v.count == 0);
  }
  SUBCASE("duplicate triplet uids") {
    const std::string uid = generate_uid("d", 0);
    TripletRecord t{uid, "in", "yes " + uid, {"no " + uid}, ""};
    write_jsonl(dir / "t.jsonl", std::vector<TripletRecord>{t, t});
    auto v = validate_triplet_file(dir / "t.jsonl");
    REQUIRE(v.violations.size() == 1);
    CHECK(v.violations.front().line == 2);
  }
}

TEST_CASE("label specs accept both layouts") {
  TempDir dir;
  spit(dir / "a.json", R"([{"label":"x","explanation":"ex"}])");
  spit(dir / "b.json", R"({"label_specs":[{"label":"x","explanation":"ex"}]})");
  CHECK(read_label_specs(dir / "a.json") == read_label_specs(dir / "b.json"));
  CHECK(read_label_specs(dir / "a.json").front().explanation == "ex");
}

}  // TEST_SUITE
