#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "embench/adapter.hpp"
#include "embench/error.hpp"
#include "embench/harness.hpp"
#include "support.hpp"

using namespace embench;
using testsupport::TempDir;
using testsupport::slurp;
using testsupport::spit;

namespace {

const std::filesystem::path kConfigs = EMBENCH_CONFIGS;
const std::filesystem::path kFixtures = EMBENCH_FIXTURES;

struct Captured {
  std::ostringstream out, err;
  CommandContext ctx;
  Captured() {
    ctx.out = &out;
    ctx.err = &err;
  }
};

void write_mock_provider(const std::filesystem::path& p) {
  spit(p, R"({"kind":"mock","dim":64})");
}

std::string manifest_json(const std::string& tasks, const std::string& provider = "\"provider.json\"") {
  return "{\"seed\": 3, \"provider\": " + provider + ", \"tasks\": [" + tasks + "]}";
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("reformulate") {
  TempDir dir;
  Captured c;
  const auto mapping = kConfigs / "mappings" / "esnli.json";
  SUBCASE("three records") {
    std::string raw;
    for (const char* l : {"entailment", "neutral", "contradiction"}) {
      raw += std::string(R"({"premise":"p","hypothesis":"h","label":")") + l + "\"}\n";
    }
    spit(dir / "raw.jsonl", raw);
    CHECK(cmd_reformulate(mapping, dir / "raw.jsonl", dir / "out.jsonl", c.ctx) == 0);
    CHECK(c.out.str().find("records: 3") != std::string::npos);
    CHECK(read_jsonl<ClassificationExample>(dir / "out.jsonl").size() == 3);
  }
  SUBCASE("unknown label is a warning") {
    spit(dir / "raw.jsonl",
         "{\"premise\":\"p\",\"hypothesis\":\"h\",\"label\":\"entailment\"}\n"
         "{\"premise\":\"p\",\"hypothesis\":\"h\",\"label\":\"maybe\"}\n"
         "{\"premise\":\"p\",\"hypothesis\":\"h\",\"label\":\"neutral\"}\n");
    CHECK(cmd_reformulate(mapping, dir / "raw.jsonl", dir / "out.jsonl", c.ctx) == 0);
    CHECK(c.out.str().find("records: 2") != std::string::npos);
    CHECK(c.out.str().find("skipped: 1") != std::string::npos);
    CHECK(c.err.str().find("record 1") != std::string::npos);
  }
  SUBCASE("missing mapping file") {
    spit(dir / "raw.jsonl", "");
    CHECK(cmd_reformulate(dir / "nope.json", dir / "raw.jsonl", dir / "out.jsonl", c.ctx) == kExitUsage);
    CHECK_FALSE(std::filesystem::exists(dir / "out.jsonl"));
  }
  SUBCASE("unreadable raw records") {
    CHECK(cmd_reformulate(mapping, dir / "missing.jsonl", dir / "out.jsonl", c.ctx) != 0);
    CHECK_FALSE(std::filesystem::exists(dir / "out.jsonl"));
  }
}

TEST_CASE("augment") {
  TempDir dir;
  Captured c;
  const auto task = kFixtures / "tasks" / "esnli.jsonl";
  const auto n = read_jsonl<ClassificationExample>(task).size();
  REQUIRE(cmd_augment(task, {}, dir / "a.jsonl", true, "esnli", c.ctx) == 0);
  auto ts = read_jsonl<TripletRecord>(dir / "a.jsonl");
  REQUIRE(ts.size() == n);
  for (const auto& t : ts) CHECK(t.negative_texts.size() == 2);

  REQUIRE(cmd_augment(task, {}, dir / "p.jsonl", false, "esnli", c.ctx) == 0);
  const std::string plain = slurp(dir / "p.jsonl");
  CHECK(plain.find("Natural Language Inference") == std::string::npos);
  CHECK(slurp(dir / "a.jsonl").find("Natural Language Inference") != std::string::npos);

  REQUIRE(cmd_augment(task, {}, dir / "a2.jsonl", true, "esnli", c.ctx) == 0);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "a2.jsonl"));

  spit(dir / "specs.json", R"([{"label":"entailment","explanation":"e"},{"label":"neutral","explanation":"n"}])");
  CHECK(cmd_augment(task, dir / "specs.json", dir / "bad.jsonl", true, "esnli", c.ctx) != 0);
}

TEST_CASE("manifest loading") {
  TempDir dir;
  write_mock_provider(dir / "provider.json");
  spit(dir / "c.jsonl", "");
  SUBCASE("no tasks") {
    spit(dir / "m.json", manifest_json(""));
    Captured c;
    CHECK(cmd_evaluate(dir / "m.json", c.ctx) == kExitUsage);
    CHECK(c.err.str().find("no tasks") != std::string::npos);
  }
  SUBCASE("duplicate names") {
    spit(dir / "m.json", manifest_json(R"({"task_name":"a","category":"classification","path":"c.jsonl"},
                                           {"task_name":"a","category":"classification","path":"c.jsonl"})"));
    CHECK_THROWS_AS(RunManifest::load(dir / "m.json"), ConfigError);
  }
  SUBCASE("missing file") {
    spit(dir / "m.json", manifest_json(R"({"task_name":"a","category":"classification","path":"gone.jsonl"})"));
    CHECK_THROWS_AS(RunManifest::load(dir / "m.json"), ConfigError);
  }
  SUBCASE("manifest seed reaches the provider") {
    spit(dir / "m.json", manifest_json(R"({"task_name":"a","category":"classification","path":"c.jsonl"})"));
    auto m = RunManifest::load(dir / "m.json");
    CHECK(m.provider.seed == 3);
    CHECK(m.tasks[0].path == dir / "c.jsonl");
  }
}

TEST_CASE("evaluate with the mock provider stays near chance") {
  TempDir dir;
  write_mock_provider(dir / "provider.json");
  std::vector<ClassificationExample> cs;
  for (int i = 0; i < 3000; ++i) cs.push_back({"c" + std::to_string(i), "input " + std::to_string(i), {"entailment", "contradictory", "neutral"}, static_cast<std::size_t>(i % 3)});
  std::vector<RerankingExample> rs;
  for (int i = 0; i < 2000; ++i) rs.push_back({"r" + std::to_string(i), "query " + std::to_string(i), {"good " + std::to_string(i)}, {"bad " + std::to_string(i)}});
  write_jsonl(dir / "c.jsonl", cs);
  write_jsonl(dir / "r.jsonl", rs);
  spit(dir / "m.json", manifest_json(R"({"task_name":"cls","category":"classification","path":"c.jsonl"},
                                         {"task_name":"rr","category":"reranking","path":"r.jsonl"})"));
  Captured c;
  c.ctx.output_dir = dir / "out";
  REQUIRE(cmd_evaluate(dir / "m.json", c.ctx) == 0);
  auto lines = slurp(dir / "out" / "results.jsonl");
  std::istringstream in(lines);
  std::string line;
  std::vector<Json> rows;
  while (std::getline(in, line)) rows.push_back(Json::parse(line));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["task_name"] == "cls");
  CHECK(rows[0]["value"].get<double>() >= 0.303);
  CHECK(rows[0]["value"].get<double>() <= 0.363);
  CHECK(rows[1]["value"].get<double>() >= 0.73);
  CHECK(rows[1]["value"].get<double>() <= 0.77);
  const std::string table = slurp(dir / "out" / "results.txt");
  CHECK(table.find("Task") != std::string::npos);
  CHECK(table.find("Random") != std::string::npos);
  CHECK(table.find("33.3") != std::string::npos);
  CHECK(table.find("75") != std::string::npos);

  // idempotent, and independent of the worker count
  Captured again;
  again.ctx.output_dir = dir / "out2";
  again.ctx.jobs = 4;
  REQUIRE(cmd_evaluate(dir / "m.json", again.ctx) == 0);
  CHECK(slurp(dir / "out" / "results.jsonl") == slurp(dir / "out2" / "results.jsonl"));
  CHECK(slurp(dir / "out" / "results.txt") == slurp(dir / "out2" / "results.txt"));
}

TEST_CASE("one task missing vectors is a partial failure") {
  TempDir dir;
  std::vector<BitextExample> good{{"0", "s0", "t0"}, {"1", "s1", "t1"}};
  std::vector<BitextExample> bad{{"0", "s0", "t0"}, {"1", "s1", "unknown"}};
  write_jsonl(dir / "good.jsonl", good);
  write_jsonl(dir / "bad.jsonl", bad);
  VectorStore store(2);
  store.add("s0", std::vector<float>{1, 0});
  store.add("t0", std::vector<float>{1, 0});
  store.add("s1", std::vector<float>{0, 1});
  store.add("t1", std::vector<float>{0, 1});
  store.save(dir / "vec.bin");
  spit(dir / "m.json", manifest_json(R"({"task_name":"good","category":"bitext_mining","path":"good.jsonl"},
                                         {"task_name":"bad","category":"bitext_mining","path":"bad.jsonl"})",
                                     R"({"kind":"precomputed","path":"vec.bin"})"));
  Captured c;
  c.ctx.output_dir = dir / "out";
  CHECK(cmd_evaluate(dir / "m.json", c.ctx) == kExitPartial);
  const std::string results = slurp(dir / "out" / "results.jsonl");
  CHECK(results.find(R"("status":"ok","task_name":"good","value":1.0)") != std::string::npos);
  CHECK(results.find(R"("status":"failed")") != std::string::npos);
  CHECK(c.err.str().find("unknown") != std::string::npos);
  CHECK(slurp(dir / "out" / "results.txt").find("FAILED") != std::string::npos);
}

TEST_CASE("train-adapter") {
  TempDir dir;
  write_mock_provider(dir / "provider.json");
  Captured c;
  c.ctx.provider_config = dir / "provider.json";
  const auto triplets = kFixtures / "triplets" / "esnli.jsonl";
  SUBCASE("zero steps writes the initialization") {
    spit(dir / "t.json", R"({"steps":0})");
    REQUIRE(cmd_train_adapter(triplets, dir / "t.json", dir / "a.ckpt", c.ctx) == 0);
    CHECK(load_checkpoint(dir / "a.ckpt") == AdapterParams::identity(64, 64));
    CHECK(std::filesystem::exists(dir / "a.history.jsonl"));
  }
  SUBCASE("loss decreases on separable triplets") {
    spit(dir / "t.json", R"({"steps":150,"batch_size":4,"learning_rate":0.5,"temperature":0.1,"lr_schedule":"constant"})");
    REQUIRE(cmd_train_adapter(triplets, dir / "t.json", dir / "a.ckpt", c.ctx) == 0);
    std::istringstream in(slurp(dir / "a.history.jsonl"));
    std::string line;
    std::vector<double> losses;
    while (std::getline(in, line)) losses.push_back(Json::parse(line)["loss"].get<double>());
    REQUIRE(losses.size() == 150);
    double head = 0, tail = 0;
    for (int i = 0; i < 10; ++i) {
      head += losses[i];
      tail += losses[140 + i];
    }
    CHECK(tail < head);
    CHECK(c.out.str().find("first loss") != std::string::npos);
    CHECK(c.out.str().find("last loss") != std::string::npos);
  }
  SUBCASE("corrupt triplet file names the line") {
    spit(dir / "t.json", R"({"steps":1})");
    std::string text = slurp(triplets);
    text += "{\"uid\": broken\n";
    spit(dir / "bad.jsonl", text);
    const auto n = read_jsonl<TripletRecord>(triplets).size();
    CHECK(cmd_train_adapter(dir / "bad.jsonl", dir / "t.json", dir / "a.ckpt", c.ctx) == kExitUsage);
    CHECK(c.err.str().find(":" + std::to_string(n + 1) + ":") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir / "a.ckpt"));
  }
  SUBCASE("provider config is required") {
    spit(dir / "t.json", R"({"steps":1})");
    Captured bare;
    CHECK(cmd_train_adapter(triplets, dir / "t.json", dir / "a.ckpt", bare.ctx) == kExitUsage);
  }
}

TEST_CASE("baseline") {
  TempDir dir;
  write_mock_provider(dir / "provider.json");
  std::vector<ClassificationExample> cs{{"c", "x", {"a", "b", "c"}, 0}};
  std::vector<RerankingExample> rs{{"r", "q", {"p"}, {"n"}}};
  std::vector<BitextExample> bs;
  for (int i = 0; i < 400; ++i) bs.push_back({std::to_string(i), "s" + std::to_string(i), "t" + std::to_string(i)});
  write_jsonl(dir / "c.jsonl", cs);
  write_jsonl(dir / "r.jsonl", rs);
  write_jsonl(dir / "b.jsonl", bs);
  spit(dir / "m.json", manifest_json(R"({"task_name":"cls","category":"classification","path":"c.jsonl"},
                                         {"task_name":"rr","category":"reranking","path":"r.jsonl"},
                                         {"task_name":"bt","category":"bitext_mining","path":"b.jsonl"})"));
  Captured c;
  REQUIRE(cmd_baseline(dir / "m.json", c.ctx) == 0);
  const std::string out = c.out.str();
  CHECK(out.find("| 33.3\n") != std::string::npos);
  CHECK(out.find("| 75\n") != std::string::npos);
  CHECK(out.find("| 0.25\n") != std::string::npos);
}

TEST_CASE("validate command") {
  Captured c;
  CHECK(cmd_validate(kFixtures / "tasks" / "shp.jsonl", "reranking", c.ctx) == 0);
  CHECK(cmd_validate(kFixtures / "tasks" / "rarb_reasoning", "retrieval", c.ctx) == 0);
  CHECK(cmd_validate(kFixtures / "triplets" / "mnli.jsonl", "triplets", c.ctx) == 0);
  CHECK(cmd_validate(kFixtures / "tasks" / "shp.jsonl", "classification", c.ctx) == kExitUsage);
  CHECK(cmd_validate(kFixtures / "tasks" / "shp.jsonl", "nonsense", c.ctx) == kExitUsage);
}

TEST_CASE("report formatting") {
  CHECK(format_percent(1.0 / 3.0) == "33.3");
  CHECK(format_percent(0.75) == "75");
  CHECK(format_percent(0.0025) == "0.25");
  EvalReport r;
  r.task_name = "x,y";
  r.metric_name = "accuracy";
  r.value = 0.5;
  CHECK(format_csv({r}).find("\"x,y\"") != std::string::npos);
}

TEST_CASE("command line binary") {
  TempDir dir;
  const std::string cli = EMBENCH_CLI;
  auto run = [&](const std::string& args) {
    const int rc = std::system((cli + " " + args + " >" + (dir / "out.txt").string() + " 2>&1").c_str());
    return WEXITSTATUS(rc);
  };
  CHECK(run("--help") == 0);
  CHECK(run("") == kExitUsage);
  CHECK(run("frobnicate") == kExitUsage);
  CHECK(run("validate " + (kFixtures / "tasks" / "europarl.jsonl").string() + " --category bitext_mining") == 0);
  CHECK(run("baseline " + (kFixtures / "manifest.json").string() + " --format jsonl") == 0);
  CHECK(slurp(dir / "out.txt").find("\"random_baseline\"") != std::string::npos);
  CHECK(run("evaluate " + (kFixtures / "manifest.json").string() + " --seed 4 --jobs 2 --output-dir " +
            (dir / "res").string() + " --format csv") == 0);
  CHECK(std::filesystem::exists(dir / "res" / "results.csv"));
}

}  // TEST_SUITE
