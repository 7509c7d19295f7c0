#include <doctest.h>

#include <cmath>
#include <cstring>

#include "embench/error.hpp"
#include "embench/metrics.hpp"
#include "support.hpp"

using namespace embench;
using testsupport::TempDir;

TEST_SUITE("embedding") {

TEST_CASE("mock embeddings are deterministic unit vectors") {
  CHECK(mock_embed("a", 4, 0) == mock_embed("a", 4, 0));
  CHECK(mock_embed("a", 4, 0) != mock_embed("b", 4, 0));
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    auto e = mock_embed(testsupport::random_text(rng), 2 + rng.below(300), rng.next());
    CHECK(std::fabs(l2_norm(e.values) - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(mock_embed("a", 1, 0), ProviderError);
}

TEST_CASE("mock seeds give near-orthogonal vectors") {
  CHECK(std::fabs(cosine(mock_embed("a", 256, 0), mock_embed("a", 256, 1))) < 0.2);
  // Over 1000 texts the per-text bound is a 3.2 sigma event (sigma = 1/16),
  // so a handful of exceedances is expected; measured 1..3 across seeds.
  for (auto [s1, s2] : {std::pair<std::uint64_t, std::uint64_t>{0, 1}, {7, 99}}) {
    int over = 0;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const std::string t = "text number " + std::to_string(i);
      const double c = std::fabs(cosine(mock_embed(t, 256, s1), mock_embed(t, 256, s2)));
      over += c >= 0.2;
      worst = std::max(worst, c);
    }
    CHECK(over <= 10);
    CHECK(worst < 0.3);
  }
}

TEST_CASE("mock mean pairwise cosine is near zero") {
  std::vector<Embedding> es;
  for (int i = 0; i < 1000; ++i) es.push_back(mock_embed("doc " + std::to_string(i), 256, 0));
  auto m = similarity_matrix(es, es);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < es.size(); ++i) {
    for (std::size_t j = i + 1; j < es.size(); ++j, ++n) sum += m.at(i, j);
  }
  CHECK(std::fabs(sum / static_cast<double>(n)) < 0.02);
}

TEST_CASE("batch composition does not change outputs") {
  TempDir dir;
  VectorStore store(8);
  Rng rng(9);
  std::vector<std::string> texts;
  for (int i = 0; i < 40; ++i) {
    texts.push_back("t" + std::to_string(i));
    store.add(texts.back(), testsupport::random_vector(rng, 8));
  }
  store.save(dir / "v.bin");
  auto pre = std::make_shared<PrecomputedProvider>(std::make_shared<VectorStore>(load_precomputed(dir / "v.bin")), true);
  MockProvider mock(16, 4);
  for (const EmbeddingProvider* p : {static_cast<const EmbeddingProvider*>(pre.get()), static_cast<const EmbeddingProvider*>(&mock)}) {
    auto all = p->embed_batch(texts);
    std::vector<std::string> shuffled = texts;
    rng.shuffle(shuffled);
    auto mixed = p->embed_batch(shuffled);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      CHECK(all[i] == p->embed(texts[i]));
      auto pos = std::find(shuffled.begin(), shuffled.end(), texts[i]) - shuffled.begin();
      CHECK(mixed[static_cast<std::size_t>(pos)] == all[i]);
    }
    // duplicates in one batch
    std::vector<std::string> dup{texts[0], texts[1], texts[0]};
    auto d = p->embed_batch(dup);
    CHECK(d[0] == d[2]);
  }
}

TEST_CASE("vector file round trip is bit exact") {
  TempDir dir;
  Rng rng(21);
  VectorStore store(32);
  for (int i = 0; i < 100; ++i) store.add("key-" + std::to_string(i), testsupport::random_vector(rng, 32));
  store.save(dir / "v.bin");
  auto back = load_precomputed(dir / "v.bin");
  CHECK(back.dim() == 32);
  REQUIRE(back.size() == 100);
  for (const auto& k : store.keys()) {
    REQUIRE(back.find(k) != nullptr);
    CHECK(std::memcmp(back.find(k), store.find(k), 32 * sizeof(float)) == 0);
  }
}

TEST_CASE("vector file errors") {
  TempDir dir;
  SUBCASE("three rows of dim 8") {
    std::string text;
    for (int i = 0; i < 3; ++i) text += R"({"key":"k)" + std::to_string(i) + R"(","vector":[1,2,3,4,5,6,7,8]})" "\n";
    testsupport::spit(dir / "v.jsonl", text);
    auto s = load_precomputed(dir / "v.jsonl");
    CHECK(s.size() == 3);
    CHECK(s.dim() == 8);
  }
  SUBCASE("nan names the row") {
    testsupport::spit(dir / "v.jsonl", "{\"key\":\"a\",\"vector\":[1,2]}\n{\"key\":\"b\",\"vector\":[1,null]}\n");
    try {
      load_precomputed(dir / "v.jsonl");
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
  }
  SUBCASE("nan in the binary format") {
    VectorStore s(2);
    s.add("a", std::vector<float>{1.0f, 2.0f});
    s.add("b", std::vector<float>{3.0f, 4.0f});
    s.save(dir / "v.bin");
    std::string bytes = testsupport::slurp(dir / "v.bin");
    const float nan = std::nanf("");
    std::memcpy(bytes.data() + bytes.size() - sizeof(float), &nan, sizeof nan);
    testsupport::spit(dir / "v.bin", bytes);
    CHECK_THROWS_AS(load_precomputed(dir / "v.bin"), ValidationError);
  }
  SUBCASE("ragged rows") {
    testsupport::spit(dir / "v.jsonl", "{\"key\":\"a\",\"vector\":[1,2]}\n{\"key\":\"b\",\"vector\":[1,2,3]}\n");
    CHECK_THROWS_AS(load_precomputed(dir / "v.jsonl"), ValidationError);
  }
  SUBCASE("duplicate keys") {
    testsupport::spit(dir / "v.jsonl", "{\"key\":\"a\",\"vector\":[1,2]}\n{\"key\":\"a\",\"vector\":[1,3]}\n");
    CHECK_THROWS_AS(load_precomputed(dir / "v.jsonl"), ValidationError);
  }
  SUBCASE("truncated binary") {
    VectorStore s(4);
    s.add("a", std::vector<float>{1, 2, 3, 4});
    s.save(dir / "v.bin");
    std::string bytes = testsupport::slurp(dir / "v.bin");
    testsupport::spit(dir / "v.bin", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_precomputed(dir / "v.bin"), ValidationError);
  }
}

TEST_CASE("precomputed miss names the key") {
  auto store = std::make_shared<VectorStore>(2);
  store->add("present", std::vector<float>{1, 0});
  PrecomputedProvider p(store, true);
  std::vector<std::string> texts{"present", "absent text"};
  try {
    p.embed_batch(texts);
    FAIL("expected an error");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("absent text") != std::string::npos);
  }
}

TEST_CASE("cache is transparent") {
  auto mock = std::make_shared<MockProvider>(12, 5);
  CachingProvider cache(mock);
  std::vector<std::string> texts{"a", "b", "a", "c"};
  auto first = cache.embed_batch(texts);
  CHECK(cache.misses() == 3);
  auto second = cache.embed_batch(texts);
  CHECK(cache.misses() == 3);
  CHECK(first == second);
  CHECK(first == mock->embed_batch(texts));
}

TEST_CASE("provider config") {
  Json j = Json::parse(R"({"kind":"precomputed","path":"vec.bin","normalize":false})");
  auto cfg = ProviderConfig::from_json(j, "/data");
  CHECK(cfg.path == std::filesystem::path("/data/vec.bin"));
  CHECK_FALSE(cfg.normalize);
  CHECK_THROWS_AS(ProviderConfig::from_json(Json::parse(R"({"kind":"mock","batch_size":0})")), ConfigError);
  CHECK_THROWS_AS(ProviderConfig::from_json(Json::parse(R"({"kind":"teleport"})")), ConfigError);
  CHECK_THROWS_AS(ProviderConfig::from_json(Json::parse(R"({"kind":"remote"})")), ConfigError);
}

TEST_CASE("precomputed dimension must match config") {
  TempDir dir;
  VectorStore s(4);
  s.add("a", std::vector<float>{1, 2, 3, 4});
  s.save(dir / "v.bin");
  ProviderConfig cfg;
  cfg.kind = ProviderKind::Precomputed;
  cfg.path = dir / "v.bin";
  cfg.dim = 5;
  CHECK_THROWS_AS(make_provider(cfg), ProviderError);
  cfg.dim = 4;
  CHECK(make_provider(cfg)->dim() == 4);
}

}  // TEST_SUITE
