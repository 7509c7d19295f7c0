#include "embench/adapter.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <unordered_map>

#include "embench/error.hpp"
#include "embench/random.hpp"

namespace embench {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', 'A'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) return false;
  v = static_cast<std::uint32_t>(buf[0]) | static_cast<std::uint32_t>(buf[1]) << 8 |
      static_cast<std::uint32_t>(buf[2]) << 16 | static_cast<std::uint32_t>(buf[3]) << 24;
  return true;
}

// Projected vectors of one batch plus the intermediates the backward pass
// needs.
struct Projected {
  std::vector<const std::vector<double>*> inputs;
  std::vector<std::vector<double>> unit;  // u = z / |z|
  std::vector<double> norm;               // |z|
};

std::size_t push_input(Projected& p, const std::vector<double>& x) {
  p.inputs.push_back(&x);
  return p.inputs.size() - 1;
}

void project_all(Projected& p, const AdapterParams& params) {
  const std::size_t n = p.inputs.size();
  p.unit.assign(n, std::vector<double>(params.d_out));
  p.norm.assign(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    const auto& x = *p.inputs[v];
    if (x.size() != params.d_in) {
      throw ValidationError("embedding dimension " + std::to_string(x.size()) + " != adapter d_in " +
                            std::to_string(params.d_in));
    }
    auto& u = p.unit[v];
    double sq = 0.0;
    for (std::size_t r = 0; r < params.d_out; ++r) {
      double z = params.b[r];
      const double* wr = params.W.data() + r * params.d_in;
      for (std::size_t c = 0; c < params.d_in; ++c) z += wr[c] * x[c];
      u[r] = z;
      sq += z * z;
    }
    const double nrm = std::sqrt(sq);
    if (!(nrm > 0.0)) throw ProviderError("adapter projection produced a zero vector");
    for (auto& z : u) z /= nrm;
    p.norm[v] = nrm;
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// One softmax cross-entropy term over pair scores u_a.u_b / tau where
// pairs[0] is the positive. Adds weight * loss to `loss` and the gradient
// w.r.t. the unit vectors into `g_unit`.
void softmax_term(const Projected& p, const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double tau,
                  double weight, double& loss, std::vector<std::vector<double>>* g_unit) {
  std::vector<double> logits(pairs.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    logits[k] = dot(p.unit[pairs[k].first], p.unit[pairs[k].second]) / tau;
    mx = std::max(mx, logits[k]);
  }
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  loss += weight * (lse - logits[0]);
  if (!g_unit) return;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double g = weight * (std::exp(logits[k] - lse) - (k == 0 ? 1.0 : 0.0)) / tau;
    if (g == 0.0) continue;
    const auto [a, b] = pairs[k];
    auto& ga = (*g_unit)[a];
    auto& gb = (*g_unit)[b];
    const auto& ua = p.unit[a];
    const auto& ub = p.unit[b];
    for (std::size_t r = 0; r < ua.size(); ++r) {
      ga[r] += g * ub[r];
      gb[r] += g * ua[r];
    }
  }
}

// Deterministic batch order. Each epoch shuffles every group, cuts it into
// batches and shuffles the batch list.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::vector<std::size_t>> groups, std::size_t batch_size, std::uint64_t seed)
      : groups_(std::move(groups)), batch_size_(batch_size), rng_(seed) {}

  const std::vector<std::size_t>& next() {
    if (cursor_ == batches_.size()) refill();
    return batches_[cursor_++];
  }

 private:
  void refill() {
    batches_.clear();
    cursor_ = 0;
    for (auto& g : groups_) {
      rng_.shuffle(g);
      for (std::size_t s = 0; s < g.size(); s += batch_size_) {
        batches_.emplace_back(g.begin() + static_cast<long>(s),
                              g.begin() + static_cast<long>(std::min(g.size(), s + batch_size_)));
      }
    }
    rng_.shuffle(batches_);
  }

  std::vector<std::vector<std::size_t>> groups_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t cursor_ = 0;
};

}  // namespace

// --- params -------------------------------------------------------------------

void AdapterParams::validate() const {
  if (d_out < 2) throw ValidationError("adapter d_out must be >= 2");
  if (d_in < 1) throw ValidationError("adapter d_in must be >= 1");
  if (W.size() != d_in * d_out || b.size() != d_out) throw ValidationError("adapter parameter shape mismatch");
  for (double x : W) {
    if (!std::isfinite(x)) throw ValidationError("non-finite adapter weight");
  }
  for (double x : b) {
    if (!std::isfinite(x)) throw ValidationError("non-finite adapter bias");
  }
}

AdapterParams AdapterParams::identity(std::size_t d_in, std::size_t d_out) {
  AdapterParams p(d_in, d_out);
  for (std::size_t i = 0; i < std::min(d_in, d_out); ++i) p.w(i, i) = 1.0;
  return p;
}

AdapterParams AdapterParams::random(std::size_t d_in, std::size_t d_out, std::uint64_t seed) {
  AdapterParams p(d_in, d_out);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (auto& w : p.W) w = rng.normal() * scale;
  return p;
}

Embedding project(const AdapterParams& params, const Embedding& e) {
  if (e.dim() != params.d_in) {
    throw ValidationError("project: embedding dimension " + std::to_string(e.dim()) + " != d_in " +
                          std::to_string(params.d_in));
  }
  std::vector<double> z(params.d_out);
  double sq = 0.0;
  for (std::size_t r = 0; r < params.d_out; ++r) {
    double acc = params.b[r];
    for (std::size_t c = 0; c < params.d_in; ++c) acc += params.w(r, c) * e.values[c];
    z[r] = acc;
    sq += acc * acc;
  }
  const double n = std::sqrt(sq);
  if (!(n > 0.0)) throw ProviderError("project: zero vector before normalization");
  Embedding out;
  out.values.resize(params.d_out);
  for (std::size_t r = 0; r < params.d_out; ++r) out.values[r] = static_cast<float>(z[r] / n);
  return out;
}

void save_checkpoint(const fs::path& path, const AdapterParams& params) {
  params.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(params.d_in));
  put_u32(out, static_cast<std::uint32_t>(params.d_out));
  for (double w : params.W) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(w)));
  for (double b : params.b) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(b)));
  if (!out) throw Error("write failed: " + path.string());
}

AdapterParams load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError(path.string() + ": not an adapter checkpoint");
  }
  std::uint32_t version = 0, d_in = 0, d_out = 0;
  if (!get_u32(in, version) || !get_u32(in, d_in) || !get_u32(in, d_out)) {
    throw ValidationError(path.string() + ": truncated header");
  }
  if (version != kVersion) throw ValidationError(path.string() + ": unsupported version");
  AdapterParams p(d_in, d_out);
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::uint32_t bits = 0;
    if (!get_u32(in, bits)) throw ValidationError(path.string() + ": truncated parameters");
    p.param(i) = std::bit_cast<float>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError(path.string() + ": trailing bytes");
  p.validate();
  return p;
}

AdapterProvider::AdapterProvider(std::shared_ptr<const EmbeddingProvider> base, AdapterParams params)
    : base_(std::move(base)), params_(std::move(params)) {
  params_.validate();
  if (base_->dim() != params_.d_in) {
    throw ConfigError("adapter d_in " + std::to_string(params_.d_in) + " does not match provider dim " +
                      std::to_string(base_->dim()));
  }
}

std::vector<Embedding> AdapterProvider::embed_batch(std::span<const std::string> texts) const {
  auto base = base_->embed_batch(texts);
  std::vector<Embedding> out;
  out.reserve(base.size());
  for (const auto& e : base) out.push_back(project(params_, e));
  return out;
}

// --- config -------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (warmup_steps > steps) throw ConfigError("warmup_steps must not exceed steps");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (d_out == 1) throw ConfigError("d_out must be >= 2");
}

double TrainConfig::lr_at(std::size_t t) const {
  if (t < warmup_steps) return learning_rate * static_cast<double>(t + 1) / static_cast<double>(warmup_steps);
  if (lr_schedule == LrSchedule::Constant) return learning_rate;
  return learning_rate * static_cast<double>(steps - t) / static_cast<double>(steps - warmup_steps);
}

TrainConfig TrainConfig::from_json(const Json& j) {
  try {
    TrainConfig c;
    c.temperature = j.value("temperature", c.temperature);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.bidirectional = j.value("bidirectional", c.bidirectional);
    c.in_batch_negatives = j.value("in_batch_negatives", c.in_batch_negatives);
    c.unmixed_batches = j.value("unmixed_batches", c.unmixed_batches);
    c.seed = j.value("seed", c.seed);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.momentum = j.value("momentum", c.momentum);
    c.d_out = j.value("d_out", c.d_out);
    c.embed_batch_size = j.value("embed_batch_size", c.embed_batch_size);
    const std::string sched = j.value("lr_schedule", std::string("linear_decay"));
    if (sched == "constant") {
      c.lr_schedule = LrSchedule::Constant;
    } else if (sched == "linear_decay") {
      c.lr_schedule = LrSchedule::LinearDecay;
    } else {
      throw ConfigError("unknown lr_schedule \"" + sched + "\"");
    }
    const std::string init = j.value("init", std::string("identity"));
    if (init == "identity") {
      c.init = AdapterInit::Identity;
    } else if (init == "random") {
      c.init = AdapterInit::Random;
    } else {
      throw ConfigError("unknown init \"" + init + "\"");
    }
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("invalid train config: ") + e.what());
  }
}

TrainConfig TrainConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open train config " + path.string());
  try {
    return from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// --- loss ---------------------------------------------------------------------

LossAndGrad contrastive_loss(std::span<const TripletEmbeddings> batch, const AdapterParams& params,
                             const TrainConfig& cfg, bool with_grad) {
  if (!(cfg.temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (batch.empty()) throw ValidationError("contrastive_loss: empty batch");

  Projected p;
  const std::size_t B = batch.size();
  std::vector<std::size_t> q(B), pos(B);
  std::vector<std::vector<std::size_t>> neg(B);
  for (std::size_t i = 0; i < B; ++i) {
    if (batch[i].negatives.empty()) throw ValidationError("contrastive_loss: triplet without negatives");
    q[i] = push_input(p, batch[i].query);
    pos[i] = push_input(p, batch[i].positive);
    for (const auto& n : batch[i].negatives) neg[i].push_back(push_input(p, n));
  }
  project_all(p, params);

  std::vector<std::vector<double>> g_unit;
  if (with_grad) g_unit.assign(p.inputs.size(), std::vector<double>(params.d_out, 0.0));
  auto* g = with_grad ? &g_unit : nullptr;

  const double direction_weight = cfg.bidirectional ? 0.5 : 1.0;
  const double weight = direction_weight / static_cast<double>(B);
  double loss = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < B; ++i) {
    pairs.assign(1, {q[i], pos[i]});
    for (std::size_t n : neg[i]) pairs.emplace_back(q[i], n);
    if (cfg.in_batch_negatives) {
      for (std::size_t o = 0; o < B; ++o) {
        if (o != i) pairs.emplace_back(q[i], pos[o]);
      }
    }
    softmax_term(p, pairs, cfg.temperature, weight, loss, g);

    if (cfg.bidirectional) {
      pairs.assign(1, {pos[i], q[i]});
      for (std::size_t n : neg[i]) pairs.emplace_back(q[i], n);
      if (cfg.in_batch_negatives) {
        for (std::size_t o = 0; o < B; ++o) {
          if (o != i) pairs.emplace_back(pos[i], q[o]);
        }
      }
      softmax_term(p, pairs, cfg.temperature, weight, loss, g);
    }
  }

  LossAndGrad out{loss, AdapterParams(params.d_in, params.d_out)};
  if (!with_grad) return out;

  // Back through u = z/|z| and z = W x + b.
  std::vector<double> dz(params.d_out);
  for (std::size_t v = 0; v < p.inputs.size(); ++v) {
    const auto& u = p.unit[v];
    const auto& gu = g_unit[v];
    const double proj = dot(gu, u);
    const auto& x = *p.inputs[v];
    for (std::size_t r = 0; r < params.d_out; ++r) {
      dz[r] = (gu[r] - proj * u[r]) / p.norm[v];
      out.grad.b[r] += dz[r];
      double* gw = out.grad.W.data() + r * params.d_in;
      for (std::size_t c = 0; c < params.d_in; ++c) gw[c] += dz[r] * x[c];
    }
  }
  return out;
}

namespace {

// Forward-only loss in extended precision with parameter `index` shifted by
// `delta`. Kept separate from contrastive_loss so the gradient check does
// not share its arithmetic.
long double shifted_loss(std::span<const TripletEmbeddings> batch, const AdapterParams& params,
                         const TrainConfig& cfg, std::size_t index, long double delta) {
  using LD = long double;
  auto unit = [&](const std::vector<double>& x) {
    std::vector<LD> z(params.d_out);
    LD norm = 0;
    for (std::size_t r = 0; r < params.d_out; ++r) {
      LD acc = params.b[r];
      if (index == params.W.size() + r) acc += delta;
      for (std::size_t c = 0; c < params.d_in; ++c) {
        LD w = params.W[r * params.d_in + c];
        if (index == r * params.d_in + c) w += delta;
        acc += w * x[c];
      }
      z[r] = acc;
      norm += acc * acc;
    }
    norm = std::sqrt(norm);
    for (auto& v : z) v /= norm;
    return z;
  };
  auto sim = [&](const std::vector<LD>& a, const std::vector<LD>& b) {
    LD s = 0;
    for (std::size_t r = 0; r < a.size(); ++r) s += a[r] * b[r];
    return s / static_cast<LD>(cfg.temperature);
  };
  auto nll = [](const std::vector<LD>& scores) {
    const LD m = *std::max_element(scores.begin(), scores.end());
    LD z = 0;
    for (LD s : scores) z += std::exp(s - m);
    return m + std::log(z) - scores.front();
  };

  const std::size_t B = batch.size();
  std::vector<std::vector<LD>> q, pos;
  std::vector<std::vector<std::vector<LD>>> neg(B);
  for (std::size_t i = 0; i < B; ++i) {
    q.push_back(unit(batch[i].query));
    pos.push_back(unit(batch[i].positive));
    for (const auto& n : batch[i].negatives) neg[i].push_back(unit(n));
  }
  LD total = 0;
  std::vector<LD> scores;
  for (std::size_t i = 0; i < B; ++i) {
    scores.assign(1, sim(q[i], pos[i]));
    for (const auto& n : neg[i]) scores.push_back(sim(q[i], n));
    if (cfg.in_batch_negatives) {
      for (std::size_t o = 0; o < B; ++o) {
        if (o != i) scores.push_back(sim(q[i], pos[o]));
      }
    }
    LD term = nll(scores);
    if (cfg.bidirectional) {
      scores.assign(1, sim(pos[i], q[i]));
      for (const auto& n : neg[i]) scores.push_back(sim(q[i], n));
      if (cfg.in_batch_negatives) {
        for (std::size_t o = 0; o < B; ++o) {
          if (o != i) scores.push_back(sim(pos[i], q[o]));
        }
      }
      term = (term + nll(scores)) / 2;
    }
    total += term;
  }
  return total / static_cast<LD>(B);
}

}  // namespace

double finite_diff_check(const AdapterParams& params, std::span<const TripletEmbeddings> batch,
                         const TrainConfig& cfg, double h) {
  const AdapterParams analytic = contrastive_loss(batch, params, cfg, true).grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto central = [&](long double step) {
      return (shifted_loss(batch, params, cfg, i, step) - shifted_loss(batch, params, cfg, i, -step)) / (2 * step);
    };
    // Richardson step: cancels the h^2 truncation term, which otherwise
    // dominates coordinates whose true gradient is near zero.
    const long double lh = h;
    const double fd = static_cast<double>((4 * central(lh / 2) - central(lh)) / 3);
    const double rel = std::abs(analytic.param(i) - fd) / std::max(1e-8, std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

// --- training -----------------------------------------------------------------

TrainResult train(const std::vector<TripletRecord>& triplets, const EmbeddingProvider& base, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t d_in = base.dim();
  const std::size_t d_out = cfg.d_out == 0 ? d_in : cfg.d_out;
  AdapterParams init = cfg.init == AdapterInit::Identity ? AdapterParams::identity(d_in, d_out)
                                                         : AdapterParams::random(d_in, d_out, cfg.seed);
  return train(triplets, base, cfg, std::move(init));
}

TrainResult train(const std::vector<TripletRecord>& triplets, const EmbeddingProvider& base, const TrainConfig& cfg,
                  AdapterParams init) {
  cfg.validate();
  init.validate();
  if (triplets.empty()) throw ValidationError("train: no triplets");
  if (base.dim() != init.d_in) {
    throw ConfigError("provider dim " + std::to_string(base.dim()) + " != adapter d_in " + std::to_string(init.d_in));
  }

  for (const auto& t : triplets) {
    if (auto msg = check(t); !msg.empty()) throw ValidationError("triplet " + t.uid + ": " + msg);
  }
  TrainResult result{std::move(init), {}};
  if (cfg.steps == 0) return result;

  // Embed each distinct text once.
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::string> texts;
  auto intern = [&](const std::string& t) {
    auto [it, inserted] = slot.try_emplace(t, texts.size());
    if (inserted) texts.push_back(t);
    return it->second;
  };
  for (const auto& t : triplets) {
    intern(t.input_text);
    intern(t.positive_text);
    for (const auto& n : t.negative_texts) intern(n);
  }
  const auto base_vectors = embed_all(base, texts, cfg.embed_batch_size);
  auto as_double = [&](const std::string& t) {
    const auto& v = base_vectors[slot.at(t)].values;
    return std::vector<double>(v.begin(), v.end());
  };
  std::vector<TripletEmbeddings> data;
  data.reserve(triplets.size());
  for (const auto& t : triplets) {
    TripletEmbeddings te{as_double(t.input_text), as_double(t.positive_text), {}};
    for (const auto& n : t.negative_texts) te.negatives.push_back(as_double(n));
    data.push_back(std::move(te));
  }

  // Batch groups: one per source tag when unmixed, else a single pool.
  std::vector<std::vector<std::size_t>> groups;
  if (cfg.unmixed_batches) {
    std::map<std::string, std::vector<std::size_t>> by_source;
    for (std::size_t i = 0; i < triplets.size(); ++i) by_source[triplets[i].source].push_back(i);
    for (auto& [_, idx] : by_source) groups.push_back(std::move(idx));
  } else {
    groups.emplace_back(triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i) groups[0][i] = i;
  }
  BatchSampler sampler(std::move(groups), cfg.batch_size, cfg.seed);

  AdapterParams& params = result.params;
  std::vector<double> velocity(params.size(), 0.0);
  std::vector<TripletEmbeddings> batch;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    batch.clear();
    for (std::size_t i : sampler.next()) batch.push_back(data[i]);
    LossAndGrad lg;
    try {
      lg = contrastive_loss(batch, params, cfg);
    } catch (const Error& e) {
      throw Error("step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(lg.loss)) throw Error("step " + std::to_string(step) + ": non-finite loss");
    const double lr = cfg.lr_at(step);
    for (std::size_t k = 0; k < params.size(); ++k) {
      velocity[k] = cfg.momentum * velocity[k] + lg.grad.param(k);
      params.param(k) -= lr * velocity[k];
    }
    result.history.steps.push_back({step, lg.loss, lr});
  }
  return result;
}

void write_history(const fs::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : history.steps) out << Json{{"step", s.step}, {"loss", s.loss}, {"lr", s.lr}}.dump() << '\n';
}

}  // namespace embench
