#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>

#include "hierbias/errors.hpp"
#include "hierbias/model.hpp"

using namespace hierbias;

namespace {

ArchConfig tiny_config(int vocab = 23) {
  ArchConfig c;
  c.el = 2;
  c.dl = 2;
  c.dm = 16;
  c.ff = 32;
  c.nh = 2;
  c.kv = 8;
  c.vocab = vocab;
  c.max_len = 32;
  return c;
}

std::vector<std::vector<TokenId>> random_seqs(Rng& rng, int n, int min_len, int max_len, int vocab) {
  std::vector<std::vector<TokenId>> out(n);
  for (auto& s : out) {
    const int len = min_len + static_cast<int>(rng.below(max_len - min_len + 1));
    for (int i = 0; i < len - 1; ++i) s.push_back(3 + static_cast<TokenId>(rng.below(vocab - 3)));
    s.push_back(1);
  }
  return out;
}

template <class T>
std::vector<T> run_logits(Transformer<T>& m, const Seq2SeqBatch& b) {
  Tape<T> tape(false);
  return m.logits(tape, b)->value;
}

class EchoScorer : public StepScorer {
 public:
  explicit EchoScorer(int v, bool eos_first = false) : v_(v), eos_first_(eos_first) {}
  int vocab() const override { return v_; }
  void begin(const std::vector<std::vector<TokenId>>& srcs) override { srcs_ = srcs; }
  void step(int t, const std::vector<TokenId>&, std::vector<double>& logits) override {
    logits.assign(srcs_.size() * v_, 0.0);
    for (std::size_t r = 0; r < srcs_.size(); ++r) {
      const TokenId want = eos_first_ ? 1 : (t < static_cast<int>(srcs_[r].size()) ? srcs_[r][t] : 1);
      logits[r * v_ + want] = 5.0;
    }
  }

 private:
  int v_;
  bool eos_first_;
  std::vector<std::vector<TokenId>> srcs_;
};

}  // namespace

TEST_CASE("count_params matches the instantiated parameter set") {
  for (bool tied : {true, false}) {
    ArchConfig c = tiny_config();
    c.tie_embeddings = tied;
    c.el = 3;
    c.dl = 1;
    std::int64_t sum = 0;
    for (const auto& [name, shape] : parameter_shapes(c)) {
      sum += std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
    }
    CHECK(sum == count_params(c));
    CHECK(Transformer<float>(c, 1).num_params() == count_params(c));
  }
}

TEST_CASE("count_params is monotone in each knob and the embedding term scales with DM") {
  const ArchConfig base = arch_preset("desk", 100);
  const auto n0 = count_params(base);
  for (int ArchConfig::*field : {&ArchConfig::el, &ArchConfig::dl, &ArchConfig::dm, &ArchConfig::ff,
                                 &ArchConfig::nh, &ArchConfig::kv}) {
    ArchConfig c = base;
    c.*field *= 2;
    CHECK(count_params(c) > n0);
  }
  ArchConfig a = base;
  a.el = a.dl = 1;
  a.tie_embeddings = false;
  ArchConfig b = a;
  b.dm *= 2;
  auto embed_of = [](const ArchConfig& c) {
    std::int64_t e = 0;
    for (const auto& [name, shape] : parameter_shapes(c)) {
      if (name == "shared.embedding" || name == "lm_head") e += std::int64_t{shape[0]} * shape[1];
    }
    return e;
  };
  CHECK(embed_of(b) == 2 * embed_of(a));
  CHECK(embed_of(a) == 2 * std::int64_t{a.vocab} * a.dm);
}

TEST_CASE("base preset lands near its published size") {
  const double n = static_cast<double>(count_params(arch_preset("base", 32128)));
  CHECK(std::abs(n / 220e6 - 1.0) <= 0.10);
}

TEST_CASE("initialization is seeded") {
  Transformer<float> a(tiny_config(), 3), b(tiny_config(), 3), c(tiny_config(), 4);
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].var->value == b.parameters()[i].var->value);
    differs |= a.parameters()[i].var->value != c.parameters()[i].var->value;
  }
  CHECK(differs);
  CHECK(a.param("encoder.final_norm")->value == std::vector<float>(16, 1.0f));
  CHECK_THROWS_AS(Transformer<float>(ArchConfig{}, 1), UsageError);  // vocab 0
}

TEST_CASE("decoder is causal") {
  Transformer<float> m(tiny_config(), 5);
  Rng rng(1);
  const auto src = random_seqs(rng, 3, 4, 9, 23);
  auto tgt = random_seqs(rng, 3, 8, 8, 23);
  const auto base = run_logits(m, make_batch(src, tgt, 32));
  const int V = 23, L = 8;
  for (int j = 1; j < L; ++j) {
    auto t2 = tgt;
    for (auto& s : t2) s[j - 1] = s[j - 1] == 5 ? 6 : 5;  // dec_in position j carries tgt[j-1]
    const auto pert = run_logits(m, make_batch(src, t2, 32));
    for (int b = 0; b < 3; ++b) {
      for (int i = 0; i < j; ++i) {
        for (int v = 0; v < V; ++v) {
          const std::size_t idx = (static_cast<std::size_t>(b) * L + i) * V + v;
          REQUIRE(pert[idx] == base[idx]);
        }
      }
    }
  }
}

TEST_CASE("source padding never leaks into logits") {
  Transformer<float> m(tiny_config(), 6);
  Rng rng(2);
  auto src = random_seqs(rng, 4, 3, 10, 23);
  src[0].resize(10, 1);  // longest row fixes the padded width
  const auto tgt = random_seqs(rng, 4, 2, 6, 23);
  auto b1 = make_batch(src, tgt, 32);
  auto b2 = b1;
  for (int r = 0; r < b2.batch; ++r) {
    for (int j = b2.src_lengths[r]; j < b2.src_len; ++j) b2.src[r * b2.src_len + j] = 7 + (j % 5);
  }
  CHECK(run_logits(m, b1) == run_logits(m, b2));
}

TEST_CASE("attention rows are distributions") {
  Transformer<double> m(tiny_config(), 7);
  Rng rng(3);
  const auto b = make_batch(random_seqs(rng, 3, 2, 9, 23), random_seqs(rng, 3, 2, 7, 23), 32);
  AttentionTrace<double> trace;
  Tape<double> tape(false);
  m.logits(tape, b, &trace);
  CHECK(trace.entries.size() == 2 + 2 * 2);
  for (const auto& e : trace.entries) {
    const auto& s = e.spec;
    for (int bb = 0; bb < s.batch; ++bb) {
      for (int h = 0; h < s.heads; ++h) {
        for (int i = 0; i < s.q_len; ++i) {
          const double* row = e.probs.data() + ((static_cast<std::size_t>(bb) * s.heads + h) * s.q_len + i) * s.k_len;
          double sum = 0;
          for (int j = 0; j < s.k_len; ++j) {
            CHECK(row[j] >= 0.0);
            sum += row[j];
          }
          CHECK(std::abs(sum - 1.0) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("forward is equivariant under vocabulary relabeling") {
  const ArchConfig c = tiny_config();
  Transformer<double> a(c, 8), b(c, 8);
  std::vector<TokenId> perm(c.vocab);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(9);
  // Keep pad and eos fixed: the decoder start token and labels rely on them.
  rng.shuffle(std::span(perm).subspan(2));
  auto& eb = b.param("shared.embedding")->value;
  const auto& ea = a.param("shared.embedding")->value;
  for (int v = 0; v < c.vocab; ++v) std::copy_n(ea.data() + v * c.dm, c.dm, eb.data() + perm[v] * c.dm);
  const auto src = random_seqs(rng, 2, 3, 7, 23);
  const auto tgt = random_seqs(rng, 2, 3, 6, 23);
  auto relabel = [&](std::vector<std::vector<TokenId>> seqs) {
    for (auto& s : seqs) {
      for (auto& t : s) t = perm[t];
    }
    return seqs;
  };
  const auto la = run_logits(a, make_batch(src, tgt, 32));
  const auto lb = run_logits(b, make_batch(relabel(src), relabel(tgt), 32));
  const std::size_t rows = la.size() / c.vocab;
  for (std::size_t r = 0; r < rows; ++r) {
    for (int v = 0; v < c.vocab; ++v) CHECK(lb[r * c.vocab + perm[v]] == doctest::Approx(la[r * c.vocab + v]).epsilon(1e-12));
  }
}

TEST_CASE("uniform logits give ln(V) loss") {
  ArchConfig c = tiny_config(37);
  Transformer<double> m(c, 1);
  for (const auto& p : m.parameters()) std::fill(p.var->value.begin(), p.var->value.end(), 0.0);
  Rng rng(4);
  Tape<double> tape(false);
  const auto loss = m.loss(tape, make_batch(random_seqs(rng, 2, 2, 5, 37), random_seqs(rng, 2, 2, 5, 37), 32));
  CHECK(loss->value[0] == doctest::Approx(std::log(37.0)).epsilon(1e-12));

  Tape<float> t2(false);
  auto logits = make_var<float>({3, 10});
  CHECK(ops::cross_entropy(t2, logits, {1, -1, 9})->value[0] == doctest::Approx(std::log(10.0)));
  CHECK_THROWS_AS(ops::cross_entropy(t2, logits, {-1, -1, -1}), DataError);
}

TEST_CASE("gradients match central finite differences in double precision") {
  Transformer<double> m(tiny_config(), 11);
  Rng rng(5);
  const auto b = make_batch(random_seqs(rng, 3, 3, 8, 23), random_seqs(rng, 3, 2, 6, 23), 32);
  const auto res = grad_check(m, b, 1e-4, 300, 12);
  INFO("worst parameter: " << res.worst_param);
  CHECK(res.checked >= 300);
  CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("gradients also flow through untied heads and dropout-free rms gains") {
  ArchConfig c = tiny_config();
  c.tie_embeddings = false;
  c.el = 1;
  Transformer<double> m(c, 13);
  Rng rng(6);
  const auto b = make_batch(random_seqs(rng, 2, 3, 6, 23), random_seqs(rng, 2, 2, 5, 23), 32);
  CHECK(grad_check(m, b, 1e-4, 200, 14).max_rel_error < 1e-5);
}

TEST_CASE("batch construction rejects bad input") {
  CHECK_THROWS_AS(make_batch({{3, 1}}, {{}}, 32), DataError);
  CHECK_THROWS_AS(make_batch({{}}, {{3, 1}}, 32), DataError);
  CHECK_THROWS_AS(make_batch({std::vector<TokenId>(40, 3)}, {{3, 1}}, 32), DataError);
  const auto b = make_batch({{4, 5, 1}}, {{6, 7, 1}}, 32);
  CHECK(b.dec_in == std::vector<TokenId>{0, 6, 7});
  CHECK(b.labels == std::vector<TokenId>{6, 7, 1});
  Transformer<float> m(tiny_config(), 1);
  Tape<float> tape(false);
  CHECK_THROWS_AS(m.logits(tape, make_batch({{99, 1}}, {{3, 1}}, 32)), DataError);
}

TEST_CASE("generic greedy decoding") {
  EchoScorer echo(20);
  const std::vector<std::vector<TokenId>> srcs{{5, 6, 7}, {9}, {}};
  CHECK(greedy_decode(echo, srcs, 10) == srcs);
  EchoScorer eos(20, true);
  const auto out = greedy_decode(eos, srcs, 10);
  for (const auto& s : out) CHECK(s.empty());
  CHECK(greedy_decode(echo, srcs, 2)[0] == std::vector<TokenId>{5, 6});
}

TEST_CASE("cached decoding agrees with teacher-forced argmax") {
  Transformer<double> m(tiny_config(), 21);
  Rng rng(7);
  const auto srcs = random_seqs(rng, 5, 2, 9, 23);
  const auto out = m.greedy_decode(srcs, 12, 2);
  CHECK(out == m.greedy_decode(srcs, 12, 5));
  for (std::size_t r = 0; r < srcs.size(); ++r) {
    auto tgt = out[r];
    const bool ended = static_cast<int>(tgt.size()) < 12;
    if (ended) tgt.push_back(1);
    const auto b = make_batch({srcs[r]}, {tgt}, 32);
    const auto logits = run_logits(m, b);
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      const double* row = logits.data() + i * 23;
      CHECK(std::max_element(row, row + 23) - row == tgt[i]);
    }
  }
}

TEST_CASE("checkpoint reload reproduces logits bit for bit") {
  const auto dir = std::filesystem::temp_directory_path() / "hierbias_test_ckpt";
  std::filesystem::remove_all(dir);
  Transformer<float> m(tiny_config(), 31);
  save_checkpoint(dir / "m.ckpt", m.to_checkpoint(500, 77, 88));
  const auto ck = load_checkpoint(dir / "m.ckpt");
  CHECK(ck.step == 500);
  CHECK(ck.rng_fingerprint == 77);
  CHECK(ck.tokenizer_fingerprint == 88);
  CHECK(ck.arch == m.config());
  auto m2 = Transformer<float>::from_checkpoint(ck);
  Rng rng(8);
  const auto b = make_batch(random_seqs(rng, 4, 2, 9, 23), random_seqs(rng, 4, 2, 9, 23), 32);
  CHECK(run_logits(m, b) == run_logits(m2, b));
  CHECK(serialize_checkpoint(m2.to_checkpoint(500, 77, 88)) == serialize_checkpoint(ck));

  std::string bytes = serialize_checkpoint(ck);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  bytes[8] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(bytes), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint("nope"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("relative buckets follow the T5 scheme") {
  CHECK(relative_bucket(0, true, 32, 128) == 0);
  CHECK(relative_bucket(-3, true, 32, 128) == 3);
  CHECK(relative_bucket(3, true, 32, 128) == 19);
  CHECK(relative_bucket(-200, true, 32, 128) == 15);
  CHECK(relative_bucket(5, false, 32, 128) == 0);
  CHECK(relative_bucket(-20, false, 32, 128) == 16 + static_cast<int>(std::log(20.0 / 16) / std::log(8.0) * 16));
}
