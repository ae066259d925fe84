#include "hierbias/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include "hierbias/errors.hpp"
#include "hierbias/text.hpp"

namespace hierbias {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void ArchConfig::validate() const {
  for (int v : {el, dl, dm, ff, nh, kv, vocab, max_len}) {
    if (v <= 0) throw UsageError("architecture dimensions must be positive: " + fingerprint());
  }
}

std::string ArchConfig::fingerprint() const {
  return "EL" + std::to_string(el) + "-DL" + std::to_string(dl) + "-DM" + std::to_string(dm) + "-FF" +
         std::to_string(ff) + "-NH" + std::to_string(nh) + "-KV" + std::to_string(kv) + "-V" +
         std::to_string(vocab) + (tie_embeddings ? "-tied" : "-untied");
}

ArchConfig arch_preset(std::string_view name, int vocab) {
  ArchConfig c;
  c.vocab = vocab;
  auto set = [&](int nl, int ff, int dm, int kv, int nh) {
    c.el = c.dl = nl;
    c.ff = ff;
    c.dm = dm;
    c.kv = kv;
    c.nh = nh;
  };
  if (name == "tiny") set(4, 1024, 256, 32, 4);
  else if (name == "mini") set(4, 1536, 384, 32, 8);
  else if (name == "small") set(6, 2048, 512, 32, 8);
  else if (name == "base") set(12, 3072, 768, 64, 12);
  else if (name == "desk") set(2, 256, 64, 16, 4);
  else throw UsageError("unknown architecture preset '" + std::string(name) + "'");
  return c;
}

std::vector<std::pair<std::string, std::vector<int>>> parameter_shapes(const ArchConfig& c) {
  const int inner = c.nh * c.kv;
  std::vector<std::pair<std::string, std::vector<int>>> out;
  out.push_back({"shared.embedding", {c.vocab, c.dm}});
  out.push_back({"encoder.rel_bias", {kRelBuckets, c.nh}});
  auto attn = [&](const std::string& p) {
    out.push_back({p + ".q", {c.dm, inner}});
    out.push_back({p + ".k", {c.dm, inner}});
    out.push_back({p + ".v", {c.dm, inner}});
    out.push_back({p + ".o", {inner, c.dm}});
  };
  auto ffn = [&](const std::string& p) {
    out.push_back({p + ".ff_norm", {c.dm}});
    out.push_back({p + ".ff.wi", {c.dm, c.ff}});
    out.push_back({p + ".ff.wo", {c.ff, c.dm}});
  };
  for (int l = 0; l < c.el; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l);
    out.push_back({p + ".self_norm", {c.dm}});
    attn(p + ".self");
    ffn(p);
  }
  out.push_back({"encoder.final_norm", {c.dm}});
  out.push_back({"decoder.rel_bias", {kRelBuckets, c.nh}});
  for (int l = 0; l < c.dl; ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    out.push_back({p + ".self_norm", {c.dm}});
    attn(p + ".self");
    out.push_back({p + ".cross_norm", {c.dm}});
    attn(p + ".cross");
    ffn(p);
  }
  out.push_back({"decoder.final_norm", {c.dm}});
  if (!c.tie_embeddings) out.push_back({"lm_head", {c.dm, c.vocab}});
  return out;
}

std::int64_t count_params(const ArchConfig& c) {
  const std::int64_t dm = c.dm, ff = c.ff, inner = static_cast<std::int64_t>(c.nh) * c.kv;
  const std::int64_t embed = static_cast<std::int64_t>(c.vocab) * dm * (c.tie_embeddings ? 1 : 2);
  const std::int64_t enc = 4 * dm * inner + 2 * dm * ff + 2 * dm;
  const std::int64_t dec = 8 * dm * inner + 2 * dm * ff + 3 * dm;
  return embed + c.el * enc + c.dl * dec + 2 * dm + 2 * kRelBuckets * static_cast<std::int64_t>(c.nh);
}

Seq2SeqBatch make_batch(const std::vector<std::vector<TokenId>>& srcs, const std::vector<std::vector<TokenId>>& tgts,
                        int max_len) {
  if (srcs.size() != tgts.size()) throw UsageError("source/target count mismatch");
  if (srcs.empty()) throw DataError("empty batch");
  Seq2SeqBatch b;
  b.batch = static_cast<int>(srcs.size());
  for (std::size_t i = 0; i < srcs.size(); ++i) {
    if (srcs[i].empty()) throw DataError("zero-length source sequence");
    if (tgts[i].empty()) throw DataError("zero-length target sequence");
    if (static_cast<int>(srcs[i].size()) > max_len || static_cast<int>(tgts[i].size()) > max_len) {
      throw DataError("sequence longer than max_len " + std::to_string(max_len));
    }
    b.src_len = std::max(b.src_len, static_cast<int>(srcs[i].size()));
    b.tgt_len = std::max(b.tgt_len, static_cast<int>(tgts[i].size()));
  }
  b.src.assign(static_cast<std::size_t>(b.batch) * b.src_len, 0);
  b.dec_in.assign(static_cast<std::size_t>(b.batch) * b.tgt_len, 0);
  b.labels.assign(static_cast<std::size_t>(b.batch) * b.tgt_len, -1);
  for (int i = 0; i < b.batch; ++i) {
    const auto& s = srcs[i];
    const auto& t = tgts[i];
    std::copy(s.begin(), s.end(), b.src.begin() + static_cast<std::ptrdiff_t>(i) * b.src_len);
    b.src_lengths.push_back(static_cast<int>(s.size()));
    for (std::size_t j = 0; j < t.size(); ++j) {
      b.labels[static_cast<std::size_t>(i) * b.tgt_len + j] = t[j];
      if (j + 1 < t.size()) b.dec_in[static_cast<std::size_t>(i) * b.tgt_len + j + 1] = t[j];
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kMagic[8] = {'H', 'B', 'C', 'K', 'P', 'T', 0, 0};
constexpr std::uint8_t kVersion = 1;

template <class U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  template <class U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, data_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw DataError("checkpoint truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint8_t>(out, kVersion);
  for (int v : {c.arch.el, c.arch.dl, c.arch.dm, c.arch.ff, c.arch.nh, c.arch.kv, c.arch.vocab, c.arch.max_len}) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  put<std::uint8_t>(out, c.arch.tie_embeddings ? 1 : 0);
  put<std::uint64_t>(out, c.step);
  put<std::uint64_t>(out, c.rng_fingerprint);
  put<std::uint64_t>(out, c.tokenizer_fingerprint);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.blocks.size()));
  for (const auto& b : c.blocks) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out += b.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.shape.size()));
    for (int d : b.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(b.values.data()), b.values.size() * sizeof(float));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) throw DataError("not a checkpoint file");
  const auto version = r.get<std::uint8_t>();
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  int* fields[] = {&c.arch.el, &c.arch.dl, &c.arch.dm, &c.arch.ff, &c.arch.nh, &c.arch.kv, &c.arch.vocab,
                   &c.arch.max_len};
  for (int* f : fields) *f = static_cast<int>(r.get<std::uint32_t>());
  c.arch.tie_embeddings = r.get<std::uint8_t>() != 0;
  c.step = r.get<std::uint64_t>();
  c.rng_fingerprint = r.get<std::uint64_t>();
  c.tokenizer_fingerprint = r.get<std::uint64_t>();
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    ParamBlock b;
    b.name = std::string(r.bytes(r.get<std::uint32_t>()));
    const auto rank = r.get<std::uint32_t>();
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      b.shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
      count *= static_cast<std::size_t>(b.shape.back());
    }
    const auto raw = r.bytes(count * sizeof(float));
    b.values.resize(count);
    std::memcpy(b.values.data(), raw.data(), raw.size());
    c.blocks.push_back(std::move(b));
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

// ---------------------------------------------------------------------------
// Decoding

std::vector<std::vector<TokenId>> greedy_decode(StepScorer& scorer, const std::vector<std::vector<TokenId>>& srcs,
                                                int max_len) {
  const int rows = static_cast<int>(srcs.size());
  std::vector<std::vector<TokenId>> out(rows);
  if (rows == 0 || max_len <= 0) return out;
  scorer.begin(srcs);
  const int V = scorer.vocab();
  std::vector<TokenId> last(rows, 0);
  std::vector<char> done(rows, 0);
  std::vector<double> logits;
  int remaining = rows;
  for (int t = 0; t < max_len && remaining > 0; ++t) {
    scorer.step(t, last, logits);
    for (int r = 0; r < rows; ++r) {
      const double* row = logits.data() + static_cast<std::size_t>(r) * V;
      const TokenId best = static_cast<TokenId>(std::max_element(row, row + V) - row);
      last[r] = best;
      if (done[r]) continue;
      if (best == 1) {
        done[r] = 1;
        --remaining;
      } else {
        out[r].push_back(best);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transformer

template <class T>
Transformer<T>::Transformer(const ArchConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, 0x1417));
  for (auto& [name, shape] : parameter_shapes(config_)) {
    const bool is_norm = name.ends_with("_norm");
    const bool is_bias = name.ends_with("rel_bias");
    const double stddev = (is_norm || is_bias) ? 0.0 : 1.0 / std::sqrt(static_cast<double>(shape[0]));
    add_param(name, shape, name == "shared.embedding" ? 1.0 / std::sqrt(config_.dm) : stddev,
              is_norm ? 1.0 : 0.0, rng);
  }
}

template <class T>
void Transformer<T>::add_param(const std::string& name, std::vector<int> shape, double stddev, double constant,
                               Rng& rng) {
  auto v = make_var<T>(std::move(shape), true);
  for (auto& x : v->value) x = static_cast<T>(stddev > 0 ? stddev * rng.normal() : constant);
  index_[name] = params_.size();
  params_.push_back({name, v});
}

template <class T>
Transformer<T> Transformer<T>::from_checkpoint(const Checkpoint& ckpt) {
  Transformer<T> m(ckpt.arch, 0);
  if (ckpt.blocks.size() != m.params_.size()) throw DataError("checkpoint parameter count mismatch");
  for (const auto& b : ckpt.blocks) {
    const auto it = m.index_.find(b.name);
    if (it == m.index_.end()) throw DataError("checkpoint has unknown parameter '" + b.name + "'");
    auto& v = m.params_[it->second].var;
    if (v->shape != b.shape) throw DataError("checkpoint shape mismatch for '" + b.name + "'");
    for (std::size_t i = 0; i < b.values.size(); ++i) v->value[i] = static_cast<T>(b.values[i]);
  }
  return m;
}

template <class T>
const Var<T>& Transformer<T>::param(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("no parameter named '" + std::string(name) + "'");
  return params_[it->second].var;
}

template <class T>
std::int64_t Transformer<T>::num_params() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += static_cast<std::int64_t>(p.var->size());
  return n;
}

template <class T>
void Transformer<T>::set_dropout(double p, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw UsageError("dropout must be in [0, 1)");
  dropout_ = p;
  dropout_rng_ = Rng(derive_seed(seed, 0xd0));
}

template <class T>
void Transformer<T>::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

template <class T>
std::string Transformer<T>::find_nonfinite() const {
  for (const auto& p : params_) {
    for (T x : p.var->value) {
      if (!std::isfinite(x)) return p.name;
    }
    for (T x : p.var->grad) {
      if (!std::isfinite(x)) return p.name + ".grad";
    }
  }
  return {};
}

template <class T>
Checkpoint Transformer<T>::to_checkpoint(std::uint64_t step, std::uint64_t rng_fp, std::uint64_t tok_fp) const {
  Checkpoint c;
  c.arch = config_;
  c.step = step;
  c.rng_fingerprint = rng_fp;
  c.tokenizer_fingerprint = tok_fp;
  for (const auto& p : params_) {
    ParamBlock b{p.name, p.var->shape, {}};
    b.values.reserve(p.var->size());
    for (T x : p.var->value) b.values.push_back(static_cast<float>(x));
    c.blocks.push_back(std::move(b));
  }
  return c;
}

template <class T>
Var<T> Transformer<T>::maybe_dropout(Tape<T>& tape, const Var<T>& x) const {
  if (dropout_ <= 0.0 || !tape.recording()) return x;
  return ops::dropout(tape, x, dropout_, dropout_rng_);
}

template <class T>
Var<T> Transformer<T>::ffn(Tape<T>& tape, const std::string& prefix, const Var<T>& x) const {
  const auto h = ops::rms_norm(tape, x, param(prefix + ".ff_norm"));
  const auto a = ops::relu(tape, ops::matmul(tape, h, param(prefix + ".ff.wi")));
  return ops::add(tape, x, maybe_dropout(tape, ops::matmul(tape, a, param(prefix + ".ff.wo"))));
}

template <class T>
Var<T> Transformer<T>::encode(Tape<T>& tape, const std::vector<TokenId>& src, int batch, int src_len,
                              const std::vector<int>& src_lengths, AttentionTrace<T>* trace) const {
  auto x = maybe_dropout(tape, ops::embedding(tape, param("shared.embedding"), src));
  const auto& bias = param("encoder.rel_bias");
  for (int l = 0; l < config_.el; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l);
    const auto h = ops::rms_norm(tape, x, param(p + ".self_norm"));
    ops::AttentionSpec spec;
    spec.batch = batch;
    spec.q_len = spec.k_len = src_len;
    spec.heads = config_.nh;
    spec.head_dim = config_.kv;
    spec.bidirectional = true;
    spec.key_len = &src_lengths;
    std::vector<T>* probs = nullptr;
    if (trace) {
      trace->entries.push_back({p + ".self", spec, {}});
      probs = &trace->entries.back().probs;
    }
    const auto a = ops::attention(tape, ops::matmul(tape, h, param(p + ".self.q")),
                                  ops::matmul(tape, h, param(p + ".self.k")),
                                  ops::matmul(tape, h, param(p + ".self.v")), &bias, spec, probs);
    x = ops::add(tape, x, maybe_dropout(tape, ops::matmul(tape, a, param(p + ".self.o"))));
    x = ffn(tape, p, x);
  }
  return maybe_dropout(tape, ops::rms_norm(tape, x, param("encoder.final_norm")));
}

template <class T>
Var<T> Transformer<T>::output_logits(Tape<T>& tape, const Var<T>& h) const {
  if (config_.tie_embeddings) {
    return ops::matmul_nt(tape, h, param("shared.embedding"), static_cast<T>(1.0 / std::sqrt(config_.dm)));
  }
  return ops::matmul(tape, h, param("lm_head"));
}

template <class T>
Var<T> Transformer<T>::logits(Tape<T>& tape, const Seq2SeqBatch& b, AttentionTrace<T>* trace) {
  for (int len : b.src_lengths) {
    if (len > config_.max_len) throw DataError("source longer than max_len");
  }
  if (b.tgt_len > config_.max_len) throw DataError("target longer than max_len");
  const auto enc = encode(tape, b.src, b.batch, b.src_len, b.src_lengths, trace);
  auto y = maybe_dropout(tape, ops::embedding(tape, param("shared.embedding"), b.dec_in));
  const auto& bias = param("decoder.rel_bias");
  for (int l = 0; l < config_.dl; ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    ops::AttentionSpec self;
    self.batch = b.batch;
    self.q_len = self.k_len = b.tgt_len;
    self.heads = config_.nh;
    self.head_dim = config_.kv;
    self.causal = true;
    self.bidirectional = false;
    std::vector<T>* probs = nullptr;
    if (trace) {
      trace->entries.push_back({p + ".self", self, {}});
      probs = &trace->entries.back().probs;
    }
    auto h = ops::rms_norm(tape, y, param(p + ".self_norm"));
    auto a = ops::attention(tape, ops::matmul(tape, h, param(p + ".self.q")), ops::matmul(tape, h, param(p + ".self.k")),
                            ops::matmul(tape, h, param(p + ".self.v")), &bias, self, probs);
    y = ops::add(tape, y, maybe_dropout(tape, ops::matmul(tape, a, param(p + ".self.o"))));

    ops::AttentionSpec cross;
    cross.batch = b.batch;
    cross.q_len = b.tgt_len;
    cross.k_len = b.src_len;
    cross.heads = config_.nh;
    cross.head_dim = config_.kv;
    cross.key_len = &b.src_lengths;
    probs = nullptr;
    if (trace) {
      trace->entries.push_back({p + ".cross", cross, {}});
      probs = &trace->entries.back().probs;
    }
    h = ops::rms_norm(tape, y, param(p + ".cross_norm"));
    a = ops::attention(tape, ops::matmul(tape, h, param(p + ".cross.q")), ops::matmul(tape, enc, param(p + ".cross.k")),
                       ops::matmul(tape, enc, param(p + ".cross.v")), nullptr, cross, probs);
    y = ops::add(tape, y, maybe_dropout(tape, ops::matmul(tape, a, param(p + ".cross.o"))));
    y = ffn(tape, p, y);
  }
  const auto out = maybe_dropout(tape, ops::rms_norm(tape, y, param("decoder.final_norm")));
  return output_logits(tape, out);
}

template <class T>
Var<T> Transformer<T>::loss(Tape<T>& tape, const Seq2SeqBatch& b) {
  return ops::cross_entropy(tape, logits(tape, b), b.labels);
}

/// Incremental decoder with per-layer key/value caches.
template <class T>
class Transformer<T>::Scorer : public StepScorer {
 public:
  Scorer(const Transformer<T>& m, int max_steps) : m_(m), cap_(max_steps) {}

  int vocab() const override { return m_.config_.vocab; }

  void begin(const std::vector<std::vector<TokenId>>& srcs) override {
    Tape<T> tape(false);
    rows_ = static_cast<int>(srcs.size());
    src_len_ = 0;
    src_lengths_.clear();
    for (const auto& s : srcs) {
      if (s.empty()) throw DataError("zero-length source sequence");
      if (static_cast<int>(s.size()) > m_.config_.max_len) throw DataError("source longer than max_len");
      src_len_ = std::max(src_len_, static_cast<int>(s.size()));
      src_lengths_.push_back(static_cast<int>(s.size()));
    }
    std::vector<TokenId> flat(static_cast<std::size_t>(rows_) * src_len_, 0);
    for (int r = 0; r < rows_; ++r) std::copy(srcs[r].begin(), srcs[r].end(), flat.begin() + r * src_len_);
    const auto enc = m_.encode(tape, flat, rows_, src_len_, src_lengths_, nullptr);
    const int inner = m_.config_.nh * m_.config_.kv;
    cross_k_.clear();
    cross_v_.clear();
    self_k_.clear();
    self_v_.clear();
    for (int l = 0; l < m_.config_.dl; ++l) {
      const std::string p = "decoder.layer" + std::to_string(l);
      cross_k_.push_back(ops::matmul(tape, enc, m_.param(p + ".cross.k")));
      cross_v_.push_back(ops::matmul(tape, enc, m_.param(p + ".cross.v")));
      self_k_.push_back(make_var<T>({rows_ * cap_, inner}));
      self_v_.push_back(make_var<T>({rows_ * cap_, inner}));
    }
  }

  void step(int t, const std::vector<TokenId>& last, std::vector<double>& logits) override {
    if (t >= cap_) throw UsageError("decode step beyond cache capacity");
    Tape<T> tape(false);
    const auto& c = m_.config_;
    const int inner = c.nh * c.kv;
    auto y = ops::embedding(tape, m_.param("shared.embedding"), last);
    const auto& bias = m_.param("decoder.rel_bias");
    for (int l = 0; l < c.dl; ++l) {
      const std::string p = "decoder.layer" + std::to_string(l);
      auto h = ops::rms_norm(tape, y, m_.param(p + ".self_norm"));
      const auto k = ops::matmul(tape, h, m_.param(p + ".self.k"));
      const auto v = ops::matmul(tape, h, m_.param(p + ".self.v"));
      for (int r = 0; r < rows_; ++r) {
        const std::size_t dst = (static_cast<std::size_t>(r) * cap_ + t) * inner;
        std::copy_n(k->value.data() + static_cast<std::size_t>(r) * inner, inner, self_k_[l]->value.data() + dst);
        std::copy_n(v->value.data() + static_cast<std::size_t>(r) * inner, inner, self_v_[l]->value.data() + dst);
      }
      ops::AttentionSpec self;
      self.batch = rows_;
      self.q_len = 1;
      self.k_len = t + 1;
      self.k_rows_per_batch = cap_;
      self.q_offset = t;
      self.heads = c.nh;
      self.head_dim = c.kv;
      self.causal = true;
      self.bidirectional = false;
      auto a = ops::attention(tape, ops::matmul(tape, h, m_.param(p + ".self.q")), self_k_[l], self_v_[l], &bias, self);
      y = ops::add(tape, y, ops::matmul(tape, a, m_.param(p + ".self.o")));

      ops::AttentionSpec cross;
      cross.batch = rows_;
      cross.q_len = 1;
      cross.k_len = src_len_;
      cross.heads = c.nh;
      cross.head_dim = c.kv;
      cross.key_len = &src_lengths_;
      h = ops::rms_norm(tape, y, m_.param(p + ".cross_norm"));
      a = ops::attention(tape, ops::matmul(tape, h, m_.param(p + ".cross.q")), cross_k_[l], cross_v_[l], nullptr, cross);
      y = ops::add(tape, y, ops::matmul(tape, a, m_.param(p + ".cross.o")));
      y = m_.ffn(tape, p, y);
    }
    const auto out = m_.output_logits(tape, ops::rms_norm(tape, y, m_.param("decoder.final_norm")));
    logits.assign(out->value.begin(), out->value.end());
  }

 private:
  const Transformer<T>& m_;
  int cap_;
  int rows_ = 0;
  int src_len_ = 0;
  std::vector<int> src_lengths_;
  std::vector<Var<T>> cross_k_, cross_v_, self_k_, self_v_;
};

template <class T>
std::vector<std::vector<TokenId>> Transformer<T>::greedy_decode(const std::vector<std::vector<TokenId>>& srcs,
                                                                int max_len, int batch_size) const {
  if (batch_size <= 0) throw UsageError("decode batch size must be positive");
  max_len = std::min(max_len, config_.max_len);
  std::vector<std::vector<TokenId>> out;
  out.reserve(srcs.size());
  Scorer scorer(*this, std::max(max_len, 1));
  for (std::size_t start = 0; start < srcs.size(); start += batch_size) {
    const std::size_t end = std::min(srcs.size(), start + static_cast<std::size_t>(batch_size));
    const std::vector<std::vector<TokenId>> chunk(srcs.begin() + static_cast<std::ptrdiff_t>(start),
                                                  srcs.begin() + static_cast<std::ptrdiff_t>(end));
    for (auto& seq : hierbias::greedy_decode(scorer, chunk, max_len)) out.push_back(std::move(seq));
  }
  return out;
}

GradCheckResult grad_check(Transformer<double>& model, const Seq2SeqBatch& batch, double eps, int samples,
                           std::uint64_t seed, double floor) {
  model.zero_grad();
  {
    Tape<double> tape;
    const auto loss = model.loss(tape, batch);
    tape.backward(loss);
  }
  const auto& params = model.parameters();
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  Rng rng(seed);
  for (std::size_t p = 0; p < params.size(); ++p) picks.push_back({p, rng.below(params[p].var->size())});
  std::vector<std::size_t> offsets{0};
  for (const auto& p : params) offsets.push_back(offsets.back() + p.var->size());
  while (static_cast<int>(picks.size()) < samples) {
    const std::size_t flat = rng.below(offsets.back());
    const std::size_t p = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
    picks.push_back({p, flat - offsets[p]});
  }
  auto eval = [&](std::vector<std::uint8_t>& pattern) {
    Tape<double> tape(false);
    pattern.clear();
    tape.activation_pattern = &pattern;
    return model.loss(tape, batch)->value[0];
  };
  GradCheckResult res;
  std::vector<std::uint8_t> pat_up, pat_down;
  for (std::size_t n = 0; n < picks.size(); ++n) {
    const auto [p, i] = picks[n];
    auto& var = params[p].var;
    const double orig = var->value[i];
    var->value[i] = orig + eps;
    const double up = eval(pat_up);
    var->value[i] = orig - eps;
    const double down = eval(pat_down);
    var->value[i] = orig;
    if (pat_up != pat_down) {
      // The step straddles a ReLU kink; the difference quotient is not a
      // derivative there. Draw a replacement entry from the same tensor.
      ++res.skipped_kinks;
      if (res.skipped_kinks > 10 * samples) throw NumericalError("grad_check: too many kink crossings");
      picks.push_back({p, rng.below(var->size())});
      continue;
    }
    const double numeric = (up - down) / (2 * eps);
    const double analytic = var->grad[i];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_param = params[p].name;
    }
    ++res.checked;
  }
  return res;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace hierbias
