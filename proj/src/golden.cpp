#include "primal/golden.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace primal {

std::vector<Word> matvec(const Tensor2D& w, std::span<const Word> x,
                         const Arith& ar) {
  if (static_cast<int>(x.size()) != w.cols)
    throw std::invalid_argument("matvec: dimension mismatch");
  std::vector<Word> y(w.rows, ar.zero());
  for (int i = 0; i < w.rows; ++i) {
    Word acc = ar.zero();
    for (int j = 0; j < w.cols; ++j) acc = ar.add(acc, ar.mul(w.at(i, j), x[j]));
    y[i] = acc;
  }
  return y;
}

std::vector<Word> lora_smac(const Tensor2D& w, const Tensor2D& b,
                            const Tensor2D& a, double s,
                            std::span<const Word> x, const Arith& ar) {
  std::vector<Word> y = matvec(w, x, ar);
  const int r = a.rows;
  if (r == 0) return y;
  if (b.cols != r || b.rows != w.rows || a.cols != w.cols)
    throw std::invalid_argument("lora_smac: adapter dimension mismatch");
  std::vector<Word> u = matvec(a, x, ar);
  std::vector<Word> lv = matvec(b, u, ar);
  const Word sw = ar.from_double(s);
  for (int i = 0; i < w.rows; ++i) y[i] = ar.add(y[i], ar.mul(sw, lv[i]));
  return y;
}

void softmax_row(std::span<Word> row, const Arith& ar) {
  if (row.empty()) return;
  Word m = row[0];
  for (Word w : row) m = ar.max(m, w);
  Word total = ar.zero();
  for (Word& w : row) {
    w = ar.exp(ar.sub(w, m));
    total = ar.add(total, w);
  }
  for (Word& w : row) w = ar.div(w, total);
}

namespace {

std::vector<Word> project(const Tensor2D& w, const std::optional<LoraAdapter>& ad,
                          double s, std::span<const Word> x, const Arith& ar) {
  if (ad) return lora_smac(w, ad->b, ad->a, s, x, ar);
  return matvec(w, x, ar);
}

// context row for one query against keys/values rows [0, upto]
void attend_row(std::span<const Word> q, const Tensor2D& keys,
                const Tensor2D& values, int upto, int num_heads, int head_dim,
                const Arith& ar, std::span<Word> out) {
  const Word inv_scale = ar.from_double(1.0 / std::sqrt(double(head_dim)));
  std::vector<Word> scores(upto + 1);
  for (int h = 0; h < num_heads; ++h) {
    const int off = h * head_dim;
    for (int j = 0; j <= upto; ++j) {
      Word acc = ar.zero();
      for (int e = 0; e < head_dim; ++e)
        acc = ar.add(acc, ar.mul(q[off + e], keys.at(j, off + e)));
      scores[j] = ar.mul(acc, inv_scale);
    }
    softmax_row(scores, ar);
    for (int e = 0; e < head_dim; ++e) {
      Word acc = ar.zero();
      for (int j = 0; j <= upto; ++j)
        acc = ar.add(acc, ar.mul(scores[j], values.at(j, off + e)));
      out[off + e] = acc;
    }
  }
}

}  // namespace

Tensor2D attention_forward(const AttnWeights& w, const Tensor2D& x,
                           int num_heads, const Arith& ar) {
  const int d = w.wq.rows;
  if (x.cols != d) throw std::invalid_argument("attention_forward: bad X width");
  const int head_dim = d / num_heads;
  const int seq = x.rows;
  Tensor2D q(seq, d), k(seq, d), v(seq, d);
  for (int t = 0; t < seq; ++t) {
    auto xq = project(w.wq, w.lq, w.lora_scale, x.row(t), ar);
    auto xk = project(w.wk, w.lk, w.lora_scale, x.row(t), ar);
    auto xv = project(w.wv, w.lv, w.lora_scale, x.row(t), ar);
    for (int c = 0; c < d; ++c) {
      q.at(t, c) = xq[c];
      k.at(t, c) = xk[c];
      v.at(t, c) = xv[c];
    }
  }
  Tensor2D out(seq, d);
  std::vector<Word> ctx(d);
  for (int i = 0; i < seq; ++i) {
    attend_row(q.row(i), k, v, i, num_heads, head_dim, ar, ctx);
    auto o = project(w.wo, w.lo, w.lora_scale, ctx, ar);
    for (int c = 0; c < d; ++c) out.at(i, c) = o[c];
  }
  return out;
}

std::vector<Word> decode_step(const AttnWeights& w, KvCache& cache,
                              std::span<const Word> x, int num_heads,
                              const Arith& ar) {
  const int d = w.wq.rows;
  const int head_dim = d / num_heads;
  auto q = project(w.wq, w.lq, w.lora_scale, x, ar);
  auto k = project(w.wk, w.lk, w.lora_scale, x, ar);
  auto v = project(w.wv, w.lv, w.lora_scale, x, ar);
  if (cache.k.rows == 0) {
    cache.k = Tensor2D(0, d);
    cache.v = Tensor2D(0, d);
  }
  cache.k.v.insert(cache.k.v.end(), k.begin(), k.end());
  cache.k.rows += 1;
  cache.v.v.insert(cache.v.v.end(), v.begin(), v.end());
  cache.v.rows += 1;
  const int t = cache.k.rows - 1;
  std::vector<Word> ctx(d);
  attend_row(q, cache.k, cache.v, t, num_heads, head_dim, ar, ctx);
  return project(w.wo, w.lo, w.lora_scale, ctx, ar);
}

std::vector<Word> ffn_forward(const Tensor2D& w1, const Tensor2D& w2,
                              std::span<const Word> x, const Arith& ar) {
  auto h = matvec(w1, x, ar);
  for (auto& e : h) e = ar.max(e, ar.zero());
  return matvec(w2, h, ar);
}

Tensor2D residual_add(const Tensor2D& x, const Tensor2D& y, const Arith& ar) {
  assert(x.rows == y.rows && x.cols == y.cols);
  Tensor2D out(x.rows, x.cols);
  for (size_t i = 0; i < x.v.size(); ++i) out.v[i] = ar.add(x.v[i], y.v[i]);
  return out;
}

namespace {

std::uint64_t stream_seed(std::uint64_t base, int layer, int which) {
  SplitMix64 rng(base + 0x1000003ULL * static_cast<std::uint64_t>(layer) +
                 0x9e37ULL * static_cast<std::uint64_t>(which));
  return rng.next();
}

}  // namespace

AttnWeights make_layer_weights(const ModelSpec& m, int layer, const Arith& ar) {
  const int d = m.hidden_dim;
  const double lo = -0.25, hi = 0.25;
  AttnWeights w;
  w.wq = random_tensor(d, d, stream_seed(m.seed, layer, 0), lo, hi, ar);
  w.wk = random_tensor(d, d, stream_seed(m.seed, layer, 1), lo, hi, ar);
  w.wv = random_tensor(d, d, stream_seed(m.seed, layer, 2), lo, hi, ar);
  w.wo = random_tensor(d, d, stream_seed(m.seed, layer, 3), lo, hi, ar);
  w.lora_scale = m.lora.scale;
  const int r = m.lora.rank;
  auto adapter = [&](LoraTarget t, int which) -> std::optional<LoraAdapter> {
    if (!m.lora.targets_matrix(t)) return std::nullopt;
    LoraAdapter ad;
    ad.b = random_tensor(d, r, stream_seed(m.seed, layer, 10 + which), lo, hi, ar);
    ad.a = random_tensor(r, d, stream_seed(m.seed, layer, 20 + which), lo, hi, ar);
    return ad;
  };
  w.lq = adapter(LoraTarget::Q, 0);
  w.lk = adapter(LoraTarget::K, 1);
  w.lv = adapter(LoraTarget::V, 2);
  w.lo = adapter(LoraTarget::O, 3);
  return w;
}

std::pair<Tensor2D, Tensor2D> make_ffn_weights(const ModelSpec& m, int layer,
                                               const Arith& ar) {
  const double lo = -0.25, hi = 0.25;
  Tensor2D w1 = random_tensor(m.ffn_dim, m.hidden_dim,
                              stream_seed(m.seed, layer, 4), lo, hi, ar);
  Tensor2D w2 = random_tensor(m.hidden_dim, m.ffn_dim,
                              stream_seed(m.seed, layer, 5), lo, hi, ar);
  return {std::move(w1), std::move(w2)};
}

}  // namespace primal
