#pragma once

#include <optional>
#include <span>
#include <vector>

#include "primal/config.hpp"
#include "primal/tensor.hpp"

namespace primal {

// Low-rank adapter pair: b is d_out x r, a is r x d_in.
struct LoraAdapter {
  Tensor2D b;
  Tensor2D a;
};

struct AttnWeights {
  Tensor2D wq, wk, wv, wo;  // each hidden x hidden
  std::optional<LoraAdapter> lq, lk, lv, lo;
  double lora_scale = 1.0;
};

struct KvCache {
  Tensor2D k;  // t x hidden, one row per past token
  Tensor2D v;
};

// y = W x, accumulated in ascending column order.
std::vector<Word> matvec(const Tensor2D& w, std::span<const Word> x,
                         const Arith& ar);

// W x + s * B (A x). The base and adapter paths are evaluated separately and
// combined per element, matching the RRAM/SRAM split in hardware. Empty B/A
// (rank 0) yields the plain product.
std::vector<Word> lora_smac(const Tensor2D& w, const Tensor2D& b,
                            const Tensor2D& a, double s,
                            std::span<const Word> x, const Arith& ar);

// In-place softmax over a score row; max-subtracted, ascending-index sums.
void softmax_row(std::span<Word> row, const Arith& ar);

// Full causal multi-head attention over X (seq x hidden), LoRA applied to
// whichever adapters are present in w. Scores use dense Q.K^T with the causal
// mask applied at softmax time.
Tensor2D attention_forward(const AttnWeights& w, const Tensor2D& x,
                           int num_heads, const Arith& ar);

// One decode token against the cache; appends exactly one K and one V row.
std::vector<Word> decode_step(const AttnWeights& w, KvCache& cache,
                              std::span<const Word> x, int num_heads,
                              const Arith& ar);

// Two-stage FFN with elementwise ReLU between; shape/linearity reference.
std::vector<Word> ffn_forward(const Tensor2D& w1, const Tensor2D& w2,
                              std::span<const Word> x, const Arith& ar);

Tensor2D residual_add(const Tensor2D& x, const Tensor2D& y, const Arith& ar);

// Synthetic seeded weights for one layer of the model, uniform in
// [-0.25, 0.25). The stream depends only on (model.seed, layer, matrix).
AttnWeights make_layer_weights(const ModelSpec& m, int layer, const Arith& ar);

// FFN pair for one layer from the same stream family.
std::pair<Tensor2D, Tensor2D> make_ffn_weights(const ModelSpec& m, int layer,
                                               const Arith& ar);

}  // namespace primal
