#include "primal/mapper.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace primal {

std::vector<RC> Region::routers() const {
  std::vector<RC> out;
  out.reserve(static_cast<size_t>(area()));
  for (int r = row_start; r < row_end; ++r)
    for (int c = col_start; c < col_end; ++c) out.push_back({r, c});
  return out;
}

bool LayerShape::lora_on(const std::string& id) const {
  if (lora_rank == 0) return false;
  auto want = [&](LoraTarget t) {
    return std::find(lora_targets.begin(), lora_targets.end(), t) !=
           lora_targets.end();
  };
  if (id == "WQ") return want(LoraTarget::Q);
  if (id == "WK") return want(LoraTarget::K);
  if (id == "WV") return want(LoraTarget::V);
  if (id == "WO") return want(LoraTarget::O);
  return false;
}

const MatrixDef* LayerShape::find(const std::string& id) const {
  for (const auto& m : matrices)
    if (m.id == id) return &m;
  return nullptr;
}

LayerShape attention_layer_shape(const ModelSpec& m, bool include_ffn) {
  LayerShape s;
  s.hidden = m.hidden_dim;
  s.num_heads = m.num_heads;
  s.head_dim = m.head_dim;
  s.lora_rank = m.lora.rank;
  s.lora_scale = m.lora.scale;
  s.lora_targets = m.lora.targets;
  const int d = m.hidden_dim;
  s.matrices = {{"WQ", d, d}, {"WK", d, d}, {"WV", d, d}, {"WO", d, d}};
  if (include_ffn) {
    s.matrices.push_back({"F1", m.ffn_dim, d});
    s.matrices.push_back({"F2", d, m.ffn_dim});
  }
  return s;
}

const MatrixPlacement* MappingPlan::find(const std::string& id) const {
  for (const auto& mp : matrices)
    if (mp.def.id == id) return &mp;
  return nullptr;
}

const MatrixPlacement& MappingPlan::require(const std::string& id) const {
  const MatrixPlacement* mp = find(id);
  if (!mp) throw std::invalid_argument("plan has no matrix " + id);
  return *mp;
}

std::pair<int, int> tile_matrix(int d_out, int d_in, int rram_rows,
                                int rram_cols) {
  assert(d_out > 0 && d_in > 0 && rram_rows > 0 && rram_cols > 0);
  return {(d_out + rram_rows - 1) / rram_rows, (d_in + rram_cols - 1) / rram_cols};
}

namespace {

std::vector<int> divisors(int n) {
  std::vector<int> out;
  for (int d = 1; d <= n; ++d)
    if (n % d == 0) out.push_back(d);
  return out;
}

struct PlacementOption {
  int g1, g2, br, bc;
  TileOrder order;
  int height() const { return g1 * br; }
  int width() const { return g2 * bc; }
};

std::vector<PlacementOption> options_for(const MatrixDef& def,
                                         const HardwareSpec& hw) {
  auto [tr, tc] = tile_matrix(def.d_out, def.d_in, hw.rram_rows, hw.rram_cols);
  std::vector<PlacementOption> opts;
  for (int g1 : divisors(tr)) {
    int g2 = tr / g1;
    for (int br : divisors(tc)) {
      int bc = tc / br;
      int h = g1 * br, w = g2 * bc;
      if (h > hw.mesh_rows || w > hw.mesh_cols) continue;
      opts.push_back({g1, g2, br, bc, TileOrder::kRowMajor});
      if (g1 > 1 && g2 > 1)
        opts.push_back({g1, g2, br, bc, TileOrder::kColMajor});
    }
  }
  return opts;
}

// Column-wise shelf packing: rectangles fill a vertical strip top to bottom;
// a rectangle that does not fit opens a new strip to the right.
std::optional<std::vector<Region>> shelf_pack(const std::vector<std::pair<int, int>>& hw_dims,
                                              int mesh_rows, int mesh_cols) {
  std::vector<Region> out;
  int shelf_col = 0, shelf_w = 0, next_row = 0;
  for (auto [h, w] : hw_dims) {
    if (h > mesh_rows || w > mesh_cols) return std::nullopt;
    bool fits_here = shelf_w > 0 && w <= shelf_w && next_row + h <= mesh_rows;
    if (!fits_here) {
      shelf_col += shelf_w;
      shelf_w = w;
      next_row = 0;
      if (shelf_col + w > mesh_cols) return std::nullopt;
    }
    out.push_back({shelf_col, shelf_col + w, next_row, next_row + h});
    next_row += h;
  }
  return out;
}

std::optional<MappingPlan> assemble_plan(const LayerShape& shape,
                                         const HardwareSpec& hw,
                                         const std::vector<PlacementOption>& choice) {
  std::vector<std::pair<int, int>> dims;
  dims.reserve(choice.size());
  for (const auto& o : choice) dims.push_back({o.height(), o.width()});
  auto regions = shelf_pack(dims, hw.mesh_rows, hw.mesh_cols);
  if (!regions) return std::nullopt;
  MappingPlan plan;
  for (size_t k = 0; k < shape.matrices.size(); ++k) {
    MatrixPlacement mp;
    mp.def = shape.matrices[k];
    auto [tr, tc] =
        tile_matrix(mp.def.d_out, mp.def.d_in, hw.rram_rows, hw.rram_cols);
    mp.tr = tr;
    mp.tc = tc;
    mp.g1 = choice[k].g1;
    mp.g2 = choice[k].g2;
    mp.br = choice[k].br;
    mp.bc = choice[k].bc;
    mp.order = choice[k].order;
    mp.region = (*regions)[k];
    plan.matrices.push_back(std::move(mp));
  }
  for (const auto& mp : plan.matrices) {
    std::string key = mp.def.id == "WQ"   ? "Q"
                      : mp.def.id == "WK" ? "K"
                      : mp.def.id == "WV" ? "V"
                      : mp.def.id == "WO" ? "O"
                                          : mp.def.id;
    plan.intermediates[key] = mp.region.routers();
  }
  if (plan.find("WK") && plan.find("WV")) {
    auto kv = plan.require("WK").region.routers();
    auto vv = plan.require("WV").region.routers();
    kv.insert(kv.end(), vv.begin(), vv.end());
    plan.intermediates["KV"] = kv;
  }
  return plan;
}

// Nearest member of a rectangle to a point (coordinate clamp).
RC clamp_into(const Region& r, RC p) {
  return {std::clamp(p.row, r.row_start, r.row_end - 1),
          std::clamp(p.col, r.col_start, r.col_end - 1)};
}

int head_block(const LayerShape& shape, const HardwareSpec& hw, int head) {
  int lo = head * shape.head_dim;
  int hi = lo + shape.head_dim - 1;
  if (lo / hw.rram_rows != hi / hw.rram_rows)
    throw std::invalid_argument(
        "attention heads must not straddle output row-blocks "
        "(rram_rows must be a multiple of head_dim)");
  return lo / hw.rram_rows;
}

struct VolumeAcc {
  CommVolume v;
  void unicast(RC src, RC dst, std::int64_t payload, std::int64_t reps) {
    if (payload <= 0 || reps <= 0) return;
    v.flits += payload * reps;
    v.flit_hops += double(payload) * double(reps) * manhattan(src, dst);
  }
  void bcast(int member_count, std::int64_t payload, std::int64_t reps) {
    if (member_count <= 1 || payload <= 0 || reps <= 0) return;
    v.flits += payload * reps;
    v.flit_hops += double(payload) * double(reps) * (member_count - 1);
  }
  void reduce(int member_count, std::int64_t payload, std::int64_t reps) {
    if (member_count <= 1 || payload <= 0 || reps <= 0) return;
    v.flits += payload * reps * (member_count - 1);
    v.flit_hops += double(payload) * double(reps) * (member_count - 1);
  }
};

// Projection-phase traffic for one matrix: ingress unicast, input broadcast,
// per-block partial-sum reduction, and the low-rank adapter path when on.
void proj_volume(VolumeAcc& acc, const MappingPlan& plan, const LayerShape& shape,
                 const HardwareSpec& hw, const std::string& id, RC stage_from,
                 std::int64_t reps) {
  const MatrixPlacement& mp = plan.require(id);
  RC root = clamp_into(mp.region, stage_from);
  acc.unicast(stage_from, root, mp.def.d_in, reps);
  acc.bcast(mp.region.area(), mp.def.d_in, reps);
  for (int i = 0; i < mp.tr; ++i)
    acc.reduce(mp.br * mp.bc, mp.rows_of_block(i, hw.rram_rows), reps);
  if (shape.lora_on(id)) {
    acc.reduce(mp.br * mp.bc, shape.lora_rank, reps);
    acc.bcast(mp.region.area(), shape.lora_rank, reps);
  }
}

void kvstage_volume(VolumeAcc& acc, const MappingPlan& plan,
                    const HardwareSpec& hw, const std::string& id, int token) {
  const MatrixPlacement& mp = plan.require(id);
  auto sites = mp.region.routers();
  RC site = sites[token % sites.size()];
  for (int i = 0; i < mp.tr; ++i)
    acc.unicast(mp.owner(i), site, mp.rows_of_block(i, hw.rram_rows), 1);
}

// Attention score/mix/context traffic for queries [q_lo, q_hi) against a
// cache of `cache_len` tokens. Prefill: q_lo=0, q_hi=S, cache_len=S.
// Decode of position t: q_lo=t, q_hi=t+1, cache_len=t+1.
void attention_volume(VolumeAcc& acc, const MappingPlan& plan,
                      const LayerShape& shape, const HardwareSpec& hw, int q_lo,
                      int q_hi, int cache_len) {
  const MatrixPlacement& wq = plan.require("WQ");
  const MatrixPlacement& wk = plan.require("WK");
  const MatrixPlacement& wv = plan.require("WV");
  auto ksites = wk.region.routers();
  const int nk = static_cast<int>(ksites.size());
  RC exit = wv.region.origin();
  for (int h = 0; h < shape.num_heads; ++h) {
    RC qs = wq.owner(head_block(shape, hw, h));
    for (int j = 0; j < cache_len; ++j)
      acc.unicast(ksites[j % nk], qs, shape.head_dim, 1);
    RC vroot = clamp_into(wv.region, qs);
    for (int i = q_lo; i < q_hi; ++i) {
      acc.unicast(qs, vroot, i + 1, 1);
      acc.bcast(wv.region.area(), i + 1, 1);
      acc.reduce(wv.region.area(), shape.head_dim, 1);
    }
  }
  (void)exit;
}

void output_volume(VolumeAcc& acc, const MappingPlan& plan,
                   const LayerShape& shape, const HardwareSpec& hw,
                   std::int64_t reps) {
  const MatrixPlacement& wv = plan.require("WV");
  const MatrixPlacement& wo = plan.require("WO");
  RC exit = wv.region.origin();
  proj_volume(acc, plan, shape, hw, "WO", exit, reps);
  for (int i = 0; i < wo.tr; ++i)
    acc.unicast(wo.owner(i), kEntryRouter, wo.rows_of_block(i, hw.rram_rows), reps);
}

void ffn_volume(VolumeAcc& acc, const MappingPlan& plan, const LayerShape& shape,
                const HardwareSpec& hw, std::int64_t reps) {
  const MatrixPlacement* f1 = plan.find("F1");
  const MatrixPlacement* f2 = plan.find("F2");
  if (!f1 || !f2) return;
  proj_volume(acc, plan, shape, hw, "F1", kEntryRouter, reps);
  RC f2root = clamp_into(f2->region, f1->region.origin());
  for (int i = 0; i < f1->tr; ++i)
    acc.unicast(f1->owner(i), f2root, f1->rows_of_block(i, hw.rram_rows), reps);
  acc.bcast(f2->region.area(), f2->def.d_in, reps);
  for (int i = 0; i < f2->tr; ++i)
    acc.reduce(f2->br * f2->bc, f2->rows_of_block(i, hw.rram_rows), reps);
  for (int i = 0; i < f2->tr; ++i)
    acc.unicast(f2->owner(i), kEntryRouter, f2->rows_of_block(i, hw.rram_rows), reps);
}

bool has_attention(const MappingPlan& plan) {
  return plan.find("WQ") && plan.find("WK") && plan.find("WV") && plan.find("WO");
}

}  // namespace

CommVolume comm_volume_prefill(const MappingPlan& plan, const LayerShape& shape,
                               const HardwareSpec& hw, int tokens) {
  VolumeAcc acc;
  if (has_attention(plan)) {
    for (const char* id : {"WQ", "WK", "WV"})
      proj_volume(acc, plan, shape, hw, id, kEntryRouter, tokens);
    for (int j = 0; j < tokens; ++j) {
      kvstage_volume(acc, plan, hw, "WK", j);
      kvstage_volume(acc, plan, hw, "WV", j);
    }
    attention_volume(acc, plan, shape, hw, 0, tokens, tokens);
    output_volume(acc, plan, shape, hw, tokens);
  }
  ffn_volume(acc, plan, shape, hw, tokens);
  return acc.v;
}

CommVolume comm_volume_decode(const MappingPlan& plan, const LayerShape& shape,
                              const HardwareSpec& hw, int position) {
  VolumeAcc acc;
  if (has_attention(plan)) {
    for (const char* id : {"WQ", "WK", "WV"})
      proj_volume(acc, plan, shape, hw, id, kEntryRouter, 1);
    kvstage_volume(acc, plan, hw, "WK", position);
    kvstage_volume(acc, plan, hw, "WV", position);
    attention_volume(acc, plan, shape, hw, position, position + 1, position + 1);
    output_volume(acc, plan, shape, hw, 1);
  }
  ffn_volume(acc, plan, shape, hw, 1);
  return acc.v;
}

double cost(const MappingPlan& plan, const LayerShape& shape,
            const HardwareSpec& hw, const TrafficProfile& profile) {
  return comm_volume_prefill(plan, shape, hw, profile.tokens).flit_hops;
}

namespace {

std::int64_t total_tiles(const LayerShape& shape, const HardwareSpec& hw) {
  std::int64_t n = 0;
  for (const auto& m : shape.matrices) {
    auto [tr, tc] = tile_matrix(m.d_out, m.d_in, hw.rram_rows, hw.rram_cols);
    n += std::int64_t(tr) * tc;
  }
  return n;
}

void check_lora_capacity(const MappingPlan& plan, const LayerShape& shape,
                         const HardwareSpec& hw) {
  if (shape.lora_rank == 0) return;
  const std::int64_t sram_cells = std::int64_t(hw.sram_rows) * hw.sram_cols;
  for (const auto& mp : plan.matrices) {
    if (!shape.lora_on(mp.def.id)) continue;
    std::int64_t need = std::int64_t(shape.lora_rank) * (mp.def.d_in + mp.def.d_out);
    if (need > sram_cells * mp.region.area())
      throw CapacityError("LoRA adapters for " + mp.def.id +
                          " exceed region SRAM capacity");
    // per-PE shards: A column slices on row-block 0 tiles, B row blocks on owners
    for (int j = 0; j < mp.tc; ++j)
      if (std::int64_t(shape.lora_rank) * mp.cols_of_tile(j, hw.rram_cols) +
              (j == 0 ? std::int64_t(shape.lora_rank) * hw.rram_rows : 0) >
          sram_cells)
        throw CapacityError("LoRA A shard exceeds a PE's SRAM capacity");
  }
}

using Choice = std::vector<size_t>;

std::string tiebreak_key(const MappingPlan& plan) {
  std::ostringstream os;
  for (const auto& mp : plan.matrices)
    os << mp.region.row_start << ',' << mp.region.col_start << ','
       << (mp.order == TileOrder::kRowMajor ? 0 : 1) << ','
       << mp.g1 << ',' << mp.br << ';';
  return os.str();
}

}  // namespace

MappingPlan naive_row_major_plan(const LayerShape& shape, const HardwareSpec& hw) {
  std::vector<PlacementOption> choice;
  for (const auto& m : shape.matrices) {
    auto [tr, tc] = tile_matrix(m.d_out, m.d_in, hw.rram_rows, hw.rram_cols);
    PlacementOption natural{tr, 1, 1, tc, TileOrder::kRowMajor};
    if (natural.height() <= hw.mesh_rows && natural.width() <= hw.mesh_cols) {
      choice.push_back(natural);
      continue;
    }
    auto opts = options_for(m, hw);
    if (opts.empty())
      throw CapacityError("matrix " + m.id + " has no feasible placement");
    choice.push_back(opts.front());
  }
  auto plan = assemble_plan(shape, hw, choice);
  if (!plan)
    throw CapacityError("naive plan does not fit the mesh");
  plan->cost = cost(*plan, shape, hw, {});
  check_lora_capacity(*plan, shape, hw);
  return *plan;
}

std::vector<MappingPlan> enumerate_candidate_plans(const LayerShape& shape,
                                                   const HardwareSpec& hw) {
  std::vector<std::vector<PlacementOption>> opts;
  for (const auto& m : shape.matrices) opts.push_back(options_for(m, hw));
  std::vector<MappingPlan> out;
  Choice idx(opts.size(), 0);
  while (true) {
    std::vector<PlacementOption> choice;
    for (size_t k = 0; k < opts.size(); ++k) choice.push_back(opts[k][idx[k]]);
    if (auto plan = assemble_plan(shape, hw, choice)) out.push_back(*plan);
    size_t k = 0;
    for (; k < idx.size(); ++k) {
      if (++idx[k] < opts[k].size()) break;
      idx[k] = 0;
    }
    if (k == idx.size()) break;
  }
  return out;
}

MappingPlan map_layer(const LayerShape& shape, const HardwareSpec& hw,
                      const TrafficProfile& profile) {
  if (shape.matrices.empty())
    throw std::invalid_argument("map_layer: empty layer");
  if (total_tiles(shape, hw) > hw.pe_count)
    throw CapacityError("layer tiles exceed the compute tile's PE count");

  std::vector<std::vector<PlacementOption>> opts;
  double space = 1;
  for (const auto& m : shape.matrices) {
    opts.push_back(options_for(m, hw));
    if (opts.back().empty())
      throw CapacityError("matrix " + m.id + " has no feasible placement");
    space *= double(opts.back().size());
  }

  const double kExhaustiveLimit = 20000;
  std::optional<MappingPlan> best;
  std::string best_key;

  auto consider = [&](const std::vector<PlacementOption>& choice) {
    auto plan = assemble_plan(shape, hw, choice);
    if (!plan) return;
    plan->cost = cost(*plan, shape, hw, profile);
    std::string key = tiebreak_key(*plan);
    if (!best || plan->cost < best->cost ||
        (plan->cost == best->cost && key < best_key)) {
      best = std::move(plan);
      best_key = std::move(key);
    }
  };

  if (space <= kExhaustiveLimit) {
    Choice idx(opts.size(), 0);
    while (true) {
      std::vector<PlacementOption> choice;
      for (size_t k = 0; k < opts.size(); ++k) choice.push_back(opts[k][idx[k]]);
      consider(choice);
      size_t k = 0;
      for (; k < idx.size(); ++k) {
        if (++idx[k] < opts[k].size()) break;
        idx[k] = 0;
      }
      if (k == idx.size()) break;
    }
  } else {
    // coordinate descent from the naive plan, one matrix at a time
    std::vector<PlacementOption> cur;
    for (size_t k = 0; k < opts.size(); ++k) {
      const auto& m = shape.matrices[k];
      auto [tr, tc] = tile_matrix(m.d_out, m.d_in, hw.rram_rows, hw.rram_cols);
      PlacementOption natural{tr, 1, 1, tc, TileOrder::kRowMajor};
      bool found = false;
      for (const auto& o : opts[k])
        if (o.g1 == natural.g1 && o.br == natural.br &&
            o.order == TileOrder::kRowMajor) {
          cur.push_back(o);
          found = true;
          break;
        }
      if (!found) cur.push_back(opts[k].front());
    }
    consider(cur);
    if (!best) {
      // naive start may not pack; seed from the first feasible combination
      Choice idx(opts.size(), 0);
      while (!best) {
        std::vector<PlacementOption> choice;
        for (size_t k = 0; k < opts.size(); ++k) choice.push_back(opts[k][idx[k]]);
        consider(choice);
        size_t k = 0;
        for (; k < idx.size(); ++k) {
          if (++idx[k] < opts[k].size()) break;
          idx[k] = 0;
        }
        if (k == idx.size()) break;
      }
      if (!best) throw CapacityError("no candidate plan fits the mesh");
      cur.clear();
      for (const auto& mp : best->matrices)
        cur.push_back({mp.g1, mp.g2, mp.br, mp.bc, mp.order});
    }
    for (int sweep = 0; sweep < 8; ++sweep) {
      bool improved = false;
      for (size_t k = 0; k < opts.size(); ++k) {
        double before = best->cost;
        for (const auto& o : opts[k]) {
          auto trial = cur;
          trial[k] = o;
          consider(trial);
        }
        if (best->cost < before) {
          improved = true;
          cur.clear();
          for (const auto& mp : best->matrices)
            cur.push_back({mp.g1, mp.g2, mp.br, mp.bc, mp.order});
        }
      }
      if (!improved) break;
    }
  }

  if (!best) throw CapacityError("no candidate plan fits the mesh");
  check_lora_capacity(*best, shape, hw);
  return *best;
}

std::string fragment_shape_key(const LayerShape& shape) {
  std::ostringstream os;
  os << shape.hidden << '/' << shape.num_heads << '/' << shape.head_dim << '/'
     << shape.lora_rank << ':';
  for (const auto& m : shape.matrices)
    os << m.id << '=' << m.d_out << 'x' << m.d_in << ';';
  for (auto t : shape.lora_targets) os << int(t) << ',';
  return os.str();
}

const MappingPlan& CtAssignment::plan_for(const LayerFragment& f) const {
  return plans.at(fragment_shape_key(f.shape));
}

CtAssignment split_across_cts(const ModelSpec& m, const HardwareSpec& hw) {
  LayerShape full = attention_layer_shape(m, /*include_ffn=*/true);

  // per-matrix row-block counts
  std::vector<int> trs;
  for (const auto& md : full.matrices) {
    auto [tr, tc] = tile_matrix(md.d_out, md.d_in, hw.rram_rows, hw.rram_cols);
    (void)tc;
    trs.push_back(tr);
  }

  // recursive halving of block ranges: part p of `parts` (a power of two)
  auto block_range = [](int tr, int parts, int p) {
    int lo = 0, hi = tr, n = parts;
    while (n > 1) {
      int mid = lo + (hi - lo + 1) / 2;  // ceil half first
      if (p < n / 2) {
        hi = mid;
      } else {
        lo = mid;
        p -= n / 2;
      }
      n /= 2;
    }
    return std::pair<int, int>(lo, hi);
  };

  auto fragment_tiles = [&](int parts, int p) {
    std::int64_t tiles = 0;
    for (size_t k = 0; k < full.matrices.size(); ++k) {
      auto [lo, hi] = block_range(trs[k], parts, p);
      auto [tr, tc] = tile_matrix(full.matrices[k].d_out, full.matrices[k].d_in,
                                  hw.rram_rows, hw.rram_cols);
      (void)tr;
      tiles += std::int64_t(hi - lo) * tc;
    }
    return tiles;
  };

  int parts = 1;
  while (true) {
    std::int64_t worst = 0;
    for (int p = 0; p < parts; ++p) worst = std::max(worst, fragment_tiles(parts, p));
    if (worst <= hw.pe_count) break;
    parts *= 2;
    if (parts > 65536)
      throw CapacityError("layer cannot be split to fit a compute tile");
  }

  CtAssignment out;
  std::vector<LayerFragment> frags;
  for (int layer = 0; layer < m.num_layers; ++layer) {
    for (int p = 0; p < parts; ++p) {
      LayerFragment f;
      f.layer = layer;
      f.part = p;
      f.parts = parts;
      f.shape = full;
      auto [qlo, qhi] = block_range(trs[0], parts, p);
      f.block_lo = qlo;
      for (size_t k = 0; k < full.matrices.size(); ++k) {
        auto [lo, hi] = block_range(trs[k], parts, p);
        int rows = std::min(full.matrices[k].d_out, hi * hw.rram_rows) -
                   lo * hw.rram_rows;
        f.shape.matrices[k].d_out = rows;
      }
      f.shape.num_heads = f.shape.matrices[0].d_out / full.head_dim;
      f.tiles = fragment_tiles(parts, p);
      (void)qhi;
      frags.push_back(std::move(f));
    }
  }

  std::int64_t cur = 0;
  for (auto& f : frags) {
    if (out.per_ct.empty() || cur + f.tiles > hw.pe_count) {
      out.per_ct.emplace_back();
      cur = 0;
    }
    cur += f.tiles;
    std::string key = fragment_shape_key(f.shape);
    if (!out.plans.count(key)) out.plans[key] = map_layer(f.shape, hw);
    out.per_ct.back().push_back(std::move(f));
  }
  if (out.ct_used() > hw.max_cts)
    throw CapacityError("model exceeds the configured maximum CT count");
  return out;
}

}  // namespace primal
