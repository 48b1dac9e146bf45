#include "primal/isa.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "primal/fxp.hpp"

namespace primal {

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::kSend: return "SEND";
    case Opcode::kBcastFwd: return "BCAST_FWD";
    case Opcode::kReduceAdd: return "REDUCE_ADD";
    case Opcode::kDmac: return "DMAC";
    case Opcode::kSoftmax: return "SOFTMAX";
    case Opcode::kSpmRd: return "SPM_RD";
    case Opcode::kSpmWr: return "SPM_WR";
    case Opcode::kPeSmacRram: return "PE_SMAC_RRAM";
    case Opcode::kPeSmacSram: return "PE_SMAC_SRAM";
    case Opcode::kSramProg: return "SRAM_PROG";
    case Opcode::kGate: return "GATE";
    case Opcode::kBarrier: return "BARRIER";
  }
  return "?";
}

namespace {

RC clamp_into(const Region& r, RC p) {
  return {std::clamp(p.row, r.row_start, r.row_end - 1),
          std::clamp(p.col, r.col_start, r.col_end - 1)};
}

int head_block(const LayerShape& shape, const HardwareSpec& hw, int head) {
  int lo = head * shape.head_dim;
  int hi = lo + shape.head_dim - 1;
  if (lo / hw.rram_rows != hi / hw.rram_rows)
    throw std::invalid_argument(
        "attention heads must not straddle output row-blocks");
  return lo / hw.rram_rows;
}

// Per-matrix compiled state: trees and scratchpad buffers.
struct MatState {
  const MatrixPlacement* mp = nullptr;
  RC root{};                 // broadcast root (nearest member to the entry)
  int region_tree = -1;      // rooted at `root`
  int lora_tree = -1;        // rooted at owner(0), for the u broadcast
  std::vector<int> reduce_trees;  // per row-block, -1 when group size is 1
  int rootbuf = -1;          // full input staging at root (-1: reads X direct)
  std::map<RC, int> xb;      // per-member input slice
  std::map<RC, int> yp;      // per-member partial rows (-1 pattern: absent)
  std::map<RC, int> yrow;    // per-owner reduced rows
  std::map<RC, int> rram_unit;  // member -> rram binding index
  // lora
  std::map<RC, int> up;      // partial u at row-block-0 tiles
  int ubuf = -1;             // reduced u at owner(0)
  std::map<RC, int> ub;      // per-member broadcast u landing
  std::map<RC, int> a_unit;  // row-block-0 member -> sram binding (A shard)
  std::map<RC, int> b_unit;  // owner -> sram binding (B block)
  std::map<RC, int> lb;      // owner -> B*u block
};

struct HeadState {
  RC qsite{};
  int kslice = -1;   // transient K head-slice at qsite
  int scores = -1;   // max_pos x max_pos rows at qsite
  int probs = -1;
  RC vroot{};
  int rootp = -1;    // prob-row staging at vroot
  std::map<RC, int> pbuf;  // prob rows at V members
  std::map<RC, int> ctxp;  // context partials at V members
  int prob_tree = -1;
};

class Compiler {
 public:
  Compiler(const MappingPlan& plan, const LayerShape& shape,
           const HardwareSpec& hw, int max_pos)
      : plan_(plan), shape_(shape), hw_(hw), max_pos_(max_pos) {
    for (const char* id : {"WQ", "WK", "WV", "WO"})
      if (!plan_.find(id))
        throw std::invalid_argument(
            "compile_layer requires an attention layer plan (WQ,WK,WV,WO)");
    p_.mesh_rows = hw.mesh_rows;
    p_.mesh_cols = hw.mesh_cols;
    d_ = shape.hidden;
    setup_buffers();
  }

  void prefill(int tokens);
  void decode_step(int pos);

  Program take() {
    p_.layout.hidden = d_;
    p_.layout.x_addr = xbuf_;
    p_.layout.x_rows = max_pos_;
    p_.layout.out_addr = eout_;
    p_.layout.out_rows = max_pos_;
    return std::move(p_);
  }

 private:
  int alloc(RC at, int words) {
    int addr = next_addr_[at];
    next_addr_[at] = addr + words;
    if (next_addr_[at] > hw_.scratchpad_words())
      throw CapacityError(
          "scratchpad overflow during compilation; use the analytical mode "
          "for configurations of this size");
    return addr;
  }

  int add_tree(const std::vector<RC>& members, RC root) {
    p_.trees.push_back(build_tree(members, root, hw_.mesh_rows, hw_.mesh_cols,
                                  TreePhase::kBroadcast));
    return static_cast<int>(p_.trees.size()) - 1;
  }

  Instruction& emit(Opcode op, std::vector<int> deps) {
    Instruction in;
    in.op = op;
    in.tag = next_tag_++;
    std::sort(deps.begin(), deps.end());
    deps.erase(std::remove(deps.begin(), deps.end(), 0), deps.end());
    deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
    in.deps = std::move(deps);
    p_.instrs.push_back(std::move(in));
    phase_tags_.push_back(p_.instrs.back().tag);
    return p_.instrs.back();
  }

  void mark_phase(const std::string& name) {
    p_.phases.push_back({name, static_cast<int>(p_.instrs.size())});
  }

  int barrier() {
    Instruction& in = emit(Opcode::kBarrier, phase_tags_);
    int tag = in.tag;
    phase_tags_.clear();
    barrier_ = tag;
    return tag;
  }

  int slots_table(std::vector<TreeSlot> slots) {
    p_.slot_tables.push_back(std::move(slots));
    return static_cast<int>(p_.slot_tables.size()) - 1;
  }

  void setup_buffers();
  void setup_matrix(const std::string& id, MatState& ms, RC stage_from);
  void projection(const std::string& id, RC stage_from, int stage_addr,
                  int rep0, int reps);
  void kv_stage(const std::string& id, std::vector<int>& cache_bases, int token);
  void scores_for(int h, int j, int q_lo, int q_count);
  void mix_row(int h, int i);
  void output_proj(int rep0, int reps);

  const MappingPlan& plan_;
  const LayerShape& shape_;
  const HardwareSpec& hw_;
  int max_pos_;
  int d_;
  Program p_;
  std::map<RC, int> next_addr_;
  int next_tag_ = 1;
  int barrier_ = 0;
  std::vector<int> phase_tags_;

  int xbuf_ = -1;
  int eout_ = -1;
  std::map<std::string, MatState> mat_;
  std::vector<HeadState> heads_;
  std::vector<int> kcache_, vcache_;  // per-site base addresses
  int kv_entries_ = 0;                // cache entries allocated per site
  RC ctx_exit_{};
  int ctxbuf_ = -1;
  int ctx_tree_ = -1;
  std::map<std::string, int> reduce_tree_memo_;
  std::map<int, int> last_dot_;        // per head: last score DMAC tag
  std::map<int, int> last_mix_;        // per head: last ctx reduce/wacc tag
};

void Compiler::setup_matrix(const std::string& id, MatState& ms, RC stage_from) {
  ms.mp = &plan_.require(id);
  const MatrixPlacement& mp = *ms.mp;
  ms.root = clamp_into(mp.region, stage_from);
  auto members = mp.region.routers();
  if (mp.region.area() > 1) ms.region_tree = add_tree(members, ms.root);

  if (ms.root == stage_from) {
    ms.rootbuf = -1;  // broadcast reads the staged buffer directly
  } else {
    ms.rootbuf = alloc(ms.root, max_pos_ * mp.def.d_in);
  }
  const bool multi = mp.region.area() > 1;
  for (int i = 0; i < mp.tr; ++i) {
    const int rows = mp.rows_of_block(i, hw_.rram_rows);
    for (int j = 0; j < mp.tc; ++j) {
      RC at = mp.tile_pos(i, j);
      const int cols = mp.cols_of_tile(j, hw_.rram_cols);
      if (multi) ms.xb[at] = alloc(at, max_pos_ * cols);
      if (mp.br * mp.bc > 1) ms.yp[at] = alloc(at, max_pos_ * rows);
      p_.rram.push_back({at, id, rows, cols, i * hw_.rram_rows, j * hw_.rram_cols});
      ms.rram_unit[at] = static_cast<int>(p_.rram.size()) - 1;
    }
    ms.yrow[mp.owner(i)] = alloc(mp.owner(i), max_pos_ * rows);
  }
  if (shape_.lora_on(id)) {
    const int r = shape_.lora_rank;
    RC lroot = mp.owner(0);
    if (mp.br * mp.bc > 1) {
      for (int j = 0; j < mp.tc; ++j) {
        RC at = mp.tile_pos(0, j);
        ms.up[at] = alloc(at, max_pos_ * r);
      }
    }
    ms.ubuf = alloc(lroot, max_pos_ * r);
    if (mp.region.area() > 1) {
      ms.lora_tree = add_tree(mp.region.routers(), lroot);
      for (RC at : mp.region.routers())
        if (!(at == lroot)) ms.ub[at] = alloc(at, max_pos_ * r);
    }
    for (int j = 0; j < mp.tc; ++j) {
      RC at = mp.tile_pos(0, j);
      p_.sram.push_back({at, id, false, r, mp.cols_of_tile(j, hw_.rram_cols), 0,
                         j * hw_.rram_cols});
      ms.a_unit[at] = static_cast<int>(p_.sram.size()) - 1;
    }
    for (int i = 0; i < mp.tr; ++i) {
      RC at = mp.owner(i);
      const int rows = mp.rows_of_block(i, hw_.rram_rows);
      p_.sram.push_back({at, id, true, rows, r, i * hw_.rram_rows, 0});
      ms.b_unit[at] = static_cast<int>(p_.sram.size()) - 1;
      ms.lb[at] = alloc(at, max_pos_ * rows);
    }
  }
}

void Compiler::setup_buffers() {
  xbuf_ = alloc(kEntryRouter, max_pos_ * d_);
  eout_ = alloc(kEntryRouter, max_pos_ * d_);
  for (const char* id : {"WQ", "WK", "WV"})
    setup_matrix(id, mat_[id], kEntryRouter);
  // the output projection stages from the context exit in the V region
  setup_matrix("WO", mat_["WO"], plan_.require("WV").region.origin());

  // KV cache: capacity per the pre-allocation rule, sized to what this
  // program actually appends.
  const MatrixPlacement& wk = *mat_["WK"].mp;
  const MatrixPlacement& wv = *mat_["WV"].mp;
  auto ksites = wk.region.routers();
  auto vsites = wv.region.routers();
  const std::int64_t budget_bytes = static_cast<std::int64_t>(
      hw_.scratchpad_bytes * (1.0 - hw_.kv_reserve_fraction));
  const int entry_bytes = shape_.head_dim * hw_.weight_bits / 8;
  const int cap_tokens = static_cast<int>(
      budget_bytes / entry_bytes / std::max(1, shape_.num_heads));
  const int nk = static_cast<int>(ksites.size());
  const int need = (max_pos_ + nk - 1) / nk;
  if (need > cap_tokens)
    throw std::out_of_range("kv_append_site: scratchpad KV capacity exhausted");
  kv_entries_ = need;
  for (RC s : ksites) kcache_.push_back(alloc(s, need * d_));
  const int nv = static_cast<int>(vsites.size());
  const int vneed = (max_pos_ + nv - 1) / nv;
  for (RC s : vsites) vcache_.push_back(alloc(s, vneed * d_));
  for (size_t i = 0; i < ksites.size(); ++i)
    p_.layout.k_bufs.push_back({ksites[i], kcache_[i], need});
  for (size_t i = 0; i < vsites.size(); ++i)
    p_.layout.v_bufs.push_back({vsites[i], vcache_[i], vneed});

  // per-head attention state
  const MatrixPlacement& wq = *mat_["WQ"].mp;
  ctx_exit_ = wv.region.origin();
  ctxbuf_ = alloc(ctx_exit_, max_pos_ * d_);
  if (wv.region.area() > 1)
    ctx_tree_ = add_tree(wv.region.routers(), ctx_exit_);
  heads_.resize(shape_.num_heads);
  for (int h = 0; h < shape_.num_heads; ++h) {
    HeadState& hs = heads_[h];
    hs.qsite = wq.owner(head_block(shape_, hw_, h));
    hs.kslice = alloc(hs.qsite, shape_.head_dim);
    hs.scores = alloc(hs.qsite, max_pos_ * max_pos_);
    hs.probs = alloc(hs.qsite, max_pos_ * max_pos_);
    hs.vroot = clamp_into(wv.region, hs.qsite);
    hs.rootp = alloc(hs.vroot, max_pos_ * max_pos_);
    if (wv.region.area() > 1) {
      hs.prob_tree = add_tree(wv.region.routers(), hs.vroot);
      for (RC at : wv.region.routers())
        if (!(at == hs.vroot)) hs.pbuf[at] = alloc(at, max_pos_ * max_pos_);
    }
    for (RC at : wv.region.routers()) hs.ctxp[at] = alloc(at, shape_.head_dim);
  }

}

// Broadcast + SMAC + reduce (+ LoRA path) for one matrix over token rows
// [rep0, rep0+reps) staged at `stage_addr` of `stage_from` (stride d_in).
void Compiler::projection(const std::string& id, RC stage_from, int stage_addr,
                          int rep0, int reps) {
  MatState& ms = mat_[id];
  const MatrixPlacement& mp = *ms.mp;
  const int din = mp.def.d_in;
  const bool lora = shape_.lora_on(id);
  const int r = shape_.lora_rank;

  int src_at_root = stage_addr + rep0 * din;
  int stage_dep = 0;
  if (ms.rootbuf >= 0) {
    Instruction& send = emit(Opcode::kSend, {barrier_});
    send.at = stage_from;
    send.dst = ms.root;
    send.len = din;
    send.repeat = reps;
    send.src_addr = stage_addr + rep0 * din;
    send.src_stride = din;
    send.dst_addr = ms.rootbuf + rep0 * din;
    send.dst_stride = din;
    stage_dep = send.tag;
    src_at_root = ms.rootbuf + rep0 * din;
  }

  int bcast_dep = stage_dep ? stage_dep : barrier_;
  if (ms.region_tree >= 0) {
    std::vector<TreeSlot> slots;
    for (int i = 0; i < mp.tr; ++i)
      for (int j = 0; j < mp.tc; ++j) {
        RC at = mp.tile_pos(i, j);
        slots.push_back({at, ms.xb[at] + rep0 * mp.cols_of_tile(j, hw_.rram_cols),
                         mp.cols_of_tile(j, hw_.rram_cols),
                         j * hw_.rram_cols, mp.cols_of_tile(j, hw_.rram_cols)});
      }
    Instruction& bc = emit(Opcode::kBcastFwd, {bcast_dep});
    bc.at = ms.root;
    bc.tree = ms.region_tree;
    bc.slots = slots_table(std::move(slots));
    bc.len = din;
    bc.repeat = reps;
    bc.src_addr = src_at_root;
    bc.src_stride = din;
    bcast_dep = bc.tag;
  }

  // SMACs; single-member regions read the staged full vector directly.
  std::map<int, std::vector<int>> smac_tags;  // row-block -> tags
  std::map<int, std::vector<int>> a_tags;
  for (int i = 0; i < mp.tr; ++i) {
    const int rows = mp.rows_of_block(i, hw_.rram_rows);
    for (int j = 0; j < mp.tc; ++j) {
      RC at = mp.tile_pos(i, j);
      const int cols = mp.cols_of_tile(j, hw_.rram_cols);
      Instruction& sm = emit(Opcode::kPeSmacRram, {bcast_dep});
      sm.at = at;
      sm.unit = ms.rram_unit[at];
      sm.len = cols;
      sm.repeat = reps;
      if (ms.region_tree >= 0) {
        sm.src_addr = ms.xb[at] + rep0 * cols;
        sm.src_stride = cols;
      } else {
        sm.src_addr = src_at_root + j * hw_.rram_cols;
        sm.src_stride = din;
      }
      const bool direct = mp.br * mp.bc == 1;
      sm.dst_addr = (direct ? ms.yrow[at] : ms.yp[at]) + rep0 * rows;
      sm.dst_stride = rows;
      smac_tags[i].push_back(sm.tag);
      if (lora && i == 0) {
        Instruction& la = emit(Opcode::kPeSmacSram, {bcast_dep});
        la.at = at;
        la.unit = ms.a_unit[at];
        la.len = cols;
        la.repeat = reps;
        if (ms.region_tree >= 0) {
          la.src_addr = ms.xb[at] + rep0 * cols;
          la.src_stride = cols;
        } else {
          la.src_addr = src_at_root + j * hw_.rram_cols;
          la.src_stride = din;
        }
        const bool udirect = mp.br * mp.bc == 1;
        la.dst_addr = (udirect ? ms.ubuf : ms.up[at]) + rep0 * r;
        la.dst_stride = r;
        a_tags[0].push_back(la.tag);
      }
    }
  }

  // row-block reductions into the owners
  std::map<int, int> reduce_tags;
  for (int i = 0; i < mp.tr; ++i) {
    if (mp.br * mp.bc == 1) continue;
    const int rows = mp.rows_of_block(i, hw_.rram_rows);
    auto grp = mp.col_group(i);
    std::vector<TreeSlot> slots;
    for (size_t g = 0; g < grp.size(); ++g)
      slots.push_back({grp[g], ms.yp[grp[g]] + rep0 * rows, rows, 0, rows});
    std::string key = id + "/red/" + std::to_string(i);
    if (!reduce_tree_memo_.count(key))
      reduce_tree_memo_[key] = add_tree(grp, mp.owner(i));
    Instruction& rd = emit(Opcode::kReduceAdd, smac_tags[i]);
    rd.at = mp.owner(i);
    rd.tree = reduce_tree_memo_[key];
    rd.slots = slots_table(std::move(slots));
    rd.len = rows;
    rd.repeat = reps;
    rd.src_stride = rows;
    rd.dst_addr = ms.yrow[mp.owner(i)] + rep0 * rows;
    rd.dst_stride = rows;
    reduce_tags[i] = rd.tag;
  }

  if (lora) {
    // reduce partial u, broadcast it, apply B, accumulate into the rows
    int u_dep = 0;
    if (mp.br * mp.bc > 1) {
      auto grp = mp.col_group(0);
      std::vector<TreeSlot> slots;
      for (RC g : grp) slots.push_back({g, ms.up[g] + rep0 * r, r, 0, r});
      std::string key = id + "/ured";
      if (!reduce_tree_memo_.count(key))
        reduce_tree_memo_[key] = add_tree(grp, mp.owner(0));
      Instruction& rd = emit(Opcode::kReduceAdd, a_tags[0]);
      rd.at = mp.owner(0);
      rd.tree = reduce_tree_memo_[key];
      rd.slots = slots_table(std::move(slots));
      rd.len = r;
      rd.repeat = reps;
      rd.src_stride = r;
      rd.dst_addr = ms.ubuf + rep0 * r;
      rd.dst_stride = r;
      u_dep = rd.tag;
    } else {
      u_dep = a_tags[0].empty() ? barrier_ : a_tags[0].front();
    }
    int ub_dep = u_dep;
    if (ms.lora_tree >= 0) {
      std::vector<TreeSlot> slots;
      for (RC at : mp.region.routers()) {
        int addr = (at == mp.owner(0)) ? ms.ubuf : ms.ub[at];
        slots.push_back({at, addr + rep0 * r, r, 0, r});
      }
      Instruction& bc = emit(Opcode::kBcastFwd, {u_dep});
      bc.at = mp.owner(0);
      bc.tree = ms.lora_tree;
      bc.slots = slots_table(std::move(slots));
      bc.len = r;
      bc.repeat = reps;
      bc.src_addr = ms.ubuf + rep0 * r;
      bc.src_stride = r;
      ub_dep = bc.tag;
    }
    const Word sw = Arith::float64().from_double(shape_.lora_scale);
    for (int i = 0; i < mp.tr; ++i) {
      RC at = mp.owner(i);
      const int rows = mp.rows_of_block(i, hw_.rram_rows);
      Instruction& bm = emit(Opcode::kPeSmacSram, {ub_dep});
      bm.at = at;
      bm.unit = ms.b_unit[at];
      bm.len = r;
      bm.repeat = reps;
      bm.src_addr = ((at == mp.owner(0)) ? ms.ubuf : ms.ub[at]) + rep0 * r;
      bm.src_stride = r;
      bm.dst_addr = ms.lb[at] + rep0 * rows;
      bm.dst_stride = rows;
      int row_dep = reduce_tags.count(i) ? reduce_tags[i] : smac_tags[i].front();
      Instruction& ax = emit(Opcode::kSpmWr, {bm.tag, row_dep});
      ax.at = at;
      ax.mode = static_cast<int>(SpmMode::kAxpy);
      ax.len = rows;
      ax.repeat = reps;
      ax.src_addr = ms.lb[at] + rep0 * rows;
      ax.src_stride = rows;
      ax.dst_addr = ms.yrow[at] + rep0 * rows;
      ax.dst_stride = rows;
      ax.scale = sw;
    }
  }
}

void Compiler::kv_stage(const std::string& id, std::vector<int>& cache_bases,
                        int token) {
  MatState& ms = mat_[id];
  const MatrixPlacement& mp = *ms.mp;
  auto sites = mp.region.routers();
  const int n = static_cast<int>(sites.size());
  RC site = sites[token % n];
  const int slot = token / n;
  for (int i = 0; i < mp.tr; ++i) {
    const int rows = mp.rows_of_block(i, hw_.rram_rows);
    RC owner = mp.owner(i);
    const int dst = cache_bases[token % n] + slot * d_ + i * hw_.rram_rows;
    if (owner == site) {
      Instruction& cp = emit(Opcode::kSpmRd, {barrier_});
      cp.at = owner;
      cp.len = rows;
      cp.src_addr = ms.yrow[owner] + token * rows;
      cp.dst_addr = dst;
    } else {
      Instruction& sd = emit(Opcode::kSend, {barrier_});
      sd.at = owner;
      sd.dst = site;
      sd.len = rows;
      sd.src_addr = ms.yrow[owner] + token * rows;
      sd.dst_addr = dst;
    }
  }
}

// K slice of token j to the head's score site, then the dot against queries
// [q_lo, q_lo+q_count).
void Compiler::scores_for(int h, int j, int q_lo, int q_count) {
  HeadState& hs = heads_[h];
  MatState& msk = mat_["WK"];
  MatState& msq = mat_["WQ"];
  const MatrixPlacement& wk = *msk.mp;
  const MatrixPlacement& wq = *msq.mp;
  auto sites = wk.region.routers();
  const int n = static_cast<int>(sites.size());
  RC site = sites[j % n];
  const int slot = j / n;
  const int hd = shape_.head_dim;
  const int src = kcache_[j % n] + slot * d_ + h * hd;

  int dep = last_dot_.count(h) ? last_dot_[h] : 0;
  int slice_tag;
  if (site == hs.qsite) {
    Instruction& cp = emit(Opcode::kSpmRd, {barrier_, dep});
    cp.at = site;
    cp.len = hd;
    cp.src_addr = src;
    cp.dst_addr = hs.kslice;
    slice_tag = cp.tag;
  } else {
    Instruction& sd = emit(Opcode::kSend, {barrier_, dep});
    sd.at = site;
    sd.dst = hs.qsite;
    sd.len = hd;
    sd.src_addr = src;
    sd.dst_addr = hs.kslice;
    slice_tag = sd.tag;
  }

  const int blk = head_block(shape_, hw_, h);
  const int rows_blk = wq.rows_of_block(blk, hw_.rram_rows);
  const int hoff = h * hd - blk * hw_.rram_rows;
  const Word inv = Arith::float64().from_double(1.0 / std::sqrt(double(hd)));
  Instruction& dot = emit(Opcode::kDmac, {slice_tag});
  dot.at = hs.qsite;
  dot.mode = static_cast<int>(DmacMode::kDotScaled);
  dot.len = hd;
  dot.repeat = q_count;
  dot.src_addr = msq.yrow[hs.qsite] + q_lo * rows_blk + hoff;
  dot.src_stride = rows_blk;
  dot.src2_addr = hs.kslice;
  dot.src2_stride = 0;
  dot.dst_addr = hs.scores + q_lo * max_pos_ + j;
  dot.dst_stride = max_pos_;
  dot.scale = inv;
  last_dot_[h] = dot.tag;
}

// softmax of query row i, prob delivery over the V region, weighted
// accumulate at each site, and the context reduction into ctx_exit.
void Compiler::mix_row(int h, int i) {
  HeadState& hs = heads_[h];
  const MatrixPlacement& wv = *mat_["WV"].mp;
  const int hd = shape_.head_dim;
  auto vs = wv.region.routers();
  const int nv = static_cast<int>(vs.size());

  Instruction& sm = emit(Opcode::kSoftmax, {barrier_});
  sm.at = hs.qsite;
  sm.len = i + 1;
  sm.src_addr = hs.scores + i * max_pos_;
  sm.dst_addr = hs.probs + i * max_pos_;

  Instruction& sd = emit(Opcode::kSend, {sm.tag});
  sd.at = hs.qsite;
  sd.dst = hs.vroot;
  sd.len = i + 1;
  sd.src_addr = hs.probs + i * max_pos_;
  sd.dst_addr = hs.rootp + i * max_pos_;
  int prob_dep = sd.tag;

  if (hs.prob_tree >= 0) {
    std::vector<TreeSlot> slots;
    for (RC at : vs) {
      int addr = (at == hs.vroot) ? hs.rootp : hs.pbuf[at];
      slots.push_back({at, addr + i * max_pos_, 0, 0, i + 1});
    }
    Instruction& bc = emit(Opcode::kBcastFwd, {prob_dep});
    bc.at = hs.vroot;
    bc.tree = hs.prob_tree;
    bc.slots = slots_table(std::move(slots));
    bc.len = i + 1;
    bc.src_addr = hs.rootp + i * max_pos_;
    prob_dep = bc.tag;
  }

  int mix_dep = last_mix_.count(h) ? last_mix_[h] : 0;
  std::vector<int> wacc_tags;
  for (int z = 0; z < nv; ++z) {
    RC at = vs[z];
    Instruction& wa = emit(Opcode::kDmac, {prob_dep, mix_dep});
    wa.at = at;
    wa.mode = static_cast<int>(DmacMode::kWacc);
    wa.len = hd;
    wa.src_addr = ((at == hs.vroot) ? hs.rootp : hs.pbuf[at]) + i * max_pos_;
    wa.pick0 = z;
    wa.pick_stride = nv;
    wa.count = i >= z ? (i - z) / nv + 1 : 0;
    wa.src2_addr = vcache_[z] + h * hd;
    wa.src2_stride = d_;
    wa.dst_addr = hs.ctxp[at];
    wacc_tags.push_back(wa.tag);
  }

  if (ctx_tree_ >= 0) {
    std::vector<TreeSlot> slots;
    for (RC at : vs) slots.push_back({at, hs.ctxp[at], 0, 0, hd});
    Instruction& rd = emit(Opcode::kReduceAdd, wacc_tags);
    rd.at = ctx_exit_;
    rd.tree = ctx_tree_;
    rd.slots = slots_table(std::move(slots));
    rd.len = hd;
    rd.dst_addr = ctxbuf_ + i * d_ + h * hd;
    last_mix_[h] = rd.tag;
  } else {
    // single V router: the wacc already wrote the head partial; copy it into
    // the context row (same router, ctx_exit == the site).
    Instruction& cp = emit(Opcode::kSpmRd, wacc_tags);
    cp.at = ctx_exit_;
    cp.len = hd;
    cp.src_addr = hs.ctxp[ctx_exit_];
    cp.dst_addr = ctxbuf_ + i * d_ + h * hd;
    last_mix_[h] = cp.tag;
  }
}

void Compiler::output_proj(int rep0, int reps) {
  projection("WO", ctx_exit_, ctxbuf_, rep0, reps);
  MatState& ms = mat_["WO"];
  const MatrixPlacement& wo = *ms.mp;
  for (int i = 0; i < wo.tr; ++i) {
    const int rows = wo.rows_of_block(i, hw_.rram_rows);
    RC owner = wo.owner(i);
    Instruction& sd = emit(Opcode::kSend, phase_tags_);
    sd.at = owner;
    sd.dst = kEntryRouter;
    sd.len = rows;
    sd.repeat = reps;
    sd.src_addr = ms.yrow[owner] + rep0 * rows;
    sd.src_stride = rows;
    sd.dst_addr = eout_ + rep0 * d_ + i * hw_.rram_rows;
    sd.dst_stride = d_;
  }
}

void Compiler::prefill(int tokens) {
  mark_phase("broadcast");
  for (const char* id : {"WQ", "WK", "WV"})
    projection(id, kEntryRouter, xbuf_, 0, tokens);
  barrier();
  mark_phase("kvstage");
  for (int j = 0; j < tokens; ++j) {
    kv_stage("WK", kcache_, j);
    kv_stage("WV", vcache_, j);
  }
  barrier();
  mark_phase("scores");
  for (int h = 0; h < shape_.num_heads; ++h)
    for (int j = 0; j < tokens; ++j) scores_for(h, j, 0, tokens);
  barrier();
  mark_phase("attention");
  for (int h = 0; h < shape_.num_heads; ++h)
    for (int i = 0; i < tokens; ++i) mix_row(h, i);
  barrier();
  mark_phase("output");
  output_proj(0, tokens);
  barrier();
}

void Compiler::decode_step(int pos) {
  mark_phase("decode.broadcast");
  for (const char* id : {"WQ", "WK", "WV"})
    projection(id, kEntryRouter, xbuf_, pos, 1);
  barrier();
  mark_phase("decode.kvstage");
  kv_stage("WK", kcache_, pos);
  kv_stage("WV", vcache_, pos);
  barrier();
  mark_phase("decode.scores");
  for (int h = 0; h < shape_.num_heads; ++h)
    for (int j = 0; j <= pos; ++j) scores_for(h, j, pos, 1);
  barrier();
  mark_phase("decode.attention");
  for (int h = 0; h < shape_.num_heads; ++h) mix_row(h, pos);
  barrier();
  mark_phase("decode.output");
  output_proj(pos, 1);
  barrier();
}

}  // namespace

Program compile_layer(const MappingPlan& plan, const LayerShape& shape,
                      const HardwareSpec& hw, CompileJob job) {
  if (job.tokens < (job.phase == CompileJob::Phase::kPrefill ? 1 : 0))
    throw std::invalid_argument("compile_layer: bad token count");
  const int max_pos = job.phase == CompileJob::Phase::kPrefill
                          ? job.tokens
                          : job.tokens + 1;
  Compiler c(plan, shape, hw, max_pos);
  if (job.phase == CompileJob::Phase::kPrefill)
    c.prefill(job.tokens);
  else
    c.decode_step(job.tokens);
  return c.take();
}

Program compile_sequence(const MappingPlan& plan, const LayerShape& shape,
                         const HardwareSpec& hw, int prefill_tokens,
                         int decode_tokens) {
  Compiler c(plan, shape, hw, prefill_tokens + decode_tokens);
  c.prefill(prefill_tokens);
  for (int k = 0; k < decode_tokens; ++k) c.decode_step(prefill_tokens + k);
  return c.take();
}

ProgramStats program_stats(const Program& p) {
  ProgramStats st;
  st.opcode_counts.assign(12, 0);
  std::map<int, int> chain;  // tag -> longest path ending here
  for (const auto& in : p.instrs) {
    st.opcode_counts[static_cast<size_t>(in.op)] += 1;
    const std::int64_t vol = std::int64_t(in.len) * in.repeat;
    switch (in.op) {
      case Opcode::kSend:
        st.total_flits += vol;
        st.flit_hops += double(vol) * manhattan(in.at, in.dst);
        break;
      case Opcode::kBcastFwd: {
        st.total_flits += vol;
        st.flit_hops += double(vol) * p.trees[in.tree].edge_count();
        break;
      }
      case Opcode::kReduceAdd: {
        const int e = p.trees[in.tree].edge_count();
        st.total_flits += vol * e;
        st.flit_hops += double(vol) * e;
        break;
      }
      default:
        break;
    }
    int best = 0;
    for (int d : in.deps) best = std::max(best, chain.count(d) ? chain[d] : 0);
    chain[in.tag] = best + 1;
    st.critical_path = std::max(st.critical_path, best + 1);
  }
  return st;
}

std::string dump_program(const Program& p) {
  std::ostringstream os;
  for (const auto& in : p.instrs) {
    os << in.tag << ' ' << opcode_name(in.op) << " at=" << in.at;
    if (in.op == Opcode::kSend) os << " dst=" << in.dst;
    if (in.tree >= 0) os << " tree=" << in.tree;
    os << " len=" << in.len << " rep=" << in.repeat;
    os << " src=" << in.src_addr << '+' << in.src_stride;
    os << " dst=" << in.dst_addr << '+' << in.dst_stride;
    if (in.unit >= 0) os << " unit=" << in.unit;
    if (in.op == Opcode::kDmac)
      os << " mode=" << in.mode << " src2=" << in.src2_addr << '+'
         << in.src2_stride << " count=" << in.count << " pick=" << in.pick0
         << '+' << in.pick_stride;
    if (in.op == Opcode::kSpmWr) os << " mode=" << in.mode;
    if (in.scale != 0) os << " scale=" << in.scale;
    os << " deps=[";
    for (size_t i = 0; i < in.deps.size(); ++i)
      os << (i ? "," : "") << in.deps[i];
    os << "]\n";
  }
  return os.str();
}

}  // namespace primal
