#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "primal/config.hpp"
#include "primal/types.hpp"

namespace primal {

struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rectangle of PEs, inclusive-exclusive bounds.
struct Region {
  int col_start = 0, col_end = 0, row_start = 0, row_end = 0;

  int width() const { return col_end - col_start; }
  int height() const { return row_end - row_start; }
  int area() const { return width() * height(); }
  bool contains(RC rc) const {
    return rc.row >= row_start && rc.row < row_end && rc.col >= col_start &&
           rc.col < col_end;
  }
  RC origin() const { return {row_start, col_start}; }
  std::vector<RC> routers() const;  // row-major
  bool operator==(const Region&) const = default;
};

struct MatrixDef {
  std::string id;  // "WQ","WK","WV","WO","F1","F2"
  int d_out = 0;
  int d_in = 0;
};

// One attention (or FFN) layer as the mapper sees it. For a fragment of a
// layer split across CTs, d_out of every matrix is the fragment's share.
struct LayerShape {
  int hidden = 0;
  int num_heads = 0;
  int head_dim = 0;
  std::vector<MatrixDef> matrices;  // packing order: Q,K,V,O then FFN
  int lora_rank = 0;
  double lora_scale = 1.0;
  std::vector<LoraTarget> lora_targets;

  bool lora_on(const std::string& id) const;
  const MatrixDef* find(const std::string& id) const;
};

LayerShape attention_layer_shape(const ModelSpec& m, bool include_ffn);

enum class TileOrder { kRowMajor, kColMajor };

// Placement of one matrix: its tile grid (tr x tc) is laid out as a g1 x g2
// grid of row-blocks, each row-block a br x bc rectangle of tiles, so every
// reduction group is itself a rectangle. tr = g1*g2, tc = br*bc.
struct MatrixPlacement {
  MatrixDef def;
  int tr = 0, tc = 0;
  int g1 = 1, g2 = 1;
  int br = 1, bc = 1;
  TileOrder order = TileOrder::kRowMajor;
  Region region;

  RC block_origin(int i) const {
    int cr, cc;
    if (order == TileOrder::kRowMajor) {
      cr = i / g2;
      cc = i % g2;
    } else {
      cr = i % g1;
      cc = i / g1;
    }
    return {region.row_start + cr * br, region.col_start + cc * bc};
  }
  RC tile_pos(int i, int j) const {
    RC o = block_origin(i);
    return {o.row + j / bc, o.col + j % bc};
  }
  RC owner(int i) const { return block_origin(i); }
  Region block_region(int i) const {
    RC o = block_origin(i);
    return {o.col, o.col + bc, o.row, o.row + br};
  }
  std::vector<RC> col_group(int i) const { return block_region(i).routers(); }
  int rows_of_block(int i, int rram_rows) const {
    return std::min(rram_rows, def.d_out - i * rram_rows);
  }
  int cols_of_tile(int j, int rram_cols) const {
    return std::min(rram_cols, def.d_in - j * rram_cols);
  }
};

struct MappingPlan {
  std::vector<MatrixPlacement> matrices;  // packing order
  std::map<std::string, std::vector<RC>> intermediates;
  double cost = 0;

  const MatrixPlacement* find(const std::string& id) const;
  const MatrixPlacement& require(const std::string& id) const;
};

// Mesh ingress/egress router for activations entering or leaving the CT.
inline constexpr RC kEntryRouter{0, 0};

// tr = ceil(d_out/rram_rows), tc = ceil(d_in/rram_cols); one tile per PE.
std::pair<int, int> tile_matrix(int d_out, int d_in, int rram_rows, int rram_cols);

// Traffic weighting used by the placement objective.
struct TrafficProfile {
  int tokens = 4;  // prefill pass length the optimizer optimizes for
};

struct CommVolume {
  double flit_hops = 0;    // sum of payload words crossing each mesh link
  std::int64_t flits = 0;  // payload words injected into the mesh
};

// Communication volume of one full layer pass under the co-located dataflow;
// mirrors exactly what the instruction compiler emits.
CommVolume comm_volume_prefill(const MappingPlan& plan, const LayerShape& shape,
                               const HardwareSpec& hw, int tokens);
// One decode token at `position` (cache holds `position` earlier tokens).
CommVolume comm_volume_decode(const MappingPlan& plan, const LayerShape& shape,
                              const HardwareSpec& hw, int position);

// Hop-weighted flit volume of the plan for the given traffic profile.
double cost(const MappingPlan& plan, const LayerShape& shape,
            const HardwareSpec& hw, const TrafficProfile& profile);

// Baseline: natural tile-grid shapes, row-major order, shelf-packed.
MappingPlan naive_row_major_plan(const LayerShape& shape, const HardwareSpec& hw);

// Search the documented candidate space (block-structured reshapes per
// matrix, both row/column orderings, column-wise shelf packing in matrix
// order) for the cheapest plan. Exhaustive when the space is small, greedy
// coordinate descent from the naive plan otherwise; deterministic either way.
MappingPlan map_layer(const LayerShape& shape, const HardwareSpec& hw,
                      const TrafficProfile& profile = {});

// All candidate plans of the documented space (exposed for oracle tests).
std::vector<MappingPlan> enumerate_candidate_plans(const LayerShape& shape,
                                                   const HardwareSpec& hw);

// A model layer split into per-CT fragments along the output dimension.
struct LayerFragment {
  int layer = 0;
  int part = 0;
  int parts = 1;
  int block_lo = 0;  // first output row-block (rram_rows units) of every matrix
  LayerShape shape;
  std::int64_t tiles = 0;
};

struct CtAssignment {
  std::vector<std::vector<LayerFragment>> per_ct;
  std::map<std::string, MappingPlan> plans;  // keyed by fragment shape

  int ct_used() const { return static_cast<int>(per_ct.size()); }
  const MappingPlan& plan_for(const LayerFragment& f) const;
};

std::string fragment_shape_key(const LayerShape& shape);

// Contiguous layer-to-CT allocation; layers too large for one CT are split
// into output-dimension halves (recursively) across adjacent CTs.
CtAssignment split_across_cts(const ModelSpec& m, const HardwareSpec& hw);

}  // namespace primal
