#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "primal/collectives.hpp"
#include "primal/mapper.hpp"
#include "primal/types.hpp"

namespace primal {

// Router/PE command set dispatched by the network main controller. Every
// instruction is repeatable: repetition k re-runs the operation with source
// and destination addresses advanced by the strides.
enum class Opcode {
  kSend,        // unicast payload, XY-routed
  kBcastFwd,    // tree broadcast from root, windowed delivery per member
  kReduceAdd,   // tree reduction of member vectors into the root
  kDmac,        // router dot-product / weighted-accumulate lanes
  kSoftmax,     // router softmax unit over a score row
  kSpmRd,       // local scratchpad copy
  kSpmWr,       // local scratchpad write, plain or accumulate (axpy)
  kPeSmacRram,  // stationary MVM against the PE's RRAM tile
  kPeSmacSram,  // stationary MVM against a LoRA shard in the PE's SRAM
  kSramProg,    // reprogram SRAM macro contents (timing only)
  kGate,        // power-gate or wake a macro set at a router
  kBarrier      // phase boundary marker
};

enum class DmacMode { kDot = 0, kDotScaled = 1, kWacc = 2 };
enum class SpmMode { kCopy = 0, kAxpy = 1 };
enum class GateMacros { kRouterRram = 0, kAll = 1 };

struct Instruction {
  Opcode op;
  int tag = 0;
  std::vector<int> deps;
  int repeat = 1;
  RC at{};       // executing router (source for kSend, root for trees)
  RC dst{};      // kSend destination
  int tree = -1;    // Program::trees index
  int slots = -1;   // Program::slot_tables index (tree delivery/contribution)
  int len = 0;      // payload/row words per repetition
  int src_addr = 0, src_stride = 0;
  int dst_addr = 0, dst_stride = 0;
  int unit = -1;    // rram/sram binding index for SMAC ops
  int mode = 0;     // DmacMode / SpmMode / GateMacros / gate on-off in count
  int src2_addr = 0, src2_stride = 0;  // kDmac second operand
  int count = 0;                        // kWacc entries; kGate on(1)/off(0)
  int pick0 = 0, pick_stride = 0;       // kWacc operand-A index sequence
  Word scale = 0;                       // kDotScaled / kAxpy coefficient
};

// Per-member landing (broadcast) or contribution (reduction) of a tree op.
// win_off/win_len select the stream window a member keeps (broadcast only).
struct TreeSlot {
  RC member{};
  int addr = 0;
  int stride = 0;
  int win_off = 0;
  int win_len = 0;
};

// Weight tile resident in one PE's RRAM: rows x cols slice of `matrix`
// starting at (row_off, col_off).
struct RramBinding {
  RC at{};
  std::string matrix;
  int rows = 0, cols = 0;
  int row_off = 0, col_off = 0;
};

// LoRA shard resident in one PE's SRAM: either an A column slice
// (rank x cols) or a B row block (rows x rank).
struct SramBinding {
  RC at{};
  std::string matrix;
  bool is_b = false;
  int rows = 0, cols = 0;
  int row_off = 0, col_off = 0;
};

struct PhaseMark {
  std::string name;
  int first_instr = 0;  // index of the first instruction of the phase
};

struct KvBufferInfo {
  RC site{};
  int base = 0;
  int entries = 0;
};

// Compiler-assigned addresses the harness needs to stage inputs and collect
// outputs.
struct ProgramLayout {
  int hidden = 0;
  int x_addr = 0;   // token vectors at the entry router, stride = hidden
  int x_rows = 0;
  int out_addr = 0;  // output rows at the entry router, stride = hidden
  int out_rows = 0;
  std::vector<KvBufferInfo> k_bufs, v_bufs;  // per cache site, region order
};

struct Program {
  int mesh_rows = 0, mesh_cols = 0;
  std::vector<Instruction> instrs;
  std::vector<SpanningTree> trees;
  std::vector<std::vector<TreeSlot>> slot_tables;
  std::vector<RramBinding> rram;
  std::vector<SramBinding> sram;
  std::vector<PhaseMark> phases;
  ProgramLayout layout;
};

struct CompileJob {
  enum class Phase { kPrefill, kDecode };
  Phase phase = Phase::kPrefill;
  // kPrefill: number of prompt tokens. kDecode: cache length before the new
  // token (the token's sequence position).
  int tokens = 1;
};

// Compile one attention layer's dataflow onto the plan: input broadcast over
// the Q/K/V regions, RRAM (and SRAM when LoRA targets the matrix) SMACs,
// row-block partial-sum reductions, cyclic KV staging, Q.K^T scores and
// softmax in the routers, the context mix, and the output projection with
// egress to the entry router.
Program compile_layer(const MappingPlan& plan, const LayerShape& shape,
                      const HardwareSpec& hw, CompileJob job);

// Prefill followed by `decode_tokens` decode steps as one program; KV state
// carries across steps inside the scratchpads.
Program compile_sequence(const MappingPlan& plan, const LayerShape& shape,
                         const HardwareSpec& hw, int prefill_tokens,
                         int decode_tokens);

struct ProgramStats {
  std::vector<std::int64_t> opcode_counts;  // indexed by Opcode
  std::int64_t total_flits = 0;      // payload words injected into the mesh
  double flit_hops = 0;              // payload words x links crossed
  int critical_path = 0;             // longest dependency chain, in instructions
  std::int64_t count(Opcode op) const {
    return opcode_counts[static_cast<size_t>(op)];
  }
};

ProgramStats program_stats(const Program& p);

// One instruction per line; grammar documented in the README.
std::string dump_program(const Program& p);

const char* opcode_name(Opcode op);

}  // namespace primal
