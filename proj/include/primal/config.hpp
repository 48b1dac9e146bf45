#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace primal {

// Raised on schema or invariant violations; message carries the field path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-operation cycle counts. The architecture publishes frequency and array
// geometry only, so these are simulator inputs with documented defaults; all
// are overridable from the config file.
struct MacroTiming {
  int rram_smac_cycles = 32;       // one analog MVM over a full array
  int sram_smac_cycles = 16;       // one digital SMAC op
  int dmac_cycles = 1;             // per element-pair batch (one per lane)
  int softmax_cycles_per_elem = 4;
  int sram_prog_bytes_per_cycle = 8;  // per macro, programming bandwidth
  int hop_cycles = 1;              // per flit per mesh hop
};

// Active power per macro instance, watts, plus the retained fraction drawn
// when the macro is idle but not gated. Gated power is zero by definition.
struct MacroPower {
  double rram_acim_w = 120e-6;
  double sram_dcim_w = 950e-6;
  double scratchpad_w = 42e-6;
  double router_w = 103e-6;
  double rram_retention = 0.05;
  double sram_retention = 0.10;
  double scratchpad_retention = 0.25;
  double router_retention = 0.10;
};

struct HardwareSpec {
  int mesh_rows = 32;
  int mesh_cols = 32;
  int pe_count = 1024;  // must equal mesh_rows * mesh_cols
  int rram_rows = 256;
  int rram_cols = 256;
  int sram_rows = 256;
  int sram_cols = 64;
  int scratchpad_bytes = 32768;
  int fifo_bytes = 128;  // per port
  int dmac_per_router = 16;
  int io_pairs = 6;
  int bus_bits = 64;
  double freq_hz = 1e9;
  int weight_bits = 8;
  double inter_ct_hop_factor = 4.0;  // inter-chiplet crossing, in hop units
  double kv_reserve_fraction = 0.5;  // scratchpad share kept for KV buffers
  int max_cts = 4096;
  MacroTiming timing;
  MacroPower power;

  int fifo_flits() const { return fifo_bytes * 8 / bus_bits; }
  int scratchpad_words() const { return scratchpad_bytes * 8 / bus_bits; }
  std::int64_t ct_weight_capacity() const {
    return static_cast<std::int64_t>(pe_count) * rram_rows * rram_cols;
  }
};

enum class LoraTarget { Q, K, V, O };

struct LoraSpec {
  int rank = 0;  // 0 disables adaptation
  std::vector<LoraTarget> targets;
  double scale = 1.0;

  bool targets_matrix(LoraTarget t) const {
    if (rank == 0) return false;
    for (auto x : targets)
      if (x == t) return true;
    return false;
  }
};

struct ModelSpec {
  std::string name = "toy";
  int num_layers = 1;
  int hidden_dim = 16;
  int num_heads = 2;
  int head_dim = 8;
  int ffn_dim = 32;
  LoraSpec lora;
  std::uint64_t seed = 1;  // synthetic weight stream

  // Weight parameter count across all layers (attention QKVO + two FFN mats).
  std::int64_t param_count() const {
    std::int64_t h = hidden_dim, f = ffn_dim;
    return num_layers * (4 * h * h + 2 * h * f);
  }
};

struct WorkloadSpec {
  int input_len = 4;
  int output_len = 4;
  int batch = 1;
};

struct FullConfig {
  HardwareSpec hw;
  ModelSpec model;
  WorkloadSpec workload;
};

// Throws ConfigError with a field path on the first violated invariant.
void validate(const HardwareSpec& hw);
void validate(const ModelSpec& m);
void validate(const WorkloadSpec& w);

// Known model presets: "llama3.2-1b", "llama3-8b", "llama2-13b", plus "toy".
// Shapes are conventional configurations of the public model families.
ModelSpec model_preset(const std::string& name);
std::vector<std::string> preset_names();

// JSON config file: {"schema_version":1, "hardware":{..}, "model":{..},
// "workload":{..}}. Missing fields take the defaults above; "model" may be
// {"preset": name} with optional overrides.
FullConfig load_config(const std::string& path);
FullConfig parse_config(const std::string& json_text);
std::string serialize_config(const FullConfig& cfg);

// Compute tiles needed to hold every weight of the model, one weight per
// RRAM cell: ceil(params / (pe_count * rram_rows * rram_cols)).
int ct_count(const HardwareSpec& hw, const ModelSpec& m);

}  // namespace primal
