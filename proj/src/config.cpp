#include "primal/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace primal {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw ConfigError(path + ": " + msg);
}

void positive(std::int64_t v, const std::string& path) {
  require(v > 0, path, "must be strictly positive");
}

}  // namespace

void validate(const HardwareSpec& hw) {
  positive(hw.mesh_rows, "hardware.mesh_rows");
  positive(hw.mesh_cols, "hardware.mesh_cols");
  positive(hw.pe_count, "hardware.pe_count");
  require(hw.pe_count == hw.mesh_rows * hw.mesh_cols, "hardware.pe_count",
          "must equal mesh_rows*mesh_cols");
  positive(hw.rram_rows, "hardware.rram_rows");
  positive(hw.rram_cols, "hardware.rram_cols");
  positive(hw.sram_rows, "hardware.sram_rows");
  positive(hw.sram_cols, "hardware.sram_cols");
  positive(hw.scratchpad_bytes, "hardware.scratchpad_bytes");
  positive(hw.fifo_bytes, "hardware.fifo_bytes");
  positive(hw.dmac_per_router, "hardware.dmac_per_router");
  positive(hw.io_pairs, "hardware.io_pairs");
  positive(hw.bus_bits, "hardware.bus_bits");
  require(hw.freq_hz > 0, "hardware.freq_hz", "must be strictly positive");
  positive(hw.weight_bits, "hardware.weight_bits");
  require(hw.fifo_bytes * 8 % hw.bus_bits == 0, "hardware.fifo_bytes",
          "must be a whole number of bus-width flits");
  require(hw.kv_reserve_fraction > 0 && hw.kv_reserve_fraction < 1,
          "hardware.kv_reserve_fraction", "must lie in (0,1)");
  positive(hw.max_cts, "hardware.max_cts");

  const auto& t = hw.timing;
  positive(t.rram_smac_cycles, "hardware.timing.rram_smac_cycles");
  positive(t.sram_smac_cycles, "hardware.timing.sram_smac_cycles");
  positive(t.dmac_cycles, "hardware.timing.dmac_cycles");
  positive(t.softmax_cycles_per_elem, "hardware.timing.softmax_cycles_per_elem");
  positive(t.sram_prog_bytes_per_cycle, "hardware.timing.sram_prog_bytes_per_cycle");
  positive(t.hop_cycles, "hardware.timing.hop_cycles");

  const auto& p = hw.power;
  require(p.rram_acim_w >= 0 && p.sram_dcim_w >= 0 && p.scratchpad_w >= 0 &&
              p.router_w >= 0,
          "hardware.power", "active power must be nonnegative");
  auto frac = [](double f) { return f >= 0.0 && f <= 1.0; };
  require(frac(p.rram_retention) && frac(p.sram_retention) &&
              frac(p.scratchpad_retention) && frac(p.router_retention),
          "hardware.power", "retention fractions must lie in [0,1]");
}

void validate(const ModelSpec& m) {
  positive(m.num_layers, "model.num_layers");
  positive(m.hidden_dim, "model.hidden_dim");
  positive(m.num_heads, "model.num_heads");
  positive(m.head_dim, "model.head_dim");
  positive(m.ffn_dim, "model.ffn_dim");
  require(m.head_dim * m.num_heads == m.hidden_dim, "model.head_dim",
          "head_dim*num_heads must equal hidden_dim");
  require(m.lora.rank >= 0, "model.lora.rank", "must be nonnegative");
  if (m.lora.rank > 0)
    require(!m.lora.targets.empty(), "model.lora.targets",
            "must be nonempty when rank > 0");
}

void validate(const WorkloadSpec& w) {
  require(w.input_len >= 1, "workload.input_len", "must be >= 1");
  require(w.output_len >= 1, "workload.output_len", "must be >= 1");
  positive(w.batch, "workload.batch");
}

ModelSpec model_preset(const std::string& name) {
  ModelSpec m;
  m.name = name;
  if (name == "toy") {
    m.num_layers = 1;
    m.hidden_dim = 16;
    m.num_heads = 2;
    m.head_dim = 8;
    m.ffn_dim = 32;
  } else if (name == "llama3.2-1b") {
    m.num_layers = 16;
    m.hidden_dim = 2048;
    m.num_heads = 32;
    m.head_dim = 64;
    m.ffn_dim = 8192;
  } else if (name == "llama3-8b") {
    m.num_layers = 32;
    m.hidden_dim = 4096;
    m.num_heads = 32;
    m.head_dim = 128;
    m.ffn_dim = 14336;
  } else if (name == "llama2-13b") {
    m.num_layers = 40;
    m.hidden_dim = 5120;
    m.num_heads = 40;
    m.head_dim = 128;
    m.ffn_dim = 13824;
  } else {
    throw ConfigError("model.preset: unknown preset '" + name + "'");
  }
  return m;
}

std::vector<std::string> preset_names() {
  return {"toy", "llama3.2-1b", "llama3-8b", "llama2-13b"};
}

namespace {

template <typename T>
void opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<LoraTarget> parse_targets(const json& arr, const std::string& path) {
  std::vector<LoraTarget> out;
  for (const auto& e : arr) {
    std::string s = e.get<std::string>();
    if (s == "q" || s == "Q")
      out.push_back(LoraTarget::Q);
    else if (s == "k" || s == "K")
      out.push_back(LoraTarget::K);
    else if (s == "v" || s == "V")
      out.push_back(LoraTarget::V);
    else if (s == "o" || s == "O")
      out.push_back(LoraTarget::O);
    else
      throw ConfigError(path + ": unknown LoRA target '" + s + "'");
  }
  return out;
}

json targets_json(const std::vector<LoraTarget>& ts) {
  json a = json::array();
  for (auto t : ts) {
    switch (t) {
      case LoraTarget::Q: a.push_back("q"); break;
      case LoraTarget::K: a.push_back("k"); break;
      case LoraTarget::V: a.push_back("v"); break;
      case LoraTarget::O: a.push_back("o"); break;
    }
  }
  return a;
}

HardwareSpec parse_hw(const json& j) {
  HardwareSpec hw;
  opt(j, "mesh_rows", hw.mesh_rows);
  opt(j, "mesh_cols", hw.mesh_cols);
  hw.pe_count = hw.mesh_rows * hw.mesh_cols;
  opt(j, "pe_count", hw.pe_count);
  opt(j, "rram_rows", hw.rram_rows);
  opt(j, "rram_cols", hw.rram_cols);
  opt(j, "sram_rows", hw.sram_rows);
  opt(j, "sram_cols", hw.sram_cols);
  opt(j, "scratchpad_bytes", hw.scratchpad_bytes);
  opt(j, "fifo_bytes", hw.fifo_bytes);
  opt(j, "dmac_per_router", hw.dmac_per_router);
  opt(j, "io_pairs", hw.io_pairs);
  opt(j, "bus_bits", hw.bus_bits);
  opt(j, "freq_hz", hw.freq_hz);
  opt(j, "weight_bits", hw.weight_bits);
  opt(j, "inter_ct_hop_factor", hw.inter_ct_hop_factor);
  opt(j, "kv_reserve_fraction", hw.kv_reserve_fraction);
  opt(j, "max_cts", hw.max_cts);
  if (j.contains("timing")) {
    const json& t = j.at("timing");
    opt(t, "rram_smac_cycles", hw.timing.rram_smac_cycles);
    opt(t, "sram_smac_cycles", hw.timing.sram_smac_cycles);
    opt(t, "dmac_cycles", hw.timing.dmac_cycles);
    opt(t, "softmax_cycles_per_elem", hw.timing.softmax_cycles_per_elem);
    opt(t, "sram_prog_bytes_per_cycle", hw.timing.sram_prog_bytes_per_cycle);
    opt(t, "hop_cycles", hw.timing.hop_cycles);
  }
  if (j.contains("power")) {
    const json& p = j.at("power");
    opt(p, "rram_acim_w", hw.power.rram_acim_w);
    opt(p, "sram_dcim_w", hw.power.sram_dcim_w);
    opt(p, "scratchpad_w", hw.power.scratchpad_w);
    opt(p, "router_w", hw.power.router_w);
    opt(p, "rram_retention", hw.power.rram_retention);
    opt(p, "sram_retention", hw.power.sram_retention);
    opt(p, "scratchpad_retention", hw.power.scratchpad_retention);
    opt(p, "router_retention", hw.power.router_retention);
  }
  return hw;
}

ModelSpec parse_model(const json& j) {
  ModelSpec m;
  if (j.contains("preset")) m = model_preset(j.at("preset").get<std::string>());
  opt(j, "name", m.name);
  opt(j, "num_layers", m.num_layers);
  opt(j, "hidden_dim", m.hidden_dim);
  opt(j, "num_heads", m.num_heads);
  if (j.contains("head_dim"))
    m.head_dim = j.at("head_dim").get<int>();
  else if (j.contains("hidden_dim") || j.contains("num_heads") || j.contains("preset"))
    m.head_dim = m.num_heads > 0 ? m.hidden_dim / m.num_heads : 0;
  opt(j, "ffn_dim", m.ffn_dim);
  opt(j, "seed", m.seed);
  if (j.contains("lora")) {
    const json& l = j.at("lora");
    opt(l, "rank", m.lora.rank);
    opt(l, "scale", m.lora.scale);
    if (l.contains("targets"))
      m.lora.targets = parse_targets(l.at("targets"), "model.lora.targets");
  }
  return m;
}

WorkloadSpec parse_workload(const json& j) {
  WorkloadSpec w;
  opt(j, "input_len", w.input_len);
  opt(j, "output_len", w.output_len);
  opt(j, "batch", w.batch);
  return w;
}

}  // namespace

FullConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse failure: ") + e.what());
  }
  if (!j.contains("schema_version"))
    throw ConfigError("schema_version: required field missing");
  if (j.at("schema_version").get<int>() != 1)
    throw ConfigError("schema_version: unsupported version");
  FullConfig cfg;
  try {
    if (j.contains("hardware")) cfg.hw = parse_hw(j.at("hardware"));
    if (j.contains("model")) cfg.model = parse_model(j.at("model"));
    if (j.contains("workload")) cfg.workload = parse_workload(j.at("workload"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(cfg.hw);
  validate(cfg.model);
  validate(cfg.workload);
  return cfg;
}

FullConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const FullConfig& cfg) {
  json j;
  j["schema_version"] = 1;
  json h;
  h["mesh_rows"] = cfg.hw.mesh_rows;
  h["mesh_cols"] = cfg.hw.mesh_cols;
  h["pe_count"] = cfg.hw.pe_count;
  h["rram_rows"] = cfg.hw.rram_rows;
  h["rram_cols"] = cfg.hw.rram_cols;
  h["sram_rows"] = cfg.hw.sram_rows;
  h["sram_cols"] = cfg.hw.sram_cols;
  h["scratchpad_bytes"] = cfg.hw.scratchpad_bytes;
  h["fifo_bytes"] = cfg.hw.fifo_bytes;
  h["dmac_per_router"] = cfg.hw.dmac_per_router;
  h["io_pairs"] = cfg.hw.io_pairs;
  h["bus_bits"] = cfg.hw.bus_bits;
  h["freq_hz"] = cfg.hw.freq_hz;
  h["weight_bits"] = cfg.hw.weight_bits;
  h["inter_ct_hop_factor"] = cfg.hw.inter_ct_hop_factor;
  h["kv_reserve_fraction"] = cfg.hw.kv_reserve_fraction;
  h["max_cts"] = cfg.hw.max_cts;
  h["timing"] = {
      {"rram_smac_cycles", cfg.hw.timing.rram_smac_cycles},
      {"sram_smac_cycles", cfg.hw.timing.sram_smac_cycles},
      {"dmac_cycles", cfg.hw.timing.dmac_cycles},
      {"softmax_cycles_per_elem", cfg.hw.timing.softmax_cycles_per_elem},
      {"sram_prog_bytes_per_cycle", cfg.hw.timing.sram_prog_bytes_per_cycle},
      {"hop_cycles", cfg.hw.timing.hop_cycles},
  };
  h["power"] = {
      {"rram_acim_w", cfg.hw.power.rram_acim_w},
      {"sram_dcim_w", cfg.hw.power.sram_dcim_w},
      {"scratchpad_w", cfg.hw.power.scratchpad_w},
      {"router_w", cfg.hw.power.router_w},
      {"rram_retention", cfg.hw.power.rram_retention},
      {"sram_retention", cfg.hw.power.sram_retention},
      {"scratchpad_retention", cfg.hw.power.scratchpad_retention},
      {"router_retention", cfg.hw.power.router_retention},
  };
  j["hardware"] = h;
  json m;
  m["name"] = cfg.model.name;
  m["num_layers"] = cfg.model.num_layers;
  m["hidden_dim"] = cfg.model.hidden_dim;
  m["num_heads"] = cfg.model.num_heads;
  m["head_dim"] = cfg.model.head_dim;
  m["ffn_dim"] = cfg.model.ffn_dim;
  m["seed"] = cfg.model.seed;
  m["lora"] = {{"rank", cfg.model.lora.rank},
               {"scale", cfg.model.lora.scale},
               {"targets", targets_json(cfg.model.lora.targets)}};
  j["model"] = m;
  j["workload"] = {{"input_len", cfg.workload.input_len},
                   {"output_len", cfg.workload.output_len},
                   {"batch", cfg.workload.batch}};
  return j.dump(2);
}

int ct_count(const HardwareSpec& hw, const ModelSpec& m) {
  std::int64_t cap = hw.ct_weight_capacity();
  std::int64_t params = m.param_count();
  return static_cast<int>((params + cap - 1) / cap);
}

}  // namespace primal
