#pragma once

#include <map>
#include <vector>

#include "primal/types.hpp"

namespace primal {

enum class TreePhase { kBroadcast, kReduction };

// BFS tree over a member set, used for both broadcast (root to leaves) and
// reduction (leaves to root). Members must be mutually reachable through
// member-only links.
struct SpanningTree {
  RC root;
  TreePhase phase = TreePhase::kBroadcast;
  std::vector<RC> members;            // sorted
  std::map<RC, RC> parent;            // every member except root
  std::map<RC, std::vector<RC>> children;

  int edge_count() const { return static_cast<int>(parent.size()); }
  int depth() const;                  // max hops from root to any member
  int hops_to_root(RC member) const;
  bool is_member(RC rc) const;
};

// BFS restricted to member links, fixed neighbor order (+col, -col, +row,
// -row) for determinism. Throws std::invalid_argument if members are not
// connected or root is not a member.
SpanningTree build_tree(const std::vector<RC>& members, RC root, int mesh_rows,
                        int mesh_cols, TreePhase phase);

// Dimension-ordered route, column axis first; excludes src, includes dst.
std::vector<RC> unicast_route(RC src, RC dst, int mesh_rows, int mesh_cols);

// Cyclic KV-cache placement across the scratchpads co-located with a weight
// region. Sites are visited round-robin by token index so per-site loads
// never differ by more than one.
struct KvLayout {
  std::vector<RC> sites;     // co-located routers, region order
  int entries_per_site = 0;  // capacity in cache entries
  int appended = 0;

  int site_count() const { return static_cast<int>(sites.size()); }
  std::int64_t total_capacity() const {
    return static_cast<std::int64_t>(entries_per_site) * site_count();
  }
};

// Site that token `token_index` is appended to; advances the counter.
// Throws std::out_of_range when the pre-allocated buffers are exhausted.
RC kv_append_site(KvLayout& layout, int token_index);

// Site lookup without the append bookkeeping.
inline RC kv_site_of(const KvLayout& layout, int token_index) {
  return layout.sites[token_index % layout.site_count()];
}

}  // namespace primal
