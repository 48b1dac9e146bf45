#include "primal/collectives.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <stdexcept>

namespace primal {

int SpanningTree::depth() const {
  int d = 0;
  for (RC m : members) d = std::max(d, hops_to_root(m));
  return d;
}

int SpanningTree::hops_to_root(RC member) const {
  int h = 0;
  RC cur = member;
  while (!(cur == root)) {
    auto it = parent.find(cur);
    if (it == parent.end()) throw std::invalid_argument("not a tree member");
    cur = it->second;
    ++h;
  }
  return h;
}

bool SpanningTree::is_member(RC rc) const {
  return std::binary_search(members.begin(), members.end(), rc);
}

SpanningTree build_tree(const std::vector<RC>& members, RC root, int mesh_rows,
                        int mesh_cols, TreePhase phase) {
  std::set<RC> mset(members.begin(), members.end());
  if (!mset.count(root)) throw std::invalid_argument("build_tree: root not a member");
  SpanningTree t;
  t.root = root;
  t.phase = phase;
  t.members.assign(mset.begin(), mset.end());

  std::set<RC> seen{root};
  std::deque<RC> q{root};
  while (!q.empty()) {
    RC cur = q.front();
    q.pop_front();
    const RC nbrs[4] = {{cur.row, cur.col + 1},
                        {cur.row, cur.col - 1},
                        {cur.row + 1, cur.col},
                        {cur.row - 1, cur.col}};
    for (RC n : nbrs) {
      if (n.row < 0 || n.col < 0 || n.row >= mesh_rows || n.col >= mesh_cols)
        continue;
      if (!mset.count(n) || seen.count(n)) continue;
      seen.insert(n);
      t.parent[n] = cur;
      t.children[cur].push_back(n);
      q.push_back(n);
    }
  }
  if (seen.size() != mset.size())
    throw std::invalid_argument("build_tree: members not connected");
  return t;
}

std::vector<RC> unicast_route(RC src, RC dst, int mesh_rows, int mesh_cols) {
  if (src.row < 0 || src.col < 0 || src.row >= mesh_rows || src.col >= mesh_cols ||
      dst.row < 0 || dst.col < 0 || dst.row >= mesh_rows || dst.col >= mesh_cols)
    throw std::invalid_argument("unicast_route: coordinate out of bounds");
  std::vector<RC> hops;
  RC cur = src;
  while (cur.col != dst.col) {
    cur.col += dst.col > cur.col ? 1 : -1;
    hops.push_back(cur);
  }
  while (cur.row != dst.row) {
    cur.row += dst.row > cur.row ? 1 : -1;
    hops.push_back(cur);
  }
  return hops;
}

RC kv_append_site(KvLayout& layout, int token_index) {
  if (token_index < 0) throw std::out_of_range("kv_append_site: negative token");
  if (layout.appended >= layout.total_capacity())
    throw std::out_of_range("kv_append_site: scratchpad KV capacity exhausted");
  layout.appended += 1;
  return layout.sites[token_index % layout.site_count()];
}

}  // namespace primal
