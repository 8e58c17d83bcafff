#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace boxmask {

class FlowNetwork;

/// Maximum flow value together with the minimum cut it certifies:
/// source_side[v] is 1 for nodes reachable from the source in the residual
/// network (the source-side partition of a minimum cut).
struct MaxFlowResult {
  double flow = 0.0;
  std::vector<std::uint8_t> source_side;
};

MaxFlowResult max_flow(FlowNetwork net);

/// Directed flow network with non-negative finite capacities and two
/// distinguished terminals. Arcs are stored with their reverse residual
/// twins; parallel arcs are allowed.
class FlowNetwork {
 public:
  FlowNetwork(int node_count, int source, int sink)
      : node_count_(node_count), source_(source), sink_(sink),
        head_(static_cast<std::size_t>(node_count), -1) {
    if (node_count < 2 || source < 0 || source >= node_count || sink < 0 ||
        sink >= node_count || source == sink)
      throw std::invalid_argument("FlowNetwork: bad terminals");
  }

  void add_arc(int from, int to, double capacity) {
    if (from < 0 || from >= node_count_ || to < 0 || to >= node_count_)
      throw std::invalid_argument("FlowNetwork: arc endpoint out of range");
    if (!(capacity >= 0.0) || !std::isfinite(capacity))
      throw std::invalid_argument("FlowNetwork: capacity must be finite and >= 0");
    push_arc(from, to, capacity);
    push_arc(to, from, 0.0);
  }

  int node_count() const { return node_count_; }
  int source() const { return source_; }
  int sink() const { return sink_; }

  struct Arc {
    int to;
    int next;        // next arc index out of the same node, -1 terminates
    double residual;
  };

  const std::vector<Arc>& arcs() const { return arcs_; }
  const std::vector<int>& heads() const { return head_; }

 private:
  friend MaxFlowResult max_flow(FlowNetwork net);

  void push_arc(int from, int to, double cap) {
    arcs_.push_back(Arc{to, head_[static_cast<std::size_t>(from)], cap});
    head_[static_cast<std::size_t>(from)] = static_cast<int>(arcs_.size()) - 1;
  }

  int node_count_, source_, sink_;
  std::vector<Arc> arcs_;
  std::vector<int> head_;
};

/// Dinic's algorithm. The network is taken by value; its arc capacities act
/// as the mutable residuals of the solve.
inline MaxFlowResult max_flow(FlowNetwork net) {
  const int n = net.node_count_;
  const int s = net.source_, t = net.sink_;
  auto& arcs = net.arcs_;
  const auto& head = net.head_;

  std::vector<int> level(static_cast<std::size_t>(n));
  std::vector<int> iter(static_cast<std::size_t>(n));
  std::vector<int> queue(static_cast<std::size_t>(n));

  auto bfs = [&]() {
    std::fill(level.begin(), level.end(), -1);
    int qh = 0, qt = 0;
    queue[qt++] = s;
    level[static_cast<std::size_t>(s)] = 0;
    while (qh < qt) {
      const int u = queue[qh++];
      for (int a = head[static_cast<std::size_t>(u)]; a != -1; a = arcs[a].next) {
        if (arcs[a].residual > 0 && level[arcs[a].to] == -1) {
          level[arcs[a].to] = level[u] + 1;
          queue[qt++] = arcs[a].to;
        }
      }
    }
    return level[static_cast<std::size_t>(t)] != -1;
  };

  // Iterative blocking-flow DFS; the explicit stack holds the arc taken into
  // each node on the current path.
  std::vector<int> path;
  double total = 0.0;
  while (bfs()) {
    for (int i = 0; i < n; ++i) iter[static_cast<std::size_t>(i)] = head[static_cast<std::size_t>(i)];
    for (;;) {
      int u = path.empty() ? s : arcs[path.back()].to;
      if (u == t) {
        double aug = std::numeric_limits<double>::infinity();
        for (int a : path) aug = std::min(aug, arcs[a].residual);
        for (int a : path) {
          arcs[a].residual -= aug;
          arcs[a ^ 1].residual += aug;
        }
        total += aug;
        // Truncate the path at the first saturated arc.
        std::size_t keep = path.size();
        for (std::size_t i = 0; i < path.size(); ++i) {
          if (arcs[path[i]].residual <= 0) {
            keep = i;
            break;
          }
        }
        path.resize(keep);
        continue;
      }
      int& a = iter[static_cast<std::size_t>(u)];
      while (a != -1 && !(arcs[a].residual > 0 && level[arcs[a].to] == level[u] + 1))
        a = arcs[a].next;
      if (a == -1) {
        if (path.empty()) break;  // blocking flow complete
        level[static_cast<std::size_t>(u)] = -1;
        path.pop_back();
      } else {
        path.push_back(a);
      }
    }
    path.clear();
  }

  MaxFlowResult result;
  result.flow = total;
  result.source_side.assign(static_cast<std::size_t>(n), 0);
  // Residual reachability from the source.
  std::vector<int> stack{s};
  result.source_side[static_cast<std::size_t>(s)] = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int a = head[static_cast<std::size_t>(u)]; a != -1; a = arcs[a].next) {
      if (arcs[a].residual > 0 && !result.source_side[arcs[a].to]) {
        result.source_side[arcs[a].to] = 1;
        stack.push_back(arcs[a].to);
      }
    }
  }
  return result;
}

}  // namespace boxmask
