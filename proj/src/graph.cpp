#include "geoskill/graph.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <stdexcept>
#include <tuple>

#include "geoskill/rng.hpp"

namespace geoskill {

const GraphNode* TaskSkillGraph::node(std::string_view id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const GraphNode& n, std::string_view v) { return n.id < v; });
  if (it == nodes.end() || it->id != id) return nullptr;
  return &*it;
}

namespace {

bool shares_constraint(const AtomicSkill& a, const AtomicSkill& b) {
  for (const auto& c : a.countries) {
    if (b.countries.count(c)) return true;
  }
  for (const auto& r : a.regions) {
    if (b.regions.count(r)) return true;
  }
  return false;
}

using Adjacency = std::map<SkillId, std::vector<SkillId>>;

Adjacency adjacency(const TaskSkillGraph& g) {
  Adjacency adj;
  for (const auto& n : g.nodes) adj[n.id];
  for (const auto& [a, b] : g.edges) adj[a].push_back(b);
  return adj;
}

// Edges of some directed cycle, or empty when the graph is acyclic.
std::vector<Edge> find_cycle(const TaskSkillGraph& g) {
  const Adjacency adj = adjacency(g);
  std::map<SkillId, int> color;  // 0 white, 1 on stack, 2 done
  std::vector<SkillId> stack;
  std::vector<Edge> cycle;

  // Iterative DFS keeps deep chains off the call stack.
  for (const auto& [root, unused] : adj) {
    if (color[root] != 0) continue;
    std::vector<std::pair<SkillId, std::size_t>> frames{{root, 0}};
    color[root] = 1;
    stack.push_back(root);
    while (!frames.empty()) {
      auto& [u, next] = frames.back();
      const auto& out = adj.at(u);
      if (next == out.size()) {
        color[u] = 2;
        stack.pop_back();
        frames.pop_back();
        continue;
      }
      const SkillId v = out[next++];
      if (color[v] == 1) {
        auto it = std::find(stack.begin(), stack.end(), v);
        for (; it + 1 != stack.end(); ++it) cycle.emplace_back(*it, *(it + 1));
        cycle.emplace_back(stack.back(), v);
        return cycle;
      }
      if (color[v] == 0) {
        color[v] = 1;
        stack.push_back(v);
        frames.emplace_back(v, 0);
      }
    }
  }
  return cycle;
}

}  // namespace

TaskSkillGraph compose_graph(std::span<const AtomicSkill> retrieved,
                             std::span<const RelationPrior> priors) {
  std::map<SkillId, const AtomicSkill*> by_id;
  for (const auto& s : retrieved) by_id.emplace(s.id, &s);

  TaskSkillGraph g;
  for (const auto& [id, s] : by_id) g.nodes.push_back({id, s->stage, s->confidence});

  std::map<Edge, std::uint64_t> prior_support;
  for (const auto& p : priors) {
    if (p.from == p.to || p.support <= p.failure) continue;
    auto a = by_id.find(p.from);
    auto b = by_id.find(p.to);
    if (a == by_id.end() || b == by_id.end()) continue;
    if (a->second->stage > b->second->stage) continue;
    auto& support = prior_support[{p.from, p.to}];
    support = std::max(support, p.support);
  }
  for (const auto& [edge, support] : prior_support) g.edges.insert(edge);

  for (const auto& [ida, a] : by_id) {
    for (const auto& [idb, b] : by_id) {
      if (ida == idb || a->stage >= b->stage) continue;
      if (a->countries.empty() || shares_constraint(*a, *b)) g.edges.insert({ida, idb});
    }
  }

  // Only same-stage prior edges can close a cycle.
  for (auto cycle = find_cycle(g); !cycle.empty(); cycle = find_cycle(g)) {
    const Edge* weakest = nullptr;
    std::uint64_t weakest_support = 0;
    for (const auto& e : cycle) {
      const std::uint64_t s = prior_support.count(e) ? prior_support.at(e) : 0;
      if (!weakest || s < weakest_support || (s == weakest_support && e < *weakest)) {
        weakest = &e;
        weakest_support = s;
      }
    }
    g.edges.erase(*weakest);
  }
  return g;
}

std::vector<SkillId> order_plan(const TaskSkillGraph& graph) {
  std::map<SkillId, std::size_t> indegree;
  for (const auto& n : graph.nodes) indegree[n.id] = 0;
  for (const auto& [a, b] : graph.edges) {
    if (!indegree.count(a) || !indegree.count(b)) {
      throw std::logic_error("edge endpoint is not a node: " + a + " -> " + b);
    }
    ++indegree[b];
  }
  const Adjacency adj = adjacency(graph);

  using Key = std::tuple<int, double, SkillId>;  // stage, -confidence, id
  std::priority_queue<Key, std::vector<Key>, std::greater<>> ready;
  auto key = [&](const SkillId& id) {
    const GraphNode* n = graph.node(id);
    return Key{static_cast<int>(n->stage), -n->confidence, id};
  };
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push(key(id));
  }

  std::vector<SkillId> order;
  order.reserve(graph.nodes.size());
  while (!ready.empty()) {
    const SkillId id = std::get<2>(ready.top());
    ready.pop();
    order.push_back(id);
    for (const auto& v : adj.at(id)) {
      if (--indegree[v] == 0) ready.push(key(v));
    }
  }
  if (order.size() != graph.nodes.size()) throw std::logic_error("skill graph contains a cycle");
  return order;
}

std::optional<std::size_t> validate_trajectory(const TaskSkillGraph& graph,
                                               std::span<const SkillId> steps) {
  for (std::size_t t = 0; t < steps.size(); ++t) {
    if (!graph.node(steps[t])) return t;
    if (t > 0 && !graph.has_edge(steps[t - 1], steps[t])) return t;
  }
  return std::nullopt;
}

TaskSkillGraph shuffle_edges(const TaskSkillGraph& graph, std::uint64_t seed) {
  TaskSkillGraph out;
  out.nodes = graph.nodes;
  const std::size_t n = graph.nodes.size();

  Rng rng(seed);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  shuffle_in_place(perm, rng);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n > 0 ? n - 1 : 0) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(perm[i], perm[j]);
  }
  const std::size_t m = std::min(graph.edges.size(), pairs.size());
  // Partial Fisher-Yates: the first m pairs are a uniform m-subset.
  for (std::size_t i = 0; i < m; ++i) {
    std::swap(pairs[i], pairs[i + uniform_index(rng, pairs.size() - i)]);
    out.edges.insert({graph.nodes[pairs[i].first].id, graph.nodes[pairs[i].second].id});
  }
  return out;
}

std::vector<std::string> check_graph(const TaskSkillGraph& graph, bool require_stage_order) {
  std::vector<std::string> v;
  for (std::size_t i = 1; i < graph.nodes.size(); ++i) {
    if (!(graph.nodes[i - 1].id < graph.nodes[i].id)) {
      v.push_back("nodes not sorted or duplicated at '" + graph.nodes[i].id + "'");
    }
  }
  bool closed = true;
  for (const auto& [a, b] : graph.edges) {
    const GraphNode* na = graph.node(a);
    const GraphNode* nb = graph.node(b);
    if (!na || !nb) {
      v.push_back("edge " + a + " -> " + b + " has an endpoint outside the node set");
      closed = false;
      continue;
    }
    if (a == b) v.push_back("self loop on " + a);
    if (require_stage_order && na->stage > nb->stage) {
      v.push_back("edge " + a + " -> " + b + " points to an earlier stage");
    }
  }
  if (closed && !find_cycle(graph).empty()) v.push_back("graph contains a cycle");
  return v;
}

nlohmann::ordered_json graph_to_json(const TaskSkillGraph& graph) {
  nlohmann::ordered_json j;
  j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : graph.nodes) {
    nlohmann::ordered_json node;
    node["id"] = n.id;
    node["stage"] = to_string(n.stage);
    node["confidence"] = n.confidence;
    j["nodes"].push_back(std::move(node));
  }
  j["edges"] = nlohmann::ordered_json::array();
  for (const auto& [a, b] : graph.edges) j["edges"].push_back({a, b});
  return j;
}

TaskSkillGraph graph_from_json(const nlohmann::json& j) {
  TaskSkillGraph g;
  for (const auto& n : j.at("nodes")) {
    g.nodes.push_back({n.at("id").get<std::string>(), parse_stage(n.at("stage").get<std::string>()),
                       n.value("confidence", 0.0)});
  }
  std::sort(g.nodes.begin(), g.nodes.end(),
            [](const GraphNode& a, const GraphNode& b) { return a.id < b.id; });
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("graph edge must be a pair");
    g.edges.insert({e[0].get<std::string>(), e[1].get<std::string>()});
  }
  return g;
}

}  // namespace geoskill
