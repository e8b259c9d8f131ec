#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geoskill/skill.hpp"

namespace geoskill {

struct GraphNode {
  SkillId id;
  Stage stage = Stage::Country;
  double confidence = 0.0;

  bool operator==(const GraphNode&) const = default;
};

using Edge = std::pair<SkillId, SkillId>;

/// Per-query Skill-Graph. Nodes sorted by id; edges ordered.
struct TaskSkillGraph {
  std::vector<GraphNode> nodes;
  std::set<Edge> edges;

  const GraphNode* node(std::string_view id) const;
  bool has_edge(const SkillId& from, const SkillId& to) const { return edges.count({from, to}) > 0; }
  bool empty() const noexcept { return nodes.empty(); }
  bool operator==(const TaskSkillGraph&) const = default;
};

/// Ordered skills with the per-step conclusions reported by the reasoner.
struct ReasoningTrajectory {
  std::vector<SkillId> steps;
  std::vector<std::string> conclusions;  // empty or parallel to steps

  bool operator==(const ReasoningTrajectory&) const = default;
};

/// Edge (a, b) exists iff a != b, stage(a) <= stage(b) and one of:
///   (i)   a relation prior a->b with support > failure;
///   (ii)  stage(a) < stage(b) and a, b share a country code or region tag;
///   (iii) stage(a) < stage(b) and a has no country constraint.
/// Cycles can only arise among same-stage prior edges; each is broken by
/// dropping its lowest-support edge.
TaskSkillGraph compose_graph(std::span<const AtomicSkill> retrieved,
                             std::span<const RelationPrior> priors);

/// Topological order; among ready nodes prefer lower stage, then higher
/// confidence, then smaller id. Throws std::logic_error on a cycle.
std::vector<SkillId> order_plan(const TaskSkillGraph& graph);

/// Index of the first step that breaks the path (unknown node, or no edge from
/// step t-1 to step t), nullopt when the trajectory is valid.
std::optional<std::size_t> validate_trajectory(const TaskSkillGraph& graph,
                                               std::span<const SkillId> steps);

/// Ablation: same nodes and edge count, edges redrawn uniformly as forward
/// pairs of a seeded random node order, ignoring stages. Always acyclic.
TaskSkillGraph shuffle_edges(const TaskSkillGraph& graph, std::uint64_t seed);

/// Structural checks: endpoint closure, no self loops, acyclic and (optionally)
/// stage-monotone edges.
std::vector<std::string> check_graph(const TaskSkillGraph& graph, bool require_stage_order = true);

/// `{"nodes":[{"id":..,"stage":..,"confidence":..}],"edges":[["a","b"],...]}`
nlohmann::ordered_json graph_to_json(const TaskSkillGraph& graph);
TaskSkillGraph graph_from_json(const nlohmann::json& j);

}  // namespace geoskill
