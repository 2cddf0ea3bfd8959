#pragma once

// Monte Carlo tree search over role-specific agents for a single subtask.
//
// Each selectable node is one agent whose output extends the path from the
// root. Every iteration selects by UCT, expands one untried role, rolls the
// new node forward with follow-up agents, and backs the outcome up the path.
// A node stores cumulative total_value and visits; its mean total/visits is
// what the impact-factor update operates on.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "halo/core.hpp"
#include "halo/error.hpp"

namespace halo {

struct NodeId {
  std::uint32_t value = 0;
  auto operator<=>(const NodeId&) const = default;
};

inline void to_json(json& j, NodeId id) { j = id.value; }
inline void from_json(const json& j, NodeId& id) { id.value = j.get<std::uint32_t>(); }

/// Reward or penalty attached to a rollout's terminal status label.
struct ImpactFactors {
  double success = 1.0;
  double fail = -1.0;
  double cont = 0.0;

  double operator()(StatusLabel label) const {
    switch (label) {
      case StatusLabel::Success: return success;
      case StatusLabel::Fail: return fail;
      case StatusLabel::Continue: return cont;
    }
    return cont;
  }
};

struct Evaluation {
  StatusLabel label = StatusLabel::Continue;
  QualityScore score;
};

struct SearchNode {
  NodeId id;
  std::optional<NodeId> parent;
  std::optional<RoleSpec> role;  // empty for the root
  std::optional<IntermediateOutput> output;
  double total_value = 0.0;
  long visits = 0;
  std::vector<NodeId> children;      // selectable
  std::vector<NodeId> sim_children;  // rollout steps, never selected
  std::vector<RoleSpec> untried_roles;
  std::optional<StatusLabel> terminal_label;
  bool simulated = false;

  double mean() const { return visits > 0 ? total_value / static_cast<double>(visits) : 0.0; }
};

class SearchTree {
 public:
  SearchTree(Subtask subtask, std::vector<RoleSpec> roles, std::uint64_t rng_seed = 10)
      : subtask_(std::move(subtask)), roles_(std::move(roles)), rng_seed_(rng_seed) {
    SearchNode root;
    root.id = NodeId{0};
    root.untried_roles = roles_;
    nodes_.push_back(std::move(root));
  }

  NodeId root_id() const { return NodeId{0}; }
  const Subtask& subtask() const { return subtask_; }
  const std::vector<RoleSpec>& roles() const { return roles_; }
  std::uint64_t rng_seed() const { return rng_seed_; }
  std::size_t size() const { return nodes_.size(); }

  const SearchNode& node(NodeId id) const { return nodes_.at(id.value); }
  SearchNode& node(NodeId id) { return nodes_.at(id.value); }
  const std::vector<SearchNode>& nodes() const { return nodes_; }

  NodeId add_node(NodeId parent, RoleSpec role, IntermediateOutput output, bool simulated) {
    SearchNode n;
    n.id = NodeId{static_cast<std::uint32_t>(nodes_.size())};
    n.parent = parent;
    n.simulated = simulated;
    if (!simulated) {
      // A selectable child may still try every subtask role not yet used on its path.
      auto used = path_roles(parent);
      used.push_back(role.role_name);
      for (const auto& r : roles_) {
        if (std::find(used.begin(), used.end(), r.role_name) == used.end()) n.untried_roles.push_back(r);
      }
    }
    n.role = std::move(role);
    n.output = std::move(output);
    auto id = n.id;
    nodes_.push_back(std::move(n));
    auto& p = node(parent);
    (simulated ? p.sim_children : p.children).push_back(id);
    return id;
  }

  /// Root-to-node list of ids.
  std::vector<NodeId> path_to(NodeId id) const {
    std::vector<NodeId> path;
    for (std::optional<NodeId> cur = id; cur; cur = node(*cur).parent) path.push_back(*cur);
    std::reverse(path.begin(), path.end());
    return path;
  }

  /// Throws Validation when any structural invariant is broken.
  void check_invariants() const {
    auto fail = [](const std::string& what) { throw Error(Errc::Validation, "search tree: " + what); };
    if (nodes_.empty() || node(root_id()).parent) fail("missing root");
    for (const auto& n : nodes_) {
      if (n.id.value != 0 && !n.parent) fail("node " + std::to_string(n.id.value) + " has no parent");
      if (n.parent) {
        const auto& p = node(*n.parent);
        const auto& list = n.simulated ? p.sim_children : p.children;
        if (std::find(list.begin(), list.end(), n.id) == list.end()) {
          fail("parent link of node " + std::to_string(n.id.value) + " is one-sided");
        }
        if (n.parent->value >= n.id.value) fail("parent created after child");
      }
      std::vector<std::string> names;
      for (auto c : n.children) {
        if (node(c).parent != n.id) fail("child link is one-sided");
        names.push_back(node(c).role->role_name);
      }
      std::sort(names.begin(), names.end());
      if (std::adjacent_find(names.begin(), names.end()) != names.end()) fail("duplicate child roles");
      if (n.visits < 0) fail("negative visits");
      if (n.visits > 0 && (n.mean() < -2.0 || n.mean() > 2.0)) fail("mean value outside [-2, 2]");
    }
  }

 private:
  std::vector<std::string> path_roles(NodeId id) const {
    std::vector<std::string> names;
    for (auto p : path_to(id)) {
      if (node(p).role) names.push_back(node(p).role->role_name);
    }
    return names;
  }

  Subtask subtask_;
  std::vector<RoleSpec> roles_;
  std::uint64_t rng_seed_;
  std::vector<SearchNode> nodes_;
};

struct Trajectory {
  std::vector<NodeId> node_ids;
  std::string answer;
  StatusLabel terminal_label = StatusLabel::Continue;
  double mean_value = 0.0;

  bool operator==(const Trajectory&) const = default;
};

/// One node update performed by backpropagation.
struct BackpropRecord {
  int subtask_index = 0;
  NodeId node_id;
  double v_before = 0.0;
  long n_before = 0;
  double lambda = 0.0;
  std::vector<double> scores;
  double v_after = 0.0;

  bool operator==(const BackpropRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Selection

/// UCT value of a child. Unvisited children score +infinity so they are tried first.
inline double uct_score(double child_total, long child_visits, long parent_visits, double alpha) {
  if (child_visits < 0 || parent_visits < 0) throw Error(Errc::Validation, "visit counts must be non-negative");
  if (child_visits == 0) return std::numeric_limits<double>::infinity();
  if (parent_visits < 1) throw Error(Errc::Validation, "parent of a visited child must have visits >= 1");
  const double n = static_cast<double>(child_visits);
  return child_total / n + alpha * std::sqrt(std::log(static_cast<double>(parent_visits)) / n);
}

/// Descends by argmax UCT until a node with untried roles or without children.
/// Ties go to the earliest-inserted child.
inline NodeId select(const SearchTree& tree, double alpha) {
  NodeId cur = tree.root_id();
  for (;;) {
    const auto& n = tree.node(cur);
    if (!n.untried_roles.empty() || n.children.empty()) return cur;
    NodeId best = n.children.front();
    double best_score = -std::numeric_limits<double>::infinity();
    for (auto c : n.children) {
      const auto& child = tree.node(c);
      double s = uct_score(child.total_value, child.visits, n.visits, alpha);
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    cur = best;
  }
}

// ---------------------------------------------------------------------------
// Backpropagation

/// Applies the impact-factor update to every node on `path`:
///   v* = (v * n + lambda(label) + sum(S)) / (n + |S|)
/// with v the stored mean and n the visits, then writes visits = n + |S| and
/// total_value = v* * (n + |S|).
inline void backpropagate(SearchTree& tree, const std::vector<NodeId>& path, StatusLabel terminal_label,
                          const std::map<NodeId, std::vector<double>>& scores_per_node,
                          const ImpactFactors& lambda, std::vector<BackpropRecord>* log = nullptr) {
  const double impact = lambda(terminal_label);
  for (auto id : path) {
    auto it = scores_per_node.find(id);
    if (it == scores_per_node.end()) {
      throw Error(Errc::Validation, "no simulated scores given for node " + std::to_string(id.value));
    }
    const auto& scores = it->second;
    auto& n = tree.node(id);
    const double v = n.mean();
    const long visits = n.visits;
    const long c = static_cast<long>(scores.size());
    if (visits + c == 0) {
      throw Error(Errc::Validation, "node " + std::to_string(id.value) + " has no visits and no scores");
    }
    double sum = 0.0;
    for (double s : scores) sum += s;
    const double v_star = (v * static_cast<double>(visits) + impact + sum) / static_cast<double>(visits + c);
    n.visits = visits + c;
    n.total_value = v_star * static_cast<double>(n.visits);
    if (log) log->push_back(BackpropRecord{tree.subtask().index, id, v, visits, impact, scores, v_star});
  }
}

// ---------------------------------------------------------------------------
// Expansion and simulation

/// Agents the search drives: inference agents, the judge/scorer pair, and the
/// role designer used for rollout follow-ups.
template <class A>
concept SearchAgents = requires(A& agents, const RoleSpec& role, const Subtask& subtask,
                                const QueryBundle& bundle, std::string_view previous, const std::string& output) {
  { agents.run(role, subtask, bundle, previous) } -> std::convertible_to<std::string>;
  { agents.evaluate(output, subtask, bundle) } -> std::same_as<Evaluation>;
  { agents.follow_up_role(subtask, bundle, previous) } -> std::same_as<RoleSpec>;
};

template <SearchAgents Agents>
IntermediateOutput produce_output(Agents& agents, const RoleSpec& role, const Subtask& subtask,
                                  const QueryBundle& bundle, std::string_view previous) {
  std::string content = agents.run(role, subtask, bundle, previous);
  auto eval = agents.evaluate(content, subtask, bundle);
  return IntermediateOutput{role, std::move(content), eval.label, eval.score};
}

/// Pops the first untried role of `id`, runs and evaluates that agent, and
/// attaches the result as a fresh child (visits 0, total 0).
template <SearchAgents Agents>
NodeId expand(SearchTree& tree, NodeId id, Agents& agents, const QueryBundle& bundle) {
  auto& n = tree.node(id);
  if (n.untried_roles.empty()) {
    throw Error(Errc::Validation, "expand called on node " + std::to_string(id.value) + " without untried roles");
  }
  RoleSpec role = n.untried_roles.front();
  n.untried_roles.erase(n.untried_roles.begin());
  std::string previous = n.output ? n.output->content : std::string{};
  auto output = produce_output(agents, role, tree.subtask(), bundle, previous);
  return tree.add_node(id, role, std::move(output), false);
}

/// Rolls forward from `id` with follow-up agents until one is judged success
/// or fail, or `depth` steps were taken. The node's own label counts first.
template <SearchAgents Agents>
Trajectory simulate(SearchTree& tree, NodeId id, int depth, Agents& agents, const QueryBundle& bundle) {
  if (depth < 0) throw Error(Errc::Validation, "simulation depth must be >= 0");
  Trajectory t;
  t.node_ids = tree.path_to(id);
  const auto& start = tree.node(id);
  if (!start.output) throw Error(Errc::Validation, "cannot simulate from the root");
  t.answer = start.output->content;
  t.terminal_label = start.output->label;
  NodeId cur = id;
  for (int step = 0; step < depth && t.terminal_label == StatusLabel::Continue; ++step) {
    auto role = agents.follow_up_role(tree.subtask(), bundle, t.answer);
    auto output = produce_output(agents, role, tree.subtask(), bundle, t.answer);
    t.answer = output.content;
    t.terminal_label = output.label;
    cur = tree.add_node(cur, std::move(role), std::move(output), true);
    t.node_ids.push_back(cur);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Search driver

struct SearchOptions {
  double alpha = 1.414;
  ImpactFactors lambda;
  int iterations = 8;
  int simulation_depth = 3;
};

struct SearchResult {
  Trajectory best;
  SearchTree tree;
  std::vector<Trajectory> trajectories;  // one per expanded node, in creation order
  int skipped_expansions = 0;
};

namespace detail {

inline NodeId rollout_owner(const SearchTree& tree, const Trajectory& t) {
  for (auto it = t.node_ids.rbegin(); it != t.node_ids.rend(); ++it) {
    if (!tree.node(*it).simulated) return *it;
  }
  return tree.root_id();
}

inline double output_score(const SearchTree& tree, NodeId id) { return tree.node(id).output->score.value(); }

}  // namespace detail

/// Runs the configured number of select/expand/simulate/backpropagate
/// iterations and returns the best trajectory: the highest-mean success
/// rollout, otherwise the highest-mean rollout; ties go to the earliest.
template <SearchAgents Agents>
SearchResult search(const Subtask& subtask, const std::vector<RoleSpec>& roles, const QueryBundle& bundle,
                    const SearchOptions& options, Agents& agents, std::uint64_t rng_seed = 10,
                    std::vector<BackpropRecord>* log = nullptr) {
  if (roles.empty()) throw Error(Errc::NoRoles, "search needs at least one role");
  SearchResult result{Trajectory{}, SearchTree(subtask, roles, rng_seed), {}, 0};
  auto& tree = result.tree;
  std::map<NodeId, std::size_t> rollout_of;  // owner node -> index into trajectories

  for (int iteration = 0; iteration < options.iterations; ++iteration) {
    NodeId selected = select(tree, options.alpha);
    const Trajectory* rollout = nullptr;
    std::map<NodeId, std::vector<double>> scores;

    if (!tree.node(selected).untried_roles.empty()) {
      NodeId child;
      try {
        child = expand(tree, selected, agents, bundle);
      } catch (const GatewayError& e) {
        if (e.kind() != GatewayErrorKind::MalformedResponse) throw;
        ++result.skipped_expansions;
        continue;
      }
      auto traj = simulate(tree, child, options.simulation_depth, agents, bundle);
      auto& c = tree.node(child);
      c.terminal_label = traj.terminal_label;
      if (traj.terminal_label == StatusLabel::Success) c.untried_roles.clear();
      std::vector<double> sim_scores;
      for (auto id : traj.node_ids) {
        if (tree.node(id).simulated) sim_scores.push_back(detail::output_score(tree, id));
      }
      if (sim_scores.empty()) sim_scores.push_back(detail::output_score(tree, child));
      scores[child] = std::move(sim_scores);
      rollout_of[child] = result.trajectories.size();
      result.trajectories.push_back(std::move(traj));
      rollout = &result.trajectories.back();
    } else {
      auto it = rollout_of.find(selected);
      if (it == rollout_of.end()) break;  // nothing left to explore
      rollout = &result.trajectories[it->second];
      scores[selected] = {detail::output_score(tree, rollout->node_ids.back())};
    }

    const NodeId owner = detail::rollout_owner(tree, *rollout);
    const double leaf_score = detail::output_score(tree, rollout->node_ids.back());
    auto path = tree.path_to(owner);
    for (auto id : path) {
      if (id != owner) scores[id] = {leaf_score};
    }
    backpropagate(tree, path, rollout->terminal_label, scores, options.lambda, log);
  }

  if (result.trajectories.empty()) {
    throw Error(Errc::NoOutput, "no expansion succeeded for subtask " + std::to_string(subtask.index));
  }
  for (auto& t : result.trajectories) t.mean_value = tree.node(detail::rollout_owner(tree, t)).mean();

  const Trajectory* best = nullptr;
  for (bool success_only : {true, false}) {
    for (const auto& t : result.trajectories) {
      if (success_only && t.terminal_label != StatusLabel::Success) continue;
      if (!best || t.mean_value > best->mean_value) best = &t;
    }
    if (best) break;
  }
  result.best = *best;
  return result;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(json& j, const BackpropRecord& r) {
  j = json{{"subtask_index", r.subtask_index}, {"node_id", r.node_id}, {"v_before", r.v_before},
           {"n_before", r.n_before},           {"lambda", r.lambda},   {"scores", r.scores},
           {"v_after", r.v_after}};
}
inline void from_json(const json& j, BackpropRecord& r) {
  j.at("subtask_index").get_to(r.subtask_index);
  j.at("node_id").get_to(r.node_id);
  j.at("v_before").get_to(r.v_before);
  j.at("n_before").get_to(r.n_before);
  j.at("lambda").get_to(r.lambda);
  j.at("scores").get_to(r.scores);
  j.at("v_after").get_to(r.v_after);
}

inline void to_json(json& j, const Trajectory& t) {
  j = json{{"node_ids", t.node_ids},
           {"answer", t.answer},
           {"terminal_label", t.terminal_label},
           {"mean_value", t.mean_value}};
}
inline void from_json(const json& j, Trajectory& t) {
  j.at("node_ids").get_to(t.node_ids);
  j.at("answer").get_to(t.answer);
  j.at("terminal_label").get_to(t.terminal_label);
  j.at("mean_value").get_to(t.mean_value);
}

inline json tree_snapshot(const SearchTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes()) {
    json untried = json::array();
    for (const auto& r : n.untried_roles) untried.push_back(r.role_name);
    nodes.push_back({{"node_id", n.id},
                     {"parent", n.parent ? json(*n.parent) : json(nullptr)},
                     {"role", n.role ? json(*n.role) : json(nullptr)},
                     {"output", n.output ? json(*n.output) : json(nullptr)},
                     {"total_value", n.total_value},
                     {"visits", n.visits},
                     {"children", n.children},
                     {"sim_children", n.sim_children},
                     {"untried_roles", untried},
                     {"terminal_label", n.terminal_label ? json(*n.terminal_label) : json(nullptr)},
                     {"simulated", n.simulated}});
  }
  return {{"subtask", tree.subtask()}, {"root_id", tree.root_id()}, {"rng_seed", tree.rng_seed()}, {"nodes", nodes}};
}

}  // namespace halo
