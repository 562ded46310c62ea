#include "spgraph/mrf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <queue>
#include <set>

#include "spgraph/errors.hpp"

namespace spgraph {

Stroke stroke_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("stroke must be a JSON object");
  Stroke s;
  try {
    const auto& pts = j.at("points");
    if (!pts.is_array() || pts.empty()) throw InvalidArgument("stroke needs at least one point");
    for (const auto& p : pts) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw InvalidArgument("stroke points must be [x, y] pairs");
      }
      s.points.push_back({static_cast<int>(std::lround(p[0].get<double>())), static_cast<int>(std::lround(p[1].get<double>()))});
    }
    s.radius = j.value("radius", 3);
    const std::string action = j.value("action", std::string("add"));
    if (action == "add") {
      s.action = StrokeAction::Add;
    } else if (action == "delete") {
      s.action = StrokeAction::Delete;
    } else {
      throw InvalidArgument("unknown stroke action '" + action + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed stroke: ") + e.what());
  }
  if (s.radius < 1) throw InvalidArgument("stroke radius must be >= 1");
  return s;
}

nlohmann::json stroke_to_json(const Stroke& s) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : s.points) pts.push_back({p.x, p.y});
  return {{"points", pts}, {"radius", s.radius}, {"action", s.action == StrokeAction::Add ? "add" : "delete"}};
}

Mask rasterize_stroke(const Stroke& stroke, int width, int height) {
  Mask out(width, height);
  const int r = stroke.radius;
  auto stamp = [&](int cx, int cy) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy > r * r) continue;
        if (out.contains(cx + dx, cy + dy)) out.at(cx + dx, cy + dy) = 1;
      }
    }
  };
  // Bresenham walk between consecutive points.
  auto walk = [&](StrokePoint a, StrokePoint b) {
    int x = a.x, y = a.y;
    const int dx = std::abs(b.x - a.x), dy = -std::abs(b.y - a.y);
    const int sx = a.x < b.x ? 1 : -1, sy = a.y < b.y ? 1 : -1;
    int err = dx + dy;
    while (true) {
      stamp(x, y);
      if (x == b.x && y == b.y) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y += sy;
      }
    }
  };
  if (stroke.points.size() == 1) stamp(stroke.points[0].x, stroke.points[0].y);
  for (size_t i = 1; i < stroke.points.size(); ++i) walk(stroke.points[i - 1], stroke.points[i]);
  return out;
}

MrfProblem make_problem(const SpGraph& g, double phi, const std::map<int, uint8_t>& seeds) {
  if (static_cast<int>(g.node_prob.size()) != g.n_nodes) throw InvalidArgument("make_problem: graph has no node probabilities");
  if (g.edge_alpha.size() != g.edges.size()) throw InvalidArgument("make_problem: graph has no edge similarities");
  if (phi < 0) throw InvalidArgument("make_problem: phi must be non-negative");
  MrfProblem p;
  p.n_nodes = g.n_nodes;
  p.prob = g.node_prob;
  p.edges = g.edges;
  p.weight.resize(g.edges.size());
  for (size_t e = 0; e < g.edges.size(); ++e) p.weight[e] = phi * g.edge_alpha[e];
  p.seeds = seeds;
  return p;
}

double energy(const MrfProblem& p, const std::vector<uint8_t>& labels) {
  if (static_cast<int>(labels.size()) != p.n_nodes) throw InvalidArgument("energy: label count mismatch");
  double e = 0.0;
  for (int i = 0; i < p.n_nodes; ++i) {
    const double b = p.prob[static_cast<size_t>(i)];
    e += labels[static_cast<size_t>(i)] ? 1.0 - b : b;
  }
  for (size_t k = 0; k < p.edges.size(); ++k) {
    if (labels[static_cast<size_t>(p.edges[k].first)] != labels[static_cast<size_t>(p.edges[k].second)]) e += p.weight[k];
  }
  return e;
}

namespace {

// Dinic max-flow over a residual graph with paired arcs.
class FlowNetwork {
 public:
  explicit FlowNetwork(int n) : head_(static_cast<size_t>(n), -1), level_(static_cast<size_t>(n)), it_(static_cast<size_t>(n)) {}

  void add_arc(int u, int v, double cap_uv, double cap_vu) {
    arcs_.push_back({v, head_[static_cast<size_t>(u)], cap_uv});
    head_[static_cast<size_t>(u)] = static_cast<int>(arcs_.size()) - 1;
    arcs_.push_back({u, head_[static_cast<size_t>(v)], cap_vu});
    head_[static_cast<size_t>(v)] = static_cast<int>(arcs_.size()) - 1;
  }

  double max_flow(int s, int t) {
    double flow = 0.0;
    while (bfs(s, t)) {
      for (size_t i = 0; i < it_.size(); ++i) it_[i] = head_[i];
      while (true) {
        const double f = dfs(s, t, std::numeric_limits<double>::infinity());
        if (f <= 0.0) break;
        flow += f;
      }
    }
    return flow;
  }

  // Vertices reachable from s through arcs with positive residual capacity.
  std::vector<char> source_side(int s) const {
    std::vector<char> seen(head_.size(), 0);
    std::vector<int> stack{s};
    seen[static_cast<size_t>(s)] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int a = head_[static_cast<size_t>(u)]; a >= 0; a = arcs_[static_cast<size_t>(a)].next) {
        const Arc& arc = arcs_[static_cast<size_t>(a)];
        if (arc.cap > kResidualEps && !seen[static_cast<size_t>(arc.to)]) {
          seen[static_cast<size_t>(arc.to)] = 1;
          stack.push_back(arc.to);
        }
      }
    }
    return seen;
  }

 private:
  static constexpr double kResidualEps = 1e-12;
  struct Arc {
    int to;
    int next;
    double cap;
  };

  bool bfs(int s, int t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<int> q;
    level_[static_cast<size_t>(s)] = 0;
    q.push(s);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int a = head_[static_cast<size_t>(u)]; a >= 0; a = arcs_[static_cast<size_t>(a)].next) {
        const Arc& arc = arcs_[static_cast<size_t>(a)];
        if (arc.cap > kResidualEps && level_[static_cast<size_t>(arc.to)] < 0) {
          level_[static_cast<size_t>(arc.to)] = level_[static_cast<size_t>(u)] + 1;
          q.push(arc.to);
        }
      }
    }
    return level_[static_cast<size_t>(t)] >= 0;
  }

  double dfs(int u, int t, double pushed) {
    if (u == t) return pushed;
    for (int& a = it_[static_cast<size_t>(u)]; a >= 0; a = arcs_[static_cast<size_t>(a)].next) {
      Arc& arc = arcs_[static_cast<size_t>(a)];
      if (arc.cap <= kResidualEps || level_[static_cast<size_t>(arc.to)] != level_[static_cast<size_t>(u)] + 1) continue;
      const double f = dfs(arc.to, t, std::min(pushed, arc.cap));
      if (f > 0.0) {
        arc.cap -= f;
        arcs_[static_cast<size_t>(a ^ 1)].cap += f;
        return f;
      }
    }
    return 0.0;
  }

  std::vector<Arc> arcs_;
  std::vector<int> head_;
  std::vector<int> level_;
  std::vector<int> it_;
};

}  // namespace

MrfSolution solve(const MrfProblem& p) {
  const int n = p.n_nodes;
  if (static_cast<int>(p.prob.size()) != n || p.weight.size() != p.edges.size()) throw InvalidArgument("solve: inconsistent problem");
  for (double w : p.weight)
    if (!(w >= 0.0)) throw InvalidArgument("solve: edge weights must be non-negative");

  std::vector<double> incident(static_cast<size_t>(n), 0.0);
  for (size_t e = 0; e < p.edges.size(); ++e) {
    incident[static_cast<size_t>(p.edges[e].first)] += p.weight[e];
    incident[static_cast<size_t>(p.edges[e].second)] += p.weight[e];
  }

  // Source side means label 1: cutting s->i pays the cost of label 0, cutting
  // i->t pays the cost of label 1.
  const int s = n, t = n + 1;
  FlowNetwork net(n + 2);
  for (int i = 0; i < n; ++i) {
    const auto u = static_cast<size_t>(i);
    double cost0 = p.prob[u], cost1 = 1.0 - p.prob[u];
    if (auto it = p.seeds.find(i); it != p.seeds.end()) {
      const double k = 1.0 + incident[u];
      (it->second ? cost0 : cost1) += k;
    }
    // Only the difference matters; keep one terminal link per node.
    if (cost0 > cost1) {
      net.add_arc(s, i, cost0 - cost1, 0.0);
    } else if (cost1 > cost0) {
      net.add_arc(i, t, cost1 - cost0, 0.0);
    }
  }
  for (size_t e = 0; e < p.edges.size(); ++e) {
    if (p.weight[e] > 0) net.add_arc(p.edges[e].first, p.edges[e].second, p.weight[e], p.weight[e]);
  }
  net.max_flow(s, t);
  const auto side = net.source_side(s);

  MrfSolution sol;
  sol.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) sol.labels[static_cast<size_t>(i)] = side[static_cast<size_t>(i)] ? 1 : 0;
  for (const auto& [i, l] : p.seeds) {
    if (sol.labels[static_cast<size_t>(i)] != l) throw NumericError("solve: seed constraint violated");
  }
  sol.energy = energy(p, sol.labels);
  return sol;
}

StrokeEffect apply_strokes(const SpGraph& g, const LabelMap& m, const std::vector<Stroke>& strokes) {
  if (static_cast<int>(g.node_prob.size()) != g.n_nodes) throw InvalidArgument("apply_strokes: graph has no node probabilities");
  StrokeEffect fx;
  fx.prob = g.node_prob;
  for (size_t k = 0; k < strokes.size(); ++k) {
    const Stroke& s = strokes[k];
    if (s.points.empty() || s.radius < 1) throw InvalidArgument("apply_strokes: malformed stroke");
    const Mask cover = rasterize_stroke(s, m.width, m.height);
    std::set<int> hit;
    for (size_t p = 0; p < cover.pixels(); ++p)
      if (cover.data[p]) hit.insert(m.data[p]);
    if (hit.empty()) {
      fx.warnings.push_back("stroke " + std::to_string(k) + " lies outside the image");
      continue;
    }
    const uint8_t label = s.action == StrokeAction::Add ? 1 : 0;
    for (int i : hit) {
      fx.prob[static_cast<size_t>(i)] = label;
      fx.seeds[i] = label;
    }
  }
  return fx;
}

EditResult edit_cycle(const SpGraph& g, const LabelMap& m, const std::vector<Stroke>& strokes, double phi,
                      const std::vector<uint8_t>& previous) {
  StrokeEffect fx = apply_strokes(g, m, strokes);
  MrfProblem problem = make_problem(g, phi, fx.seeds);
  problem.prob = fx.prob;
  MrfSolution sol = solve(problem);

  EditResult r;
  r.labels = std::move(sol.labels);
  r.energy = sol.energy;
  r.seeds = std::move(fx.seeds);
  r.warnings = std::move(fx.warnings);
  if (previous.size() == r.labels.size()) {
    for (size_t i = 0; i < r.labels.size(); ++i)
      if (previous[i] != r.labels[i]) r.changed.push_back(static_cast<int>(i));
  }
  r.mask = render_labels(m, r.labels);
  return r;
}

}  // namespace spgraph
