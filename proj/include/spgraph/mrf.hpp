#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "spgraph/graph.hpp"
#include "spgraph/image.hpp"

namespace spgraph {

enum class StrokeAction { Add, Delete };

struct StrokePoint {
  int x = 0;
  int y = 0;
  bool operator==(const StrokePoint&) const = default;
};

struct Stroke {
  std::vector<StrokePoint> points;
  int radius = 3;
  StrokeAction action = StrokeAction::Add;
  bool operator==(const Stroke&) const = default;
};

// {points:[[x,y],...], radius, action:"add"|"delete"}. Throws InvalidArgument
// on malformed input (no points, radius < 1, unknown action).
Stroke stroke_from_json(const nlohmann::json& j);
nlohmann::json stroke_to_json(const Stroke& s);

// Pixels covered by the polyline walked with integer steps and dilated by a
// disk of the stroke radius, clipped to the image.
Mask rasterize_stroke(const Stroke& stroke, int width, int height);

// Binary weighted Potts energy
//   E(L) = sum_i (1 - P_i(L_i)) + sum_edges w_ij [L_i != L_j],
// with P_i(1) = prob_i and P_i(0) = 1 - prob_i.
struct MrfProblem {
  int n_nodes = 0;
  std::vector<double> prob;
  std::vector<Edge> edges;
  std::vector<double> weight;         // w_ij >= 0, one per edge
  std::map<int, uint8_t> seeds;       // forced labels
};

// weight = phi * alpha.
MrfProblem make_problem(const SpGraph& g, double phi, const std::map<int, uint8_t>& seeds = {});

double energy(const MrfProblem& p, const std::vector<uint8_t>& labels);

struct MrfSolution {
  std::vector<uint8_t> labels;
  double energy = 0.0;
};

// Exact minimizer by min-cut. Seeds are hard: their source/sink links carry
// K_i = 1 + sum_j w_ij. Among optima the one with the fewest 1-labels reachable
// from the source in the residual graph is returned.
MrfSolution solve(const MrfProblem& p);

struct StrokeEffect {
  std::vector<double> prob;        // node probabilities after strokes
  std::map<int, uint8_t> seeds;
  std::vector<std::string> warnings;
};

// Later strokes override earlier ones on shared nodes.
StrokeEffect apply_strokes(const SpGraph& g, const LabelMap& compact, const std::vector<Stroke>& strokes);

struct EditResult {
  std::vector<uint8_t> labels;
  std::vector<int> changed;  // nodes whose label differs from `previous`
  Mask mask;
  double energy = 0.0;
  std::map<int, uint8_t> seeds;
  std::vector<std::string> warnings;
};

// Strokes, solve, render. `previous` may be empty (then nothing is reported as changed).
EditResult edit_cycle(const SpGraph& g, const LabelMap& compact, const std::vector<Stroke>& strokes, double phi,
                      const std::vector<uint8_t>& previous = {});

inline constexpr double kDefaultPhi = 10.0;

}  // namespace spgraph
