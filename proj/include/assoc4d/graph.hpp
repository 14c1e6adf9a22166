#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "assoc4d/detections.hpp"
#include "assoc4d/geometry.hpp"

namespace assoc4d {

struct GraphConfig {
	double epipolar_norm = 0.2;   // Z, meters
	double tracking_norm = 0.2;   // T, meters
	double w_parsing = 1.0;
	double w_matching = 1.0;
	double w_tracking = 1.0;
	double w_view = 0.25;         // clique-size penalty weight
	double prune_epsilon = 0.05;  // edges below this weight are dropped

	void validate() const;
};

// Reconstructed skeletons of the previous frame, used as temporal prior.
struct PriorPerson {
	int id = -1;
	std::vector<std::optional<Eigen::Vector3d>> joints;  // [joint] -> world position
};
using PriorSkeletons = std::vector<PriorPerson>;

// Weight of a single PAF parsing edge (identity map, validated).
double parsing_weight(double paf_score);

// 1 - epipolar ray distance / Z, clamped to [0,1].
double matching_weight(const Camera& cam1, const Pixel& d1,
	const Camera& cam2, const Pixel& d2, double Z);

// 1 - point-to-ray distance / T, clamped to [0,1].
double tracking_weight(const Eigen::Vector3d& x, const Camera& cam, const Pixel& d, double T);

enum class EdgeType : std::uint8_t { Parsing, Matching, Tracking };

// Flat edge record, used by the objective, feasibility checks and the oracle.
struct Edge {
	EdgeType type;
	int group = 0;   // limb for parsing, joint type for matching/tracking
	int view_a = 0;
	int view_b = 0;  // matching only
	int m = 0;       // candidate of joint_i / joint (row)
	int n = 0;       // candidate of joint_j / joint in view_b; prior person for tracking
	double weight = 0.0;
};

// Per-frame association graph. Matrices store the pruned weights; entries < 0
// mean the edge is absent. Immutable after construction.
struct Graph4D {
	const SkeletonTopology* topology = nullptr;
	int n_views = 0;
	int n_prior = 0;

	// Candidates copied from the frame, plus their back-projected rays.
	std::vector<std::vector<std::vector<JointCandidate>>> candidates;  // [view][joint]
	std::vector<std::vector<std::vector<Ray>>> rays;                   // [view][joint]
	PriorSkeletons prior;

	std::vector<std::vector<Eigen::MatrixXd>> parsing;   // [view][limb]: M x N
	// [joint][view_a][view_b] with view_a < view_b filled: Ma x Mb
	std::vector<std::vector<std::vector<Eigen::MatrixXd>>> matching;
	std::vector<std::vector<Eigen::MatrixXd>> tracking;  // [joint][view]: n_prior x M

	std::vector<Edge> edges;

	int candidate_count(int view, int joint) const {
		return static_cast<int>(candidates[view][joint].size());
	}
};

Graph4D build_graph(const DetectionFrame& frame, const PriorSkeletons& prior,
	const std::vector<Camera>& cameras, const GraphConfig& cfg, const SkeletonTopology& topology);

// Total weighted energy of a 0/1 edge selection.
double objective(const std::vector<std::uint8_t>& selection, const Graph4D& graph,
	const GraphConfig& cfg);

struct FeasibilityReport {
	bool feasible = true;
	std::vector<std::string> violations;
};

// Degree constraints: no two selected edges of one family share a node.
FeasibilityReport check_feasible(const std::vector<std::uint8_t>& selection, const Graph4D& graph);

// Text dump of the full edge list, one edge per line.
void dump_edges(std::ostream& out, const Graph4D& graph);

}  // namespace assoc4d
