#pragma once

#include <Eigen/Dense>
#include <ostream>
#include <vector>

#include "assoc4d/graph.hpp"

namespace assoc4d {

struct SolverConfig {
	GraphConfig graph;
	int beam_width = 4;          // partial cliques kept per seed during growth
	double score_floor = 0.1;    // greedy stop margin above the bare single-limb penalty
	int min_person_views = 2;    // evidence filter: views per joint
	double min_person_joint_fraction = 0.4;
	int threads = 1;
	// Claim leftover unlabeled candidates for assembled persons when they
	// still share surviving edges (maximizes the raw objective; off by
	// default since lone joints without limb support are usually clutter).
	bool attach_free_joints = false;

	void validate() const;
};

// A 2D limb hypothesis: one parsing edge inside one view.
struct LimbNode2D {
	int view = -1;
	int cand_i = -1;  // candidate index of joint_i
	int cand_j = -1;  // candidate index of joint_j
	double paf = 0.0;
};

// Graph4D restricted to one limb type. Node-to-node weights store the SUM of
// the two same-joint-type edges (joint_i and joint_j); < 0 means the pair is
// not fully connected and cannot share a clique.
struct LimbGraph {
	int limb = -1;
	int joint_i = -1, joint_j = -1;
	int n_views = 0;
	std::vector<LimbNode2D> nodes;        // sorted by (view, cand_i, cand_j)
	std::vector<int> temporal;            // prior person indices with both joints valid
	Eigen::MatrixXd node_edges;           // nodes x nodes, cross-view only
	Eigen::MatrixXd temporal_edges;       // temporal x nodes
};

std::vector<LimbGraph> build_limb_graphs(const Graph4D& graph);

// One clique = at most one 2D limb per view plus at most one temporal node,
// all same-joint-type pairs connected in the pruned graph.
struct LimbClique {
	int limb = -1;
	std::vector<int> per_view;  // node index into LimbGraph::nodes, -1 = none
	int temporal = -1;          // index into LimbGraph::temporal, -1 = none
	double score = 0.0;

	int size() const;
};

// Welsch robust loss; c > 0.
double welsch(double x, double c);

// Internal edge energy / clique size + w_view * welsch(size).
double clique_score(const LimbClique& clique, const LimbGraph& lg, const SolverConfig& cfg);

// Beam-grown candidate set: every single 2D limb, every temporal seed, and all
// intermediate sizes reached by adding one view's compatible limb at a time.
std::vector<LimbClique> enumerate_cliques(const LimbGraph& lg, const SolverConfig& cfg);

// An accepted clique: constituent per-view 2D limbs + optional prior person.
struct LimbBundle {
	int limb = -1;
	std::vector<int> cand_i;  // per view, -1 = none
	std::vector<int> cand_j;
	int prior_person = -1;    // index into Graph4D::prior, -1 = none
	double score = 0.0;
};

// Greedy highest-score clique extraction with node removal; emitted bundles
// are mutually node-disjoint within the limb type.
std::vector<LimbBundle> parse_limb_bundles(const LimbGraph& lg, const SolverConfig& cfg);

struct Assembly {
	struct Person {
		int id = -1;
		int prior_person = -1;       // index into Graph4D::prior, -1 = fresh
		Eigen::MatrixXi joints;      // J x n_views candidate index, -1 = none
	};
	std::vector<Person> persons;
};

// Bundle-Kruskal assembly: max-score-first merging with conflict splitting.
Assembly assemble_skeletons(const std::vector<std::vector<LimbBundle>>& bundles_per_limb,
	const std::vector<LimbGraph>& limb_graphs, const Graph4D& graph, const SolverConfig& cfg,
	int first_fresh_id);

struct SolveDiagnostics {
	double graph_ms = 0.0;
	double parse_ms = 0.0;
	double assemble_ms = 0.0;
	double objective = 0.0;
};

struct SolveResult {
	Graph4D graph;
	Assembly assembly;
	SolveDiagnostics diagnostics;
};

// Full association step: build_graph -> per-limb bundle parsing -> assembly.
SolveResult solve_frame(const DetectionFrame& frame, const PriorSkeletons& prior,
	const std::vector<Camera>& cameras, const SolverConfig& cfg, const SkeletonTopology& topology,
	int first_fresh_id = 0);

// 0/1 labels over graph.edges implied by an assembly (edges internal to a person).
std::vector<std::uint8_t> assembly_selection(const Assembly& assembly, const Graph4D& graph);

void dump_bundles(std::ostream& out, const std::vector<std::vector<LimbBundle>>& bundles_per_limb);

}  // namespace assoc4d
