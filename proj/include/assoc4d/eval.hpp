#pragma once

#include <cstdint>
#include <vector>

#include "assoc4d/graph.hpp"
#include "assoc4d/skelfit.hpp"

namespace assoc4d {

// Per-frame lists of skeletons; predicted and ground truth share this shape.
using SkeletonSequence = std::vector<std::vector<Skeleton3D>>;

// Minimal-cost assignment on a rectangular cost matrix; entries above the
// gate are never matched. Returns, per row, the matched column or -1.
std::vector<int> hungarian_match(const Eigen::MatrixXd& cost, double gate);

// Per-frame matching of ground-truth actors to predicted persons by mean
// joint distance, gated at 1 m. Returns [gt index] -> pred index or -1.
std::vector<int> match_persons(const std::vector<Skeleton3D>& pred,
	const std::vector<Skeleton3D>& gt, double gate = 1.0);

struct PcpResult {
	std::vector<int> actor_ids;
	std::vector<double> per_actor;  // percent
	double average = 0.0;           // percent, over actors
};

// 3D PCP: a limb is correct when both endpoints lie within alpha x GT limb
// length of their ground-truth positions.
PcpResult pcp(const SkeletonSequence& pred, const SkeletonSequence& gt,
	const SkeletonTopology& topology, double alpha = 0.5);

// Joint correct iff within threshold_m of ground truth. Returns percent.
struct PrecisionRecall {
	double precision = 0.0;
	double recall = 0.0;
};
PrecisionRecall precision_recall(const SkeletonSequence& pred, const SkeletonSequence& gt,
	double threshold_m);

// Frames where a ground-truth actor's matched predicted id changes.
int id_switches(const SkeletonSequence& pred, const SkeletonSequence& gt);

struct OracleResult {
	double objective = 0.0;
	std::vector<std::uint8_t> selection;
};

// Exact maximum of the association objective over partitions of candidates
// into persons (plus outliers), respecting the degree constraints. Refuses
// instances whose enumeration size exceeds the cap.
OracleResult brute_force_solve(const Graph4D& graph, const GraphConfig& cfg,
	std::uint64_t cap = 10'000'000);

struct MatchReport {
	PcpResult pcp;
	PrecisionRecall pr;
	int id_switch_count = 0;
};

MatchReport evaluate(const SkeletonSequence& pred, const SkeletonSequence& gt,
	const SkeletonTopology& topology, double pcp_alpha = 0.5, double joint_threshold_m = 0.2);

}  // namespace assoc4d
