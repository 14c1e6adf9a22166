#pragma once

#include <string>
#include <vector>

#include "assoc4d/eval.hpp"
#include "assoc4d/skelfit.hpp"
#include "assoc4d/solver.hpp"

namespace assoc4d {

// Full4D: association with temporal prior + parametric refinement.
// NoTracking: per-frame association only, fresh ids, plain triangulation.
// TwoStep: per-view parsing first, then cross-view person matching.
enum class Mode { Full4D, NoTracking, TwoStep };

Mode parse_mode(const std::string& name);  // throws ConfigError
std::string mode_name(Mode mode);

struct RunConfig {
	SolverConfig solver;
	FitConfig fit;
	Mode mode = Mode::Full4D;
};

struct RunStats {
	std::vector<double> association_ms;  // per frame: graph + parse + assemble
	std::vector<double> total_ms;
	double median_association_ms() const;
};

SkeletonSequence run_sequence(const std::vector<DetectionFrame>& frames,
	const std::vector<Camera>& cameras, const SkeletonTopology& topology, const RunConfig& cfg,
	RunStats* stats = nullptr);

// Skeleton file I/O (JSON, stable key order and float formatting, so equal
// sequences serialize to identical bytes).
void save_skeletons(const std::string& path, const SkeletonSequence& seq);
SkeletonSequence load_skeletons(const std::string& path);

}  // namespace assoc4d
