#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "assoc4d/detections.hpp"
#include "assoc4d/geometry.hpp"
#include "assoc4d/solver.hpp"

namespace assoc4d {

struct Skeleton3D {
	int person_id = -1;
	int frame_index = 0;
	std::vector<std::optional<Eigen::Vector3d>> joints;  // world meters
	std::vector<double> confidences;                     // [0,1], 0 for inferred joints
	std::vector<std::uint8_t> inferred;                  // filled by shape/temporal terms only
};

struct FitConfig {
	double w_2d = 1.0;
	double w_shape = 0.01;
	double w_temp = 0.005;
	int max_iterations = 20;
	double tolerance = 1e-5;        // step norm, meters
	int visibility_min_cams = 3;    // high-confidence threshold for bone sampling
	int bone_lock_samples = 5;

	void validate() const;
};

// Running mean bone lengths per person; a limb locks after bone_lock_samples.
struct BoneLengthState {
	int person_id = -1;
	std::vector<double> mean;   // per limb, meters; valid when count > 0
	std::vector<int> count;

	static BoneLengthState fresh(int person_id, int limb_count);
	bool locked(int limb, const FitConfig& cfg) const { return count[limb] >= cfg.bone_lock_samples; }
};

// Per-joint linear triangulation of one assembled person. Joints seen in
// fewer than two views stay absent; degenerate joints are skipped.
Skeleton3D triangulate_person(const Assembly::Person& person, const DetectionFrame& frame,
	const std::vector<Camera>& cameras, const SkeletonTopology& topology);

// Nonlinear least squares over free joint positions. Exposed so tests can
// check the objective and its gradient directly.
struct FitProblem {
	struct RayTerm { int joint; Ray ray; };
	struct BoneTerm { int joint_a, joint_b; double target; };
	struct SymTerm { int a1, a2, b1, b2; };  // | |a1-a2| - |b1-b2| |
	struct TempTerm { int joint; Eigen::Vector3d prev; };

	int n_joints = 0;
	std::vector<int> free_joints;            // joints being optimized, ascending
	std::vector<RayTerm> rays;
	std::vector<BoneTerm> bones;
	std::vector<SymTerm> syms;
	std::vector<TempTerm> temps;
	FitConfig cfg;

	// theta packs the free joints, 3 doubles each, in free_joints order.
	double objective(const Eigen::VectorXd& theta, const Eigen::MatrixXd& fixed_positions) const;
	Eigen::VectorXd gradient(const Eigen::VectorXd& theta, const Eigen::MatrixXd& fixed_positions) const;
};

struct FitOutcome {
	Eigen::VectorXd theta;
	double objective = 0.0;
	bool converged = false;
	int iterations = 0;
};

// Damped Gauss-Newton; the objective is non-increasing across accepted steps.
FitOutcome solve_fit(const FitProblem& problem, const Eigen::VectorXd& theta0,
	const Eigen::MatrixXd& fixed_positions);

// Least-squares refinement of a triangulated skeleton. Occluded joints are filled
// (flagged inferred) when an adjacent joint is observed and a shape or
// temporal term constrains them.
Skeleton3D fit_parametric(const Skeleton3D& tri, const Skeleton3D* prev,
	const BoneLengthState& bones, const Assembly::Person& person, const DetectionFrame& frame,
	const std::vector<Camera>& cameras, const SkeletonTopology& topology, const FitConfig& cfg);

// Adds one bone-length sample per limb whose endpoints meet the visibility
// threshold; locked limbs are left unchanged.
void update_bone_lengths(BoneLengthState& state, const Skeleton3D& skel,
	const std::vector<int>& views_per_joint, const SkeletonTopology& topology, const FitConfig& cfg);

}  // namespace assoc4d
