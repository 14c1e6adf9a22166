#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "assoc4d/errors.hpp"
#include "assoc4d/geometry.hpp"

namespace assoc4d {

// Skeleton tree: joint_count nodes, joint_count - 1 limbs, connected and acyclic.
struct SkeletonTopology {
	int joint_count = 0;
	std::vector<std::pair<int, int>> limbs;            // (joint_i, joint_j)
	std::vector<std::string> joint_names;
	int root = 0;
	std::vector<std::pair<int, int>> symmetric_limbs;  // (left limb idx, right limb idx)

	int limb_count() const { return static_cast<int>(limbs.size()); }
	void validate() const;       // throws ConfigError on a broken tree
	std::uint64_t hash() const;  // FNV-1a over the canonical description
};

// 19-joint body tree rooted at the mid-hip.
SkeletonTopology default_topology();

// Minimal chain topology (joint k linked to k+1), used by small-instance tools.
SkeletonTopology chain_topology(int joint_count);

struct JointCandidate {
	Pixel position;
	double confidence = 0.0;  // heatmap score in [0,1]
};

struct ViewDetections {
	int camera_id = -1;
	std::vector<std::vector<JointCandidate>> joints;  // [joint] -> candidates
	// [limb] -> M x N PAF score matrix, rows = candidates of joint_i, cols = joint_j.
	std::vector<Eigen::MatrixXd> pafs;
};

struct DetectionFrame {
	int frame_index = 0;
	std::vector<ViewDetections> views;

	int candidate_count(int view, int joint) const {
		return static_cast<int>(views[view].joints[joint].size());
	}
	void validate(const SkeletonTopology& topology) const;  // throws ParseError
};

// Detection file I/O. The text form is JSON; a path ending in ".msgpack" or
// ".bin" selects the compact binary serialization with identical semantics.
std::vector<DetectionFrame> load_frames(const std::string& path, const SkeletonTopology& topology);
void save_frames(const std::string& path, const std::vector<DetectionFrame>& frames,
	const SkeletonTopology& topology, const std::vector<int>& camera_ids);

// Calibration file I/O (JSON).
std::vector<Camera> load_calibration(const std::string& path);
void save_calibration(const std::string& path, const std::vector<Camera>& cameras);

}  // namespace assoc4d
