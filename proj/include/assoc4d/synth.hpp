#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "assoc4d/detections.hpp"
#include "assoc4d/skelfit.hpp"

namespace assoc4d {

struct SceneConfig {
	int person_count = 2;
	int view_count = 5;
	int frame_count = 100;
	double ring_radius = 4.0;       // camera ring, meters
	double ring_height = 1.8;
	double walk_amplitude = 0.3;    // root wander radius, meters
	double gait_period = 60.0;      // frames
	double person_spacing = 1.2;    // minimum start separation, meters
	int image_width = 2048;
	int image_height = 2048;
	double focal = 1600.0;          // pixels
	bool crossing_paths = false;    // straight paths swapping sides
	SkeletonTopology topology = default_topology();

	void validate() const;
};

struct NoiseConfig {
	double pixel_sigma = 0.0;       // px
	double miss_prob = 0.0;         // per joint per view
	double clutter_rate = 0.0;      // expected false candidates per joint type per view
	double paf_true_mean = 0.85;
	double paf_true_sigma = 0.1;
	double paf_false_mean = 0.15;
	double paf_false_sigma = 0.1;
	bool occlusion = false;         // ray blocking by other persons' torso cylinders
	double occlusion_radius = 0.15; // meters

	void validate() const;
};

struct GroundTruth {
	std::vector<int> person_ids;
	// [frame][person][joint] world positions; bone lengths are rigid over time.
	std::vector<std::vector<std::vector<Eigen::Vector3d>>> joints;
};

struct Scene {
	std::vector<Camera> cameras;
	GroundTruth truth;
};

// Deterministic given (config, seed). Persons follow smooth trajectories
// with fixed bone lengths; cameras sit on a ring facing the capture volume.
Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed);

struct RenderedDetections {
	std::vector<DetectionFrame> frames;
	// [frame][view][joint][person] -> candidate index, -1 when missed
	std::vector<std::vector<std::vector<std::vector<int>>>> index_map;
};

RenderedDetections render_detections(const GroundTruth& truth, const std::vector<Camera>& cameras,
	const SkeletonTopology& topology, const NoiseConfig& noise, std::uint64_t seed);

// Ground truth as a skeleton sequence, for the metrics in eval.
std::vector<std::vector<Skeleton3D>> truth_skeletons(const GroundTruth& truth, int joint_count);

void save_ground_truth(const std::string& path, const GroundTruth& truth,
	const RenderedDetections* rendered);
GroundTruth load_ground_truth(const std::string& path);

}  // namespace assoc4d
