#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "assoc4d/errors.hpp"

namespace assoc4d {

struct Pixel {
	double u = 0.0;
	double v = 0.0;
	Eigen::Vector3d homogeneous() const { return { u, v, 1.0 }; }
};

// Pinhole camera, pre-undistorted. Extrinsics are world-to-camera: x_cam = R * x_world + t.
class Camera {
public:
	Camera(int id, const Eigen::Matrix3d& intrinsic, const Eigen::Matrix3d& rotation,
		const Eigen::Vector3d& translation, int width, int height);

	int id() const { return m_id; }
	int width() const { return m_width; }
	int height() const { return m_height; }
	const Eigen::Matrix3d& intrinsic() const { return m_K; }
	const Eigen::Matrix3d& intrinsic_inv() const { return m_Kinv; }
	const Eigen::Matrix3d& rotation() const { return m_R; }
	const Eigen::Vector3d& translation() const { return m_t; }
	const Eigen::Vector3d& center() const { return m_center; }

private:
	int m_id = -1;
	Eigen::Matrix3d m_K, m_Kinv, m_R;
	Eigen::Vector3d m_t, m_center;
	int m_width = 0, m_height = 0;
};

// Infinite line through origin along a unit direction.
struct Ray {
	Eigen::Vector3d origin;
	Eigen::Vector3d direction;
};

Ray back_project(const Camera& cam, const Pixel& p);

// Shortest distance between the two infinite lines; falls back to
// point-to-line when the rays are (near-)parallel.
double line_line_distance(const Ray& a, const Ray& b);

double point_line_distance(const Eigen::Vector3d& x, const Ray& r);

// Throws GeometryError when x has non-positive depth in the camera frame.
Pixel project(const Camera& cam, const Eigen::Vector3d& x);

struct Triangulation {
	Eigen::Vector3d point;
	double residual_rms = 0.0;  // RMS point-to-ray distance, meters
};

// Point minimizing the sum of squared point-to-ray distances.
// Throws GeometryError on < 2 rays or a degenerate (near-parallel) bundle.
Triangulation triangulate_rays(const std::vector<Ray>& rays);
Triangulation triangulate(const std::vector<std::pair<const Camera*, Pixel>>& observations);

}  // namespace assoc4d
