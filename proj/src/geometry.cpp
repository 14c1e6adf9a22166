#include "assoc4d/geometry.hpp"

#include <cmath>

namespace assoc4d {

namespace {
constexpr double kParallelEps = 1e-12;
constexpr double kDegenerateCondition = 1e8;
constexpr double kMinDepth = 1e-9;
}  // namespace

Camera::Camera(int id, const Eigen::Matrix3d& intrinsic, const Eigen::Matrix3d& rotation,
	const Eigen::Vector3d& translation, int width, int height)
	: m_id(id), m_K(intrinsic), m_R(rotation), m_t(translation), m_width(width), m_height(height) {
	if (width <= 0 || height <= 0)
		throw ConfigError("camera " + std::to_string(id) + ": non-positive image size");
	if (std::abs(m_K.determinant()) < 1e-12)
		throw ConfigError("camera " + std::to_string(id) + ": singular intrinsic matrix");
	if ((m_R * m_R.transpose() - Eigen::Matrix3d::Identity()).norm() > 1e-6 ||
		m_R.determinant() < 0.0)
		throw ConfigError("camera " + std::to_string(id) + ": rotation is not a proper rotation");
	m_Kinv = m_K.inverse();
	m_center = -m_R.transpose() * m_t;
}

Ray back_project(const Camera& cam, const Pixel& p) {
	Ray ray;
	ray.origin = cam.center();
	ray.direction = (cam.rotation().transpose() * (cam.intrinsic_inv() * p.homogeneous())).normalized();
	return ray;
}

double line_line_distance(const Ray& a, const Ray& b) {
	const Eigen::Vector3d cross = a.direction.cross(b.direction);
	const double crossNorm = cross.norm();
	if (crossNorm < kParallelEps)
		return point_line_distance(b.origin, a);
	return std::abs(cross.dot(b.origin - a.origin)) / crossNorm;
}

double point_line_distance(const Eigen::Vector3d& x, const Ray& r) {
	const Eigen::Vector3d rel = x - r.origin;
	return (rel - rel.dot(r.direction) * r.direction).norm();
}

Pixel project(const Camera& cam, const Eigen::Vector3d& x) {
	const Eigen::Vector3d xc = cam.rotation() * x + cam.translation();
	if (xc.z() <= kMinDepth)
		throw GeometryError("project: point behind camera " + std::to_string(cam.id()));
	const Eigen::Vector3d h = cam.intrinsic() * xc;
	return { h.x() / h.z(), h.y() / h.z() };
}

Triangulation triangulate_rays(const std::vector<Ray>& rays) {
	if (rays.size() < 2)
		throw GeometryError("triangulate: insufficient views (" + std::to_string(rays.size()) + ")");

	// Sum of perpendicular projectors: A x = b with A = sum(I - d d^T).
	Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
	Eigen::Vector3d b = Eigen::Vector3d::Zero();
	for (const Ray& r : rays) {
		const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - r.direction * r.direction.transpose();
		A += P;
		b += P * r.origin;
	}

	Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(A);
	const double emin = eig.eigenvalues().minCoeff();
	const double emax = eig.eigenvalues().maxCoeff();
	if (emin <= 0.0 || emax / emin > kDegenerateCondition)
		throw GeometryError("triangulate: degenerate geometry (near-parallel ray bundle)");

	Triangulation out;
	out.point = A.ldlt().solve(b);
	double ssd = 0.0;
	for (const Ray& r : rays) {
		const double d = point_line_distance(out.point, r);
		ssd += d * d;
	}
	out.residual_rms = std::sqrt(ssd / static_cast<double>(rays.size()));
	return out;
}

Triangulation triangulate(const std::vector<std::pair<const Camera*, Pixel>>& observations) {
	std::vector<Ray> rays;
	rays.reserve(observations.size());
	for (const auto& [cam, pix] : observations)
		rays.push_back(back_project(*cam, pix));
	return triangulate_rays(rays);
}

}  // namespace assoc4d
