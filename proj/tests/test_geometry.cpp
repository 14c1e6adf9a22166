#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "assoc4d/geometry.hpp"
#include "assoc4d/synth.hpp"

using namespace assoc4d;

namespace {

Camera identity_camera(int id = 0) {
	return { id, Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity(),
		Eigen::Vector3d::Zero(), 64, 64 };
}

Eigen::Vector3d rand_vec(std::mt19937_64& rng, double scale = 1.0) {
	std::uniform_real_distribution<double> u(-scale, scale);
	return { u(rng), u(rng), u(rng) };
}

}  // namespace

TEST_CASE("camera construction rejects invalid parameters") {
	const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
	CHECK_THROWS_AS(Camera(0, Eigen::Matrix3d::Zero(), I, Eigen::Vector3d::Zero(), 64, 64),
		ConfigError);
	CHECK_THROWS_AS(Camera(0, I, 2.0 * I, Eigen::Vector3d::Zero(), 64, 64), ConfigError);
	Eigen::Matrix3d reflection = I;
	reflection(0, 0) = -1.0;
	CHECK_THROWS_AS(Camera(0, I, reflection, Eigen::Vector3d::Zero(), 64, 64), ConfigError);
	CHECK_THROWS_AS(Camera(0, I, I, Eigen::Vector3d::Zero(), 0, 64), ConfigError);
}

TEST_CASE("back_project identity camera") {
	const Camera cam = identity_camera();
	const Ray r0 = back_project(cam, { 0.0, 0.0 });
	CHECK(r0.origin.norm() == doctest::Approx(0.0).epsilon(1e-12));
	CHECK((r0.direction - Eigen::Vector3d::UnitZ()).norm() == doctest::Approx(0.0).epsilon(1e-12));

	const Ray r1 = back_project(cam, { 1.0, 0.0 });
	const Eigen::Vector3d expected = Eigen::Vector3d(1.0, 0.0, 1.0).normalized();
	CHECK((r1.direction - expected).norm() == doctest::Approx(0.0).epsilon(1e-12));
	CHECK(r1.direction.norm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("project identity camera") {
	const Camera cam = identity_camera();
	const Pixel p0 = project(cam, { 0.0, 0.0, 2.0 });
	CHECK(p0.u == doctest::Approx(0.0));
	CHECK(p0.v == doctest::Approx(0.0));
	const Pixel p1 = project(cam, { 2.0, 0.0, 2.0 });
	CHECK(p1.u == doctest::Approx(1.0));
	CHECK(p1.v == doctest::Approx(0.0));
	CHECK_THROWS_AS(project(cam, { 0.0, 0.0, -1.0 }), GeometryError);
}

TEST_CASE("project / back_project round trip on ring cameras") {
	SceneConfig cfg;
	cfg.frame_count = 1;
	const Scene scene = generate_scene(cfg, 11);
	std::mt19937_64 rng(5);
	for (const Camera& cam : scene.cameras)
		for (int i = 0; i < 20; i++) {
			const Eigen::Vector3d x = rand_vec(rng) + Eigen::Vector3d(0, 0, 1.2);
			const Ray ray = back_project(cam, project(cam, x));
			CHECK(point_line_distance(x, ray) < 1e-9);
		}
}

TEST_CASE("line_line_distance basic values") {
	const Ray x_axis{ Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX() };
	CHECK(line_line_distance(x_axis, x_axis) == doctest::Approx(0.0));

	const Ray parallel{ Eigen::Vector3d(0, 1, 0), Eigen::Vector3d::UnitX() };
	CHECK(line_line_distance(x_axis, parallel) == doctest::Approx(1.0));

	const Ray skew{ Eigen::Vector3d(0, 0, 1), Eigen::Vector3d::UnitY() };
	CHECK(line_line_distance(x_axis, skew) == doctest::Approx(1.0));
}

TEST_CASE("distances are symmetric and rigid-invariant") {
	std::mt19937_64 rng(17);
	std::uniform_real_distribution<double> u(-1.0, 1.0);
	for (int i = 0; i < 50; i++) {
		const Ray a{ rand_vec(rng, 3.0), rand_vec(rng).normalized() };
		const Ray b{ rand_vec(rng, 3.0), rand_vec(rng).normalized() };
		const double d = line_line_distance(a, b);
		CHECK(d == line_line_distance(b, a));

		const Eigen::Matrix3d R =
			Eigen::AngleAxisd(u(rng) * 3.0, rand_vec(rng).normalized()).toRotationMatrix();
		const Eigen::Vector3d t = rand_vec(rng, 5.0);
		const Ray ar{ R * a.origin + t, R * a.direction };
		const Ray br{ R * b.origin + t, R * b.direction };
		CHECK(std::abs(d - line_line_distance(ar, br)) < 1e-9);

		const Eigen::Vector3d x = rand_vec(rng, 2.0);
		CHECK(std::abs(point_line_distance(x, a) - point_line_distance(R * x + t, ar)) < 1e-9);
	}
}

TEST_CASE("point_line_distance values and sampling bound") {
	const Ray z_axis{ Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ() };
	CHECK(point_line_distance({ 0, 0, 7 }, z_axis) == doctest::Approx(0.0));
	CHECK(point_line_distance({ 3, 4, 10 }, z_axis) == doctest::Approx(5.0));

	std::mt19937_64 rng(23);
	for (int i = 0; i < 10; i++) {
		const Ray r{ rand_vec(rng, 2.0), rand_vec(rng).normalized() };
		const Eigen::Vector3d x = rand_vec(rng, 2.0);
		const double d = point_line_distance(x, r);
		double sampled = 1e300;
		for (int k = -40000; k <= 40000; k++) {
			const double s = k * 2.5e-4 * 10.0;
			sampled = std::min(sampled, (x - (r.origin + s * r.direction)).norm());
		}
		CHECK(std::abs(d - sampled) < 1e-6);
	}
}

TEST_CASE("triangulate exact observations") {
	SceneConfig cfg;
	cfg.frame_count = 1;
	const Scene scene = generate_scene(cfg, 13);
	const Eigen::Vector3d x(1.0, 2.0, 3.0);
	// Point chosen outside the capture volume, but still in front of all ring
	// cameras facing (0, 0, 1).
	std::vector<std::pair<const Camera*, Pixel>> obs;
	for (const Camera& cam : scene.cameras)
		obs.push_back({ &cam, project(cam, Eigen::Vector3d(0.4, -0.2, 1.5)) });

	SUBCASE("two views") {
		const Triangulation tri = triangulate({ obs[0], obs[1] });
		CHECK((tri.point - Eigen::Vector3d(0.4, -0.2, 1.5)).norm() < 1e-9);
		CHECK(tri.residual_rms < 1e-9);
	}
	SUBCASE("all views within 1e-7") {
		const Triangulation tri = triangulate(obs);
		CHECK((tri.point - Eigen::Vector3d(0.4, -0.2, 1.5)).norm() < 1e-7);
	}
	SUBCASE("single observation rejected") {
		CHECK_THROWS_AS(triangulate({ obs[0] }), GeometryError);
	}
	(void)x;
}

TEST_CASE("triangulate_rays matches a direct normal-equation solve") {
	std::mt19937_64 rng(29);
	for (int trial = 0; trial < 10; trial++) {
		std::vector<Ray> rays;
		for (int i = 0; i < 3; i++)
			rays.push_back({ rand_vec(rng, 2.0), rand_vec(rng).normalized() });
		Triangulation tri;
		try {
			tri = triangulate_rays(rays);
		} catch (const GeometryError&) {
			continue;  // degenerate random bundle
		}
		// Independent solve of sum (I - d d^T)(x - o) = 0.
		Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
		Eigen::Vector3d b = Eigen::Vector3d::Zero();
		for (const Ray& r : rays) {
			const Eigen::Matrix3d P =
				Eigen::Matrix3d::Identity() - r.direction * r.direction.transpose();
			A += P;
			b += P * r.origin;
		}
		const Eigen::Vector3d ref = A.fullPivLu().solve(b);
		CHECK((tri.point - ref).norm() < 1e-9);
	}
}

TEST_CASE("triangulate_rays rejects parallel bundles") {
	const Ray a{ Eigen::Vector3d(0, 0, 0), Eigen::Vector3d::UnitZ() };
	const Ray b{ Eigen::Vector3d(1, 0, 0), Eigen::Vector3d::UnitZ() };
	CHECK_THROWS_AS(triangulate_rays({ a, b }), GeometryError);
}
