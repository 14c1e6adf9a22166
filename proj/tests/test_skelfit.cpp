#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "assoc4d/skelfit.hpp"
#include "assoc4d/synth.hpp"

using namespace assoc4d;

namespace {

struct SolvedFrame {
	Scene scene;
	RenderedDetections det;
	SolveResult result;
};

SolvedFrame solve_clean(int persons, int views, std::uint64_t seed) {
	SolvedFrame out;
	SceneConfig cfg;
	cfg.person_count = persons;
	cfg.view_count = views;
	cfg.frame_count = 1;
	out.scene = generate_scene(cfg, seed);
	NoiseConfig clean;
	clean.paf_true_sigma = 0.0;
	clean.paf_false_sigma = 0.0;
	out.det = render_detections(out.scene.truth, out.scene.cameras, cfg.topology, clean, seed + 1);
	SolverConfig scfg;
	scfg.graph.prune_epsilon = 0.45;
	out.result = solve_frame(out.det.frames[0], {}, out.scene.cameras, scfg, cfg.topology);
	return out;
}

std::vector<int> views_of(const Assembly::Person& p, int joint_count, int views) {
	std::vector<int> out(joint_count, 0);
	for (int j = 0; j < joint_count; j++)
		for (int v = 0; v < views; v++)
			if (p.joints(j, v) >= 0)
				out[j]++;
	return out;
}

}  // namespace

TEST_CASE("triangulate_person on a noiseless scene matches ground truth") {
	const SolvedFrame sf = solve_clean(1, 3, 41);
	const SkeletonTopology topo = default_topology();
	REQUIRE(sf.result.assembly.persons.size() == 1);
	const Skeleton3D skel = triangulate_person(sf.result.assembly.persons[0], sf.det.frames[0],
		sf.scene.cameras, topo);
	for (int j = 0; j < topo.joint_count; j++) {
		REQUIRE(skel.joints[j].has_value());
		CHECK((*skel.joints[j] - sf.scene.truth.joints[0][0][j]).norm() < 1e-6);
		CHECK(skel.confidences[j] > 0.0);
	}
}

TEST_CASE("joints seen in fewer than two views stay absent") {
	const SolvedFrame sf = solve_clean(1, 3, 43);
	const SkeletonTopology topo = default_topology();
	Assembly::Person p = sf.result.assembly.persons[0];
	// Restrict joint 0 to a single view.
	p.joints(0, 1) = -1;
	p.joints(0, 2) = -1;
	const Skeleton3D skel = triangulate_person(p, sf.det.frames[0], sf.scene.cameras, topo);
	CHECK(!skel.joints[0].has_value());
	CHECK(skel.joints[1].has_value());
}

TEST_CASE("noisy triangulation equals a direct least-squares solve") {
	SceneConfig cfg;
	cfg.person_count = 1;
	cfg.view_count = 5;
	cfg.frame_count = 1;
	const Scene scene = generate_scene(cfg, 47);
	NoiseConfig noise;
	noise.pixel_sigma = 2.0;
	const RenderedDetections det =
		render_detections(scene.truth, scene.cameras, cfg.topology, noise, 48);
	SolverConfig scfg;
	scfg.graph.prune_epsilon = 0.45;
	const SolveResult r = solve_frame(det.frames[0], {}, scene.cameras, scfg, cfg.topology);
	REQUIRE(r.assembly.persons.size() == 1);
	const Assembly::Person& p = r.assembly.persons[0];
	const Skeleton3D skel =
		triangulate_person(p, det.frames[0], scene.cameras, cfg.topology);
	for (int j = 0; j < cfg.topology.joint_count; j++) {
		if (!skel.joints[j].has_value())
			continue;
		Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
		Eigen::Vector3d b = Eigen::Vector3d::Zero();
		for (int v = 0; v < cfg.view_count; v++) {
			if (p.joints(j, v) < 0)
				continue;
			const Ray ray = back_project(scene.cameras[v],
				det.frames[0].views[v].joints[j][p.joints(j, v)].position);
			const Eigen::Matrix3d P =
				Eigen::Matrix3d::Identity() - ray.direction * ray.direction.transpose();
			A += P;
			b += P * ray.origin;
		}
		const Eigen::Vector3d ref = A.fullPivLu().solve(b);
		CHECK((*skel.joints[j] - ref).norm() < 1e-9);
	}
}

TEST_CASE("data-term-only fit reproduces the triangulation") {
	const SolvedFrame sf = solve_clean(1, 3, 51);
	const SkeletonTopology topo = default_topology();
	const Assembly::Person& p = sf.result.assembly.persons[0];
	const Skeleton3D tri = triangulate_person(p, sf.det.frames[0], sf.scene.cameras, topo);
	FitConfig fc;
	fc.w_shape = 0.0;
	fc.w_temp = 0.0;
	const BoneLengthState bones = BoneLengthState::fresh(0, topo.limb_count());
	const Skeleton3D fit = fit_parametric(tri, nullptr, bones, p, sf.det.frames[0],
		sf.scene.cameras, topo, fc);
	for (int j = 0; j < topo.joint_count; j++) {
		REQUIRE(fit.joints[j].has_value());
		CHECK((*fit.joints[j] - *tri.joints[j]).norm() < 1e-5);
	}
}

TEST_CASE("strong temporal weight pins the fit to the previous frame") {
	const SolvedFrame sf = solve_clean(1, 3, 53);
	const SkeletonTopology topo = default_topology();
	const Assembly::Person& p = sf.result.assembly.persons[0];
	const Skeleton3D tri = triangulate_person(p, sf.det.frames[0], sf.scene.cameras, topo);
	Skeleton3D prev = tri;
	for (int j = 0; j < topo.joint_count; j++)
		*prev.joints[j] += Eigen::Vector3d(0.004, -0.003, 0.002);
	FitConfig fc;
	fc.w_2d = 0.0;
	fc.w_shape = 0.0;
	fc.w_temp = 1000.0;
	fc.max_iterations = 50;
	const BoneLengthState bones = BoneLengthState::fresh(0, topo.limb_count());
	const Skeleton3D fit = fit_parametric(tri, &prev, bones, p, sf.det.frames[0],
		sf.scene.cameras, topo, fc);
	for (int j = 0; j < topo.joint_count; j++)
		CHECK((*fit.joints[j] - *prev.joints[j]).norm() < 1e-3);
}

TEST_CASE("shape prior pulls a corrupted limb toward the locked bone length") {
	const SolvedFrame sf = solve_clean(1, 5, 57);
	const SkeletonTopology topo = default_topology();
	const Assembly::Person& p = sf.result.assembly.persons[0];
	Skeleton3D tri = triangulate_person(p, sf.det.frames[0], sf.scene.cameras, topo);

	BoneLengthState bones = BoneLengthState::fresh(0, topo.limb_count());
	for (int l = 0; l < topo.limb_count(); l++) {
		const auto [ji, jj] = topo.limbs[l];
		bones.mean[l] = (*tri.joints[ji] - *tri.joints[jj]).norm();
		bones.count[l] = 5;
	}
	// Corrupt one limb's outer joint by 0.3 m.
	const auto [ji, jj] = topo.limbs[topo.limb_count() - 1];
	*tri.joints[jj] += Eigen::Vector3d(0.3, 0.0, 0.0);

	FitConfig fc;
	fc.w_2d = 0.0;
	fc.w_shape = 10.0;
	fc.w_temp = 0.0;
	fc.max_iterations = 100;
	const Skeleton3D fit = fit_parametric(tri, nullptr, bones, p, sf.det.frames[0],
		sf.scene.cameras, topo, fc);
	const double fitted = (*fit.joints[ji] - *fit.joints[jj]).norm();
	const double corrupted = (*tri.joints[ji] - *tri.joints[jj]).norm();
	CHECK(std::abs(fitted - bones.mean[topo.limb_count() - 1]) <
		std::abs(corrupted - bones.mean[topo.limb_count() - 1]) * 0.5);
}

TEST_CASE("fit gradient matches central finite differences") {
	std::mt19937_64 rng(61);
	std::uniform_real_distribution<double> u(-1.0, 1.0);
	const auto rv = [&] { return Eigen::Vector3d(u(rng), u(rng), u(rng)); };
	FitProblem prob;
	prob.n_joints = 5;
	prob.free_joints = { 0, 2, 3, 4 };  // joint 1 fixed
	for (int j = 0; j < prob.n_joints; j++)
		prob.rays.push_back({ j, { rv() * 2.0, rv().normalized() } });
	prob.bones = { { 0, 1, 0.5 }, { 1, 2, 0.4 }, { 2, 3, 0.4 }, { 3, 4, 0.3 } };
	prob.syms = { { 0, 1, 3, 4 } };
	prob.temps = { { 2, rv() } };
	prob.cfg.w_shape = 0.3;
	prob.cfg.w_temp = 0.2;
	Eigen::MatrixXd fixed = Eigen::MatrixXd::Zero(3, prob.n_joints);
	fixed.col(1) = rv();
	for (int trial = 0; trial < 20; trial++) {
		Eigen::VectorXd theta(3 * prob.free_joints.size());
		for (int k = 0; k < theta.size(); k++)
			theta[k] = u(rng) * 2.0;
		const Eigen::VectorXd g = prob.gradient(theta, fixed);
		Eigen::VectorXd fd(theta.size());
		const double h = 1e-6;
		for (int k = 0; k < theta.size(); k++) {
			Eigen::VectorXd tp = theta, tm = theta;
			tp[k] += h;
			tm[k] -= h;
			fd[k] = (prob.objective(tp, fixed) - prob.objective(tm, fixed)) / (2.0 * h);
		}
		CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
	}
}

TEST_CASE("solve_fit never increases the objective") {
	std::mt19937_64 rng(67);
	std::uniform_real_distribution<double> u(-1.0, 1.0);
	const auto rv = [&] { return Eigen::Vector3d(u(rng), u(rng), u(rng)); };
	FitProblem prob;
	prob.n_joints = 3;
	prob.free_joints = { 0, 1, 2 };
	for (int j = 0; j < prob.n_joints; j++) {
		prob.rays.push_back({ j, { rv(), rv().normalized() } });
		prob.rays.push_back({ j, { rv(), rv().normalized() } });
	}
	prob.bones = { { 0, 1, 0.5 }, { 1, 2, 0.4 } };
	const Eigen::MatrixXd fixed = Eigen::MatrixXd::Zero(3, prob.n_joints);
	for (int trial = 0; trial < 10; trial++) {
		Eigen::VectorXd theta0(9);
		for (int k = 0; k < 9; k++)
			theta0[k] = u(rng);
		const FitOutcome out = solve_fit(prob, theta0, fixed);
		CHECK(out.objective <= prob.objective(theta0, fixed) + 1e-12);
	}
}

TEST_CASE("bone length state accumulates and locks") {
	const SkeletonTopology topo = chain_topology(3);
	FitConfig fc;
	BoneLengthState state = BoneLengthState::fresh(7, topo.limb_count());
	CHECK(state.person_id == 7);

	Skeleton3D skel;
	skel.joints = { Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0),
		Eigen::Vector3d(1, 1, 0) };
	skel.confidences = { 1.0, 1.0, 1.0 };
	skel.inferred = { 0, 0, 0 };
	const std::vector<int> highVis(3, fc.visibility_min_cams + 1);
	const std::vector<int> lowVis(3, 1);

	SUBCASE("low visibility leaves state unchanged") {
		update_bone_lengths(state, skel, lowVis, topo, fc);
		CHECK(state.count[0] == 0);
	}
	SUBCASE("five samples lock at the arithmetic mean") {
		const double lengths[5] = { 1.0, 1.1, 0.9, 1.0, 1.0 };
		for (const double len : lengths) {
			skel.joints[1] = Eigen::Vector3d(len, 0, 0);
			skel.joints[2] = Eigen::Vector3d(len, 1, 0);
			update_bone_lengths(state, skel, highVis, topo, fc);
		}
		CHECK(state.locked(0, fc));
		CHECK(state.mean[0] == doctest::Approx(1.0).epsilon(1e-12));

		// Locked limbs ignore further samples.
		skel.joints[1] = Eigen::Vector3d(5.0, 0, 0);
		update_bone_lengths(state, skel, highVis, topo, fc);
		CHECK(state.mean[0] == doctest::Approx(1.0).epsilon(1e-12));
	}
	SUBCASE("mean is permutation invariant") {
		BoneLengthState other = BoneLengthState::fresh(7, topo.limb_count());
		const double fwd[5] = { 1.0, 1.1, 0.9, 1.0, 1.0 };
		const double rev[5] = { 1.0, 1.0, 0.9, 1.1, 1.0 };
		for (int i = 0; i < 5; i++) {
			skel.joints[1] = Eigen::Vector3d(fwd[i], 0, 0);
			update_bone_lengths(state, skel, highVis, topo, fc);
			skel.joints[1] = Eigen::Vector3d(rev[i], 0, 0);
			update_bone_lengths(other, skel, highVis, topo, fc);
		}
		CHECK(state.mean[0] == doctest::Approx(other.mean[0]).epsilon(1e-12));
	}
}
