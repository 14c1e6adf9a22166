#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "assoc4d/graph.hpp"
#include "assoc4d/synth.hpp"

using namespace assoc4d;

namespace {

Camera shifted_camera(int id, double x_offset) {
	return { id, Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity(),
		Eigen::Vector3d(-x_offset, 0.0, 0.0), 64, 64 };
}

}  // namespace

TEST_CASE("parsing weight is the identity on [0,1]") {
	CHECK(parsing_weight(0.0) == 0.0);
	CHECK(parsing_weight(1.0) == 1.0);
	CHECK(parsing_weight(0.37) == 0.37);
	CHECK_THROWS_AS(parsing_weight(-0.1), ConfigError);
	CHECK_THROWS_AS(parsing_weight(1.1), ConfigError);
}

TEST_CASE("matching weight from ray distance") {
	// Two identity cameras with centers (0,0,0) and (d,0,0); pixel (0,0)
	// back-projects to parallel rays along +z separated by exactly d.
	const Camera a = shifted_camera(0, 0.0);
	const double Z = 0.2;
	SUBCASE("same 3D point gives weight 1") {
		const Camera b = shifted_camera(1, 0.5);
		const Eigen::Vector3d x(0.2, 0.1, 3.0);
		const double w = matching_weight(a, project(a, x), b, project(b, x), Z);
		CHECK(w == doctest::Approx(1.0).epsilon(1e-9));
	}
	SUBCASE("distance Z gives weight 0") {
		const Camera b = shifted_camera(1, Z);
		CHECK(matching_weight(a, { 0, 0 }, b, { 0, 0 }, Z) == doctest::Approx(0.0));
	}
	SUBCASE("distance 2Z clamps to 0") {
		const Camera b = shifted_camera(1, 2.0 * Z);
		CHECK(matching_weight(a, { 0, 0 }, b, { 0, 0 }, Z) == 0.0);
	}
	SUBCASE("distance Z/2 gives weight 0.5") {
		const Camera b = shifted_camera(1, Z / 2.0);
		CHECK(matching_weight(a, { 0, 0 }, b, { 0, 0 }, Z) == doctest::Approx(0.5));
	}
	SUBCASE("symmetry in the two observations") {
		const Camera b = shifted_camera(1, 0.13);
		CHECK(matching_weight(a, { 0.3, -0.2 }, b, { -0.1, 0.4 }, Z) ==
			matching_weight(b, { -0.1, 0.4 }, a, { 0.3, -0.2 }, Z));
	}
}

TEST_CASE("tracking weight from point-to-ray distance") {
	const Camera cam = shifted_camera(0, 0.0);
	const double T = 0.2;
	// Pixel (0,0) back-projects to the +z axis.
	CHECK(tracking_weight({ 0, 0, 5 }, cam, { 0, 0 }, T) == doctest::Approx(1.0));
	CHECK(tracking_weight({ T, 0, 5 }, cam, { 0, 0 }, T) == doctest::Approx(0.0));
	CHECK(tracking_weight({ T / 2, 0, 5 }, cam, { 0, 0 }, T) == doctest::Approx(0.5));
	CHECK(tracking_weight({ 3 * T, 0, 5 }, cam, { 0, 0 }, T) == 0.0);
}

TEST_CASE("weights are monotone in distance and within [0,1]") {
	const Camera cam = shifted_camera(0, 0.0);
	double prev = 1.0;
	for (double d = 0.0; d <= 0.5; d += 0.01) {
		const double w = tracking_weight({ d, 0, 5 }, cam, { 0, 0 }, 0.2);
		CHECK(w >= 0.0);
		CHECK(w <= 1.0);
		CHECK(w <= prev + 1e-12);
		prev = w;
	}
}

TEST_CASE("build_graph on an empty frame") {
	SceneConfig cfg;
	cfg.frame_count = 1;
	const Scene scene = generate_scene(cfg, 2);
	DetectionFrame frame;
	frame.views.resize(scene.cameras.size());
	for (size_t v = 0; v < frame.views.size(); v++) {
		frame.views[v].camera_id = scene.cameras[v].id();
		frame.views[v].joints.resize(cfg.topology.joint_count);
		frame.views[v].pafs.assign(cfg.topology.limb_count(), Eigen::MatrixXd());
		for (int l = 0; l < cfg.topology.limb_count(); l++)
			frame.views[v].pafs[l].resize(0, 0);
	}
	const Graph4D g = build_graph(frame, {}, scene.cameras, {}, cfg.topology);
	CHECK(g.edges.empty());
}

TEST_CASE("noiseless single-person graph has perfect matching edges and no tracking") {
	SceneConfig cfg;
	cfg.person_count = 1;
	cfg.view_count = 2;
	cfg.frame_count = 1;
	const Scene scene = generate_scene(cfg, 5);
	NoiseConfig clean;
	clean.paf_true_sigma = 0.0;
	clean.paf_false_sigma = 0.0;
	const RenderedDetections det =
		render_detections(scene.truth, scene.cameras, cfg.topology, clean, 6);
	const Graph4D g = build_graph(det.frames[0], {}, scene.cameras, {}, cfg.topology);
	int matching = 0, tracking = 0;
	for (const Edge& e : g.edges) {
		if (e.type == EdgeType::Matching) {
			matching++;
			CHECK(e.weight == doctest::Approx(1.0).epsilon(1e-6));
		}
		if (e.type == EdgeType::Tracking)
			tracking++;
	}
	CHECK(matching == cfg.topology.joint_count);
	CHECK(tracking == 0);
}

TEST_CASE("graph edges match independent per-edge recomputation") {
	SceneConfig cfg;
	cfg.person_count = 2;
	cfg.view_count = 3;
	cfg.frame_count = 2;
	const Scene scene = generate_scene(cfg, 9);
	NoiseConfig noise;
	noise.pixel_sigma = 1.0;
	noise.clutter_rate = 0.5;
	const RenderedDetections det =
		render_detections(scene.truth, scene.cameras, cfg.topology, noise, 10);
	PriorSkeletons prior;
	PriorPerson p;
	p.id = 0;
	p.joints.resize(cfg.topology.joint_count);
	for (int j = 0; j < cfg.topology.joint_count; j++)
		p.joints[j] = scene.truth.joints[0][0][j];
	prior.push_back(p);

	GraphConfig gc;
	const Graph4D g = build_graph(det.frames[1], prior, scene.cameras, gc, cfg.topology);
	CHECK(!g.edges.empty());
	for (const Edge& e : g.edges) {
		CHECK(e.weight >= gc.prune_epsilon);
		CHECK(e.weight <= 1.0);
		double expected = 0.0;
		switch (e.type) {
		case EdgeType::Parsing:
			expected = parsing_weight(
				det.frames[1].views[e.view_a].pafs[e.group](e.m, e.n));
			break;
		case EdgeType::Matching:
			expected = matching_weight(scene.cameras[e.view_a],
				det.frames[1].views[e.view_a].joints[e.group][e.m].position,
				scene.cameras[e.view_b],
				det.frames[1].views[e.view_b].joints[e.group][e.n].position, gc.epipolar_norm);
			break;
		case EdgeType::Tracking:
			expected = tracking_weight(*prior[e.n].joints[e.group], scene.cameras[e.view_a],
				det.frames[1].views[e.view_a].joints[e.group][e.m].position, gc.tracking_norm);
			break;
		}
		CHECK(e.weight == doctest::Approx(expected).epsilon(1e-12));
	}
}

TEST_CASE("objective sums selected edge energies") {
	SceneConfig cfg;
	cfg.person_count = 2;
	cfg.view_count = 2;
	cfg.frame_count = 1;
	cfg.topology = chain_topology(3);
	const Scene scene = generate_scene(cfg, 12);
	NoiseConfig noise;
	noise.pixel_sigma = 2.0;
	const RenderedDetections det =
		render_detections(scene.truth, scene.cameras, cfg.topology, noise, 13);
	GraphConfig gc;
	gc.w_parsing = 1.5;
	gc.w_matching = 0.75;
	const Graph4D g = build_graph(det.frames[0], {}, scene.cameras, gc, cfg.topology);
	REQUIRE(!g.edges.empty());

	std::vector<std::uint8_t> none(g.edges.size(), 0);
	CHECK(objective(none, g, gc) == 0.0);

	std::mt19937_64 rng(14);
	std::vector<std::uint8_t> sel(g.edges.size(), 0);
	double manual = 0.0;
	for (size_t e = 0; e < g.edges.size(); e++)
		if (rng() % 2) {
			sel[e] = 1;
			const double w = g.edges[e].type == EdgeType::Parsing ? gc.w_parsing :
				g.edges[e].type == EdgeType::Matching ? gc.w_matching : gc.w_tracking;
			manual += w * g.edges[e].weight;
		}
	CHECK(objective(sel, g, gc) == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("check_feasible flags shared nodes") {
	SceneConfig cfg;
	cfg.person_count = 2;
	cfg.view_count = 2;
	cfg.frame_count = 1;
	cfg.topology = chain_topology(3);
	const Scene scene = generate_scene(cfg, 15);
	NoiseConfig noise;
	const RenderedDetections det =
		render_detections(scene.truth, scene.cameras, cfg.topology, noise, 16);
	const Graph4D g = build_graph(det.frames[0], {}, scene.cameras, {}, cfg.topology);

	std::vector<std::uint8_t> sel(g.edges.size(), 0);
	CHECK(check_feasible(sel, g).feasible);

	// Two parsing edges of one limb sharing the joint_i candidate.
	for (size_t a = 0; a < g.edges.size(); a++)
		for (size_t b = a + 1; b < g.edges.size(); b++) {
			const Edge& ea = g.edges[a];
			const Edge& eb = g.edges[b];
			if (ea.type != EdgeType::Parsing || eb.type != EdgeType::Parsing)
				continue;
			if (ea.group == eb.group && ea.view_a == eb.view_a && ea.m == eb.m &&
				ea.n != eb.n) {
				sel[a] = sel[b] = 1;
				const FeasibilityReport rep = check_feasible(sel, g);
				CHECK(!rep.feasible);
				CHECK(!rep.violations.empty());
				return;
			}
		}
	FAIL("no conflicting parsing edge pair found in test graph");
}

TEST_CASE("graph config validation") {
	GraphConfig gc;
	CHECK_NOTHROW(gc.validate());
	gc.epipolar_norm = 0.0;
	CHECK_THROWS_AS(gc.validate(), ConfigError);
	gc = {};
	gc.prune_epsilon = 1.0;
	CHECK_THROWS_AS(gc.validate(), ConfigError);
	gc = {};
	gc.w_matching = -0.5;
	CHECK_THROWS_AS(gc.validate(), ConfigError);
}
