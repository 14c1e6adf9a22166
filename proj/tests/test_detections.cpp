#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "assoc4d/detections.hpp"
#include "assoc4d/synth.hpp"

using namespace assoc4d;

namespace {

std::string tmp_path(const std::string& name) {
	return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("default topology is a valid tree") {
	const SkeletonTopology t = default_topology();
	CHECK(t.joint_count == 19);
	CHECK(t.limb_count() == t.joint_count - 1);
	CHECK_NOTHROW(t.validate());
	for (const auto& [l, r] : t.symmetric_limbs) {
		CHECK(l >= 0);
		CHECK(l < t.limb_count());
		CHECK(r >= 0);
		CHECK(r < t.limb_count());
		CHECK(l != r);
	}
}

TEST_CASE("chain topology") {
	const SkeletonTopology t = chain_topology(3);
	CHECK(t.joint_count == 3);
	CHECK(t.limb_count() == 2);
	CHECK_NOTHROW(t.validate());
	CHECK(t.limbs[0] == std::pair<int, int>{ 0, 1 });
	CHECK(t.limbs[1] == std::pair<int, int>{ 1, 2 });
}

TEST_CASE("topology validation rejects broken trees") {
	SkeletonTopology cyc;
	cyc.joint_count = 3;
	cyc.limbs = { { 0, 1 }, { 1, 2 }, { 2, 0 } };
	CHECK_THROWS_AS(cyc.validate(), ConfigError);

	SkeletonTopology disconnected;
	disconnected.joint_count = 4;
	disconnected.limbs = { { 0, 1 }, { 2, 3 }, { 3, 2 } };
	CHECK_THROWS_AS(disconnected.validate(), ConfigError);

	SkeletonTopology missing;
	missing.joint_count = 4;
	missing.limbs = { { 0, 1 }, { 1, 2 } };
	CHECK_THROWS_AS(missing.validate(), ConfigError);

	SkeletonTopology outOfRange;
	outOfRange.joint_count = 3;
	outOfRange.limbs = { { 0, 1 }, { 1, 5 } };
	CHECK_THROWS_AS(outOfRange.validate(), ConfigError);
}

TEST_CASE("random non-tree edge lists are rejected") {
	std::mt19937_64 rng(3);
	int rejected = 0;
	for (int trial = 0; trial < 50; trial++) {
		SkeletonTopology t;
		t.joint_count = 5;
		std::uniform_int_distribution<int> joint(0, 4);
		// 5 edges over 5 joints can never be a tree (needs exactly 4).
		for (int e = 0; e < 5; e++)
			t.limbs.push_back({ joint(rng), joint(rng) });
		try {
			t.validate();
		} catch (const ConfigError&) {
			rejected++;
		}
	}
	CHECK(rejected == 50);
}

TEST_CASE("topology hash is stable and shape-sensitive") {
	CHECK(default_topology().hash() == default_topology().hash());
	CHECK(default_topology().hash() != chain_topology(19).hash());
	CHECK(chain_topology(3).hash() != chain_topology(4).hash());
}

TEST_CASE("detection frames round-trip through JSON and binary") {
	SceneConfig cfg;
	cfg.person_count = 2;
	cfg.view_count = 3;
	cfg.frame_count = 4;
	const Scene scene = generate_scene(cfg, 42);
	NoiseConfig noise;
	noise.pixel_sigma = 1.5;
	noise.clutter_rate = 0.5;
	const RenderedDetections det =
		render_detections(scene.truth, scene.cameras, cfg.topology, noise, 43);
	std::vector<int> camIds;
	for (const Camera& cam : scene.cameras)
		camIds.push_back(cam.id());

	for (const char* name : { "det_rt.json", "det_rt.msgpack" }) {
		const std::string path = tmp_path(name);
		save_frames(path, det.frames, cfg.topology, camIds);
		const std::vector<DetectionFrame> loaded = load_frames(path, cfg.topology);
		REQUIRE(loaded.size() == det.frames.size());
		for (size_t f = 0; f < loaded.size(); f++) {
			CHECK(loaded[f].frame_index == det.frames[f].frame_index);
			REQUIRE(loaded[f].views.size() == det.frames[f].views.size());
			for (size_t v = 0; v < loaded[f].views.size(); v++) {
				const ViewDetections& a = loaded[f].views[v];
				const ViewDetections& b = det.frames[f].views[v];
				CHECK(a.camera_id == b.camera_id);
				REQUIRE(a.joints.size() == b.joints.size());
				for (size_t j = 0; j < a.joints.size(); j++) {
					REQUIRE(a.joints[j].size() == b.joints[j].size());
					for (size_t c = 0; c < a.joints[j].size(); c++) {
						CHECK(a.joints[j][c].position.u ==
							doctest::Approx(b.joints[j][c].position.u).epsilon(1e-12));
						CHECK(a.joints[j][c].confidence ==
							doctest::Approx(b.joints[j][c].confidence).epsilon(1e-12));
					}
				}
				for (size_t l = 0; l < a.pafs.size(); l++)
					CHECK((a.pafs[l] - b.pafs[l]).cwiseAbs().maxCoeff() < 1e-12);
			}
		}
	}
}

TEST_CASE("empty frame list round-trips") {
	const std::string path = tmp_path("det_empty.json");
	save_frames(path, {}, default_topology(), { 0, 1 });
	CHECK(load_frames(path, default_topology()).empty());
}

TEST_CASE("load_frames rejects bad files") {
	const SkeletonTopology topo = chain_topology(3);
	SUBCASE("missing file") {
		CHECK_THROWS_AS(load_frames(tmp_path("no_such_file.json"), topo), ConfigError);
	}
	SUBCASE("malformed document") {
		const std::string path = tmp_path("det_bad.json");
		std::ofstream(path) << "{ not json";
		CHECK_THROWS_AS(load_frames(path, topo), ParseError);
	}
	SUBCASE("topology mismatch") {
		const std::string path = tmp_path("det_topo.json");
		save_frames(path, {}, chain_topology(4), { 0 });
		CHECK_THROWS_AS(load_frames(path, topo), ParseError);
	}
}

TEST_CASE("frame validation rejects inconsistent data") {
	const SkeletonTopology topo = chain_topology(3);
	DetectionFrame frame;
	frame.views.resize(1);
	frame.views[0].camera_id = 0;
	frame.views[0].joints.resize(3);
	frame.views[0].joints[0].push_back({ { 1.0, 2.0 }, 0.9 });
	frame.views[0].pafs.resize(2);
	frame.views[0].pafs[0] = Eigen::MatrixXd::Zero(1, 0);
	frame.views[0].pafs[1] = Eigen::MatrixXd::Zero(0, 0);
	CHECK_NOTHROW(frame.validate(topo));

	SUBCASE("confidence out of range") {
		frame.views[0].joints[0][0].confidence = 1.5;
		CHECK_THROWS_AS(frame.validate(topo), ParseError);
	}
	SUBCASE("paf dimension mismatch") {
		frame.views[0].pafs[0] = Eigen::MatrixXd::Zero(2, 2);
		CHECK_THROWS_AS(frame.validate(topo), ParseError);
	}
	SUBCASE("paf score out of range") {
		frame.views[0].joints[1].push_back({ { 3.0, 4.0 }, 0.5 });
		frame.views[0].pafs[0] = Eigen::MatrixXd::Constant(1, 1, 1.2);
		CHECK_THROWS_AS(frame.validate(topo), ParseError);
	}
}

TEST_CASE("calibration round-trip") {
	SceneConfig cfg;
	cfg.view_count = 4;
	cfg.frame_count = 1;
	const Scene scene = generate_scene(cfg, 7);
	const std::string path = tmp_path("calib_rt.json");
	save_calibration(path, scene.cameras);
	const std::vector<Camera> loaded = load_calibration(path);
	REQUIRE(loaded.size() == scene.cameras.size());
	for (size_t i = 0; i < loaded.size(); i++) {
		CHECK(loaded[i].id() == scene.cameras[i].id());
		CHECK((loaded[i].intrinsic() - scene.cameras[i].intrinsic()).norm() < 1e-9);
		CHECK((loaded[i].rotation() - scene.cameras[i].rotation()).norm() < 1e-9);
		CHECK((loaded[i].translation() - scene.cameras[i].translation()).norm() < 1e-9);
		CHECK(loaded[i].width() == scene.cameras[i].width());
	}
}
