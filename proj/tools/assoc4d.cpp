#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "assoc4d/eval.hpp"
#include "assoc4d/pipeline.hpp"
#include "assoc4d/synth.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitParse = 3;
constexpr int kExitRuntime = 4;

using namespace assoc4d;

void require_file(const std::string& path, const char* what) {
	if (!std::filesystem::exists(path))
		throw ConfigError(std::string(what) + " not found: " + path);
}

void add_solver_flags(CLI::App* cmd, SolverConfig& cfg) {
	cmd->add_option("--epipolar-norm", cfg.graph.epipolar_norm, "epipolar normalization Z, meters");
	cmd->add_option("--tracking-norm", cfg.graph.tracking_norm, "tracking normalization T, meters");
	cmd->add_option("--w-parsing", cfg.graph.w_parsing, "parsing edge weight");
	cmd->add_option("--w-matching", cfg.graph.w_matching, "matching edge weight");
	cmd->add_option("--w-tracking", cfg.graph.w_tracking, "tracking edge weight");
	cmd->add_option("--w-view", cfg.graph.w_view, "clique size penalty weight");
	cmd->add_option("--prune-epsilon", cfg.graph.prune_epsilon, "minimum edge weight kept");
	cmd->add_option("--beam-width", cfg.beam_width, "clique search beam width");
	cmd->add_option("--score-floor", cfg.score_floor, "greedy extraction stop margin");
	cmd->add_option("--min-views", cfg.min_person_views, "evidence filter: views per joint");
	cmd->add_option("--min-joint-fraction", cfg.min_person_joint_fraction,
		"evidence filter: fraction of joints");
	cmd->add_option("--threads", cfg.threads, "worker threads for per-limb parsing");
	cmd->add_flag("--attach-free-joints", cfg.attach_free_joints,
		"claim leftover candidates with surviving edges for assembled persons");
}

int cmd_synth(const SceneConfig& scene, const NoiseConfig& noise, std::uint64_t seed,
	const std::string& outDir) {
	std::filesystem::create_directories(outDir);
	const Scene s = generate_scene(scene, seed);
	const RenderedDetections det = render_detections(s.truth, s.cameras, scene.topology, noise,
		seed + 1);
	std::vector<int> cameraIds;
	for (const Camera& cam : s.cameras)
		cameraIds.push_back(cam.id());
	save_calibration(outDir + "/calibration.json", s.cameras);
	save_frames(outDir + "/detections.json", det.frames, scene.topology, cameraIds);
	save_ground_truth(outDir + "/ground_truth.json", s.truth, &det);
	std::cout << "wrote " << outDir << "/{calibration,detections,ground_truth}.json ("
		<< scene.person_count << " persons, " << scene.view_count << " views, "
		<< scene.frame_count << " frames)\n";
	return 0;
}

int cmd_solve(const std::string& calibPath, const std::string& detPath, const std::string& outPath,
	const RunConfig& run) {
	require_file(calibPath, "calibration file");
	require_file(detPath, "detections file");
	const SkeletonTopology topology = default_topology();
	const std::vector<Camera> cameras = load_calibration(calibPath);
	const std::vector<DetectionFrame> frames = load_frames(detPath, topology);
	RunStats stats;
	const SkeletonSequence seq = run_sequence(frames, cameras, topology, run, &stats);
	save_skeletons(outPath, seq);
	std::cout << "mode " << mode_name(run.mode) << ": " << frames.size()
		<< " frames, median association " << stats.median_association_ms() << " ms\n";
	return 0;
}

int cmd_eval(const std::string& predPath, const std::string& gtPath, double alpha,
	double threshold) {
	require_file(predPath, "prediction file");
	require_file(gtPath, "ground truth file");
	const SkeletonTopology topology = default_topology();
	const SkeletonSequence pred = load_skeletons(predPath);
	const GroundTruth truth = load_ground_truth(gtPath);
	const SkeletonSequence gt = truth_skeletons(truth, topology.joint_count);
	if (pred.size() != gt.size())
		throw ConfigError("prediction and ground truth frame counts differ");
	const MatchReport report = evaluate(pred, gt, topology, alpha, threshold);
	std::cout << "metric      value\n"
		<< "pcp         " << report.pcp.average << "\n"
		<< "precision   " << report.pr.precision << "\n"
		<< "recall      " << report.pr.recall << "\n"
		<< "id_switches " << report.id_switch_count << "\n";
	for (size_t a = 0; a < report.pcp.actor_ids.size(); a++)
		std::cout << "pcp[actor " << report.pcp.actor_ids[a] << "] "
			<< report.pcp.per_actor[a] << "\n";
	return 0;
}

int cmd_oracle(const std::string& calibPath, const std::string& detPath, std::uint64_t cap,
	const SolverConfig& cfg) {
	require_file(calibPath, "calibration file");
	require_file(detPath, "detections file");
	const SkeletonTopology topology = default_topology();
	const std::vector<Camera> cameras = load_calibration(calibPath);
	const std::vector<DetectionFrame> frames = load_frames(detPath, topology);
	std::cout << "frame greedy optimal ratio\n";
	for (const DetectionFrame& frame : frames) {
		const SolveResult result = solve_frame(frame, {}, cameras, cfg, topology);
		const double greedy = objective(assembly_selection(result.assembly, result.graph),
			result.graph, cfg.graph);
		try {
			const OracleResult oracle = brute_force_solve(result.graph, cfg.graph, cap);
			const double ratio = oracle.objective > 0.0 ? greedy / oracle.objective : 1.0;
			std::cout << frame.frame_index << " " << greedy << " " << oracle.objective << " "
				<< ratio << "\n";
		} catch (const ConfigError& e) {
			std::cout << frame.frame_index << " skipped: " << e.what() << "\n";
		}
	}
	return 0;
}

int cmd_bench(const std::string& calibPath, const std::string& detPath, const RunConfig& run) {
	require_file(calibPath, "calibration file");
	require_file(detPath, "detections file");
	const SkeletonTopology topology = default_topology();
	const std::vector<Camera> cameras = load_calibration(calibPath);
	const std::vector<DetectionFrame> frames = load_frames(detPath, topology);
	RunStats stats;
	run_sequence(frames, cameras, topology, run, &stats);
	std::vector<double> sorted = stats.association_ms;
	std::sort(sorted.begin(), sorted.end());
	const auto pct = [&](double p) {
		return sorted.empty() ? 0.0 : sorted[static_cast<size_t>(p * (sorted.size() - 1))];
	};
	std::cout << "frames " << frames.size() << "\n"
		<< "association_ms median " << stats.median_association_ms()
		<< " p90 " << pct(0.9) << " max " << (sorted.empty() ? 0.0 : sorted.back()) << "\n";
	return 0;
}

}  // namespace

int main(int argc, char** argv) {
	CLI::App app{ "Multi-view multi-person skeleton association" };
	app.require_subcommand(1);
	app.set_config("--config", "", "read options from a TOML/INI file");

	// synth
	SceneConfig scene;
	NoiseConfig noise;
	std::uint64_t seed = 1;
	std::string outDir = "scene";
	CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene");
	synth->add_option("--persons", scene.person_count, "number of persons");
	synth->add_option("--views", scene.view_count, "number of cameras");
	synth->add_option("--frames", scene.frame_count, "number of frames");
	synth->add_option("--seed", seed, "random seed");
	synth->add_option("--sigma", noise.pixel_sigma, "detection noise, pixels");
	synth->add_option("--miss", noise.miss_prob, "per-detection miss probability");
	synth->add_option("--clutter", noise.clutter_rate, "false candidates per joint type per view");
	synth->add_flag("--occlusion", noise.occlusion, "enable torso occlusion");
	synth->add_option("--occlusion-radius", noise.occlusion_radius, "torso blocking radius, meters");
	synth->add_option("--spacing", scene.person_spacing, "minimum start separation, meters");
	synth->add_flag("--crossing", scene.crossing_paths, "straight crossing trajectories");
	synth->add_option("--out-dir", outDir, "output directory");

	// solve / bench share the run config
	RunConfig run;
	std::string calibPath, detPath, outPath = "skeletons.json", modeName = "full4d";
	CLI::App* solve = app.add_subcommand("solve", "associate and reconstruct skeletons");
	solve->add_option("--calibration", calibPath, "calibration JSON")->required();
	solve->add_option("--detections", detPath, "detections JSON/msgpack")->required();
	solve->add_option("--out", outPath, "output skeleton JSON");
	solve->add_option("--mode", modeName, "full4d | no-tracking | two-step");
	add_solver_flags(solve, run.solver);
	solve->add_option("--w-2d", run.fit.w_2d, "fit: reprojection weight");
	solve->add_option("--w-shape", run.fit.w_shape, "fit: shape prior weight");
	solve->add_option("--w-temp", run.fit.w_temp, "fit: temporal smoothing weight");
	solve->add_option("--fit-iterations", run.fit.max_iterations, "fit: max iterations");

	// eval
	std::string predPath, gtPath;
	double alpha = 0.5, threshold = 0.2;
	CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
	eval->add_option("--pred", predPath, "predicted skeleton JSON")->required();
	eval->add_option("--gt", gtPath, "ground truth JSON")->required();
	eval->add_option("--pcp-alpha", alpha, "PCP limb length fraction");
	eval->add_option("--threshold", threshold, "joint distance threshold, meters");

	// oracle
	SolverConfig oracleCfg;
	std::uint64_t cap = 10'000'000;
	std::string oCalib, oDet;
	CLI::App* oracle = app.add_subcommand("oracle", "exact objective on small instances");
	oracle->add_option("--calibration", oCalib, "calibration JSON")->required();
	oracle->add_option("--detections", oDet, "detections JSON/msgpack")->required();
	oracle->add_option("--cap", cap, "enumeration size cap");
	add_solver_flags(oracle, oracleCfg);

	// bench
	std::string bCalib, bDet;
	CLI::App* bench = app.add_subcommand("bench", "time the association step");
	bench->add_option("--calibration", bCalib, "calibration JSON")->required();
	bench->add_option("--detections", bDet, "detections JSON/msgpack")->required();
	bench->add_option("--mode", modeName, "full4d | no-tracking | two-step");
	add_solver_flags(bench, run.solver);

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		return app.exit(e) == 0 ? 0 : kExitConfig;
	}

	try {
		if (synth->parsed())
			return cmd_synth(scene, noise, seed, outDir);
		run.mode = parse_mode(modeName);
		if (solve->parsed())
			return cmd_solve(calibPath, detPath, outPath, run);
		if (eval->parsed())
			return cmd_eval(predPath, gtPath, alpha, threshold);
		if (oracle->parsed())
			return cmd_oracle(oCalib, oDet, cap, oracleCfg);
		if (bench->parsed())
			return cmd_bench(bCalib, bDet, run);
	} catch (const ConfigError& e) {
		std::cerr << "config error: " << e.what() << "\n";
		return kExitConfig;
	} catch (const ParseError& e) {
		std::cerr << "parse error: " << e.what() << "\n";
		return kExitParse;
	} catch (const std::exception& e) {
		std::cerr << "error: " << e.what() << "\n";
		return kExitRuntime;
	}
	return 0;
}
