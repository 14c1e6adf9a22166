#include "assoc4d/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

namespace assoc4d {

using nlohmann::json;

void SceneConfig::validate() const {
	if (person_count < 1 || view_count < 1 || frame_count < 1)
		throw ConfigError("scene config: counts must be positive");
	if (ring_radius <= 0.0 || person_spacing <= 0.0 || gait_period <= 0.0)
		throw ConfigError("scene config: dimensions must be positive");
	if (image_width <= 0 || image_height <= 0 || focal <= 0.0)
		throw ConfigError("scene config: invalid camera parameters");
	topology.validate();
	// Start circle must fit inside the capture volume with wander margin.
	const double startRadius = person_count == 1 ? 0.0
		: person_spacing / (2.0 * std::sin(std::numbers::pi / person_count));
	if (startRadius + walk_amplitude > ring_radius - 1.0)
		throw ConfigError("scene config: person spacing infeasible for capture volume");
	// Bodies must not interpenetrate while wandering.
	if (person_count > 1 && !crossing_paths && person_spacing < 2.0 * walk_amplitude + 0.5)
		throw ConfigError("scene config: walk amplitude too large for person spacing");
}

void NoiseConfig::validate() const {
	if (miss_prob < 0.0 || miss_prob > 1.0)
		throw ConfigError("noise config: miss probability out of [0,1]");
	if (pixel_sigma < 0.0 || clutter_rate < 0.0 || occlusion_radius < 0.0)
		throw ConfigError("noise config: negative noise parameter");
}

namespace {

// Humanlike rest directions and lengths for the default 19-joint tree;
// anything else gets deterministic pseudo-directions.
struct LimbShape {
	Eigen::Vector3d dir;
	double length;
};

std::vector<LimbShape> limb_shapes(const SkeletonTopology& topo) {
	std::vector<LimbShape> shapes;
	if (topo.joint_count == 19 && topo.limb_count() == 18) {
		const double d[18][4] = {
			{ 0, 0, 1, 0.50 }, { 0, 0, 1, 0.25 },
			{ 0, -1, 0, 0.20 }, { 0, -0.3, -1, 0.30 }, { 0, -0.2, -1, 0.27 },
			{ 0, 1, 0, 0.20 }, { 0, 0.3, -1, 0.30 }, { 0, 0.2, -1, 0.27 },
			{ 0, -1, 0, 0.12 }, { 0, 0, -1, 0.42 }, { 0, 0, -1, 0.42 },
			{ 0, 1, 0, 0.12 }, { 0, 0, -1, 0.42 }, { 0, 0, -1, 0.42 },
			{ 0.7, -0.3, 0.3, 0.10 }, { 0.7, 0.3, 0.3, 0.10 },
			{ -0.3, -1, 0, 0.10 }, { -0.3, 1, 0, 0.10 } };
		for (int l = 0; l < 18; l++)
			shapes.push_back({ Eigen::Vector3d(d[l][0], d[l][1], d[l][2]).normalized(), d[l][3] });
	} else {
		for (int l = 0; l < topo.limb_count(); l++) {
			const Eigen::Vector3d v(std::sin(1.7 * l + 0.3), std::cos(2.3 * l + 1.1),
				std::sin(0.9 * l + 2.0) - 0.4);
			shapes.push_back({ v.normalized(), 0.3 });
		}
	}
	return shapes;
}

struct PersonMotion {
	Eigen::Vector2d start, end;        // crossing mode
	double wanderPeriod1, wanderPeriod2, wanderPhase1, wanderPhase2;
	std::vector<Eigen::Vector3d> swingAxis;  // per limb
	std::vector<double> swingAmp, swingPhase;
};

Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle) {
	return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

double segment_segment_distance(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
	const Eigen::Vector3d& q0, const Eigen::Vector3d& q1) {
	const Eigen::Vector3d d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
	const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
	double s = 0.0, t = 0.0;
	if (a <= 1e-12 && e <= 1e-12)
		return r.norm();
	if (a <= 1e-12) {
		t = std::clamp(f / e, 0.0, 1.0);
	} else {
		const double c = d1.dot(r);
		if (e <= 1e-12) {
			s = std::clamp(-c / a, 0.0, 1.0);
		} else {
			const double b = d1.dot(d2);
			const double denom = a * e - b * b;
			s = denom > 1e-12 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
			t = (b * s + f) / e;
			if (t < 0.0) {
				t = 0.0;
				s = std::clamp(-c / a, 0.0, 1.0);
			} else if (t > 1.0) {
				t = 1.0;
				s = std::clamp((b - c) / a, 0.0, 1.0);
			}
		}
	}
	return (p0 + s * d1 - (q0 + t * d2)).norm();
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
	cfg.validate();
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> uni(0.0, 1.0);

	Scene scene;

	// Camera ring looking at the capture center.
	const Eigen::Vector3d target(0.0, 0.0, 1.0);
	const Eigen::Vector3d up(0.0, 0.0, 1.0);
	for (int c = 0; c < cfg.view_count; c++) {
		const double angle = 2.0 * std::numbers::pi * c / cfg.view_count;
		const Eigen::Vector3d pos(cfg.ring_radius * std::cos(angle),
			cfg.ring_radius * std::sin(angle), cfg.ring_height);
		const Eigen::Vector3d forward = (target - pos).normalized();
		const Eigen::Vector3d right = forward.cross(up).normalized();
		const Eigen::Vector3d down = forward.cross(right);
		Eigen::Matrix3d R;
		R.row(0) = right;
		R.row(1) = down;
		R.row(2) = forward;
		Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
		K(0, 0) = K(1, 1) = cfg.focal;
		K(0, 2) = cfg.image_width / 2.0;
		K(1, 2) = cfg.image_height / 2.0;
		scene.cameras.emplace_back(c, K, R, -R * pos, cfg.image_width, cfg.image_height);
	}

	const std::vector<LimbShape> shapes = limb_shapes(cfg.topology);
	const int J = cfg.topology.joint_count;
	const int L = cfg.topology.limb_count();

	// Parent orientation: BFS from root so each limb hangs off a placed joint.
	std::vector<std::pair<int, int>> orderedLimbs;  // (limb, parent joint)
	{
		std::vector<char> placed(J, 0);
		placed[cfg.topology.root] = 1;
		bool progress = true;
		while (progress) {
			progress = false;
			for (int l = 0; l < L; l++) {
				const auto& [a, b] = cfg.topology.limbs[l];
				if (placed[a] && !placed[b]) {
					orderedLimbs.emplace_back(l, a);
					placed[b] = 1;
					progress = true;
				} else if (placed[b] && !placed[a]) {
					orderedLimbs.emplace_back(l, b);
					placed[a] = 1;
					progress = true;
				}
			}
		}
	}

	const double startRadius = cfg.person_count == 1 ? 0.0
		: cfg.person_spacing / (2.0 * std::sin(std::numbers::pi / cfg.person_count));
	std::vector<PersonMotion> motions;
	for (int p = 0; p < cfg.person_count; p++) {
		PersonMotion m;
		const double angle = 2.0 * std::numbers::pi * p / cfg.person_count;
		m.start = startRadius * Eigen::Vector2d(std::cos(angle), std::sin(angle));
		// Crossing mode: walk to the far side, slightly offset so paths pass close.
		const Eigen::Vector2d perp(-std::sin(angle), std::cos(angle));
		m.end = -m.start + 0.3 * (p + 1) * perp;
		m.wanderPeriod1 = cfg.gait_period * (2.0 + 2.0 * uni(rng));
		m.wanderPeriod2 = cfg.gait_period * (2.0 + 2.0 * uni(rng));
		m.wanderPhase1 = 2.0 * std::numbers::pi * uni(rng);
		m.wanderPhase2 = 2.0 * std::numbers::pi * uni(rng);
		for (int l = 0; l < L; l++) {
			const Eigen::Vector3d axis(uni(rng) - 0.5, uni(rng) - 0.5, uni(rng) - 0.5);
			m.swingAxis.push_back(axis.norm() > 1e-9 ? axis.normalized() : Eigen::Vector3d::UnitX());
			m.swingAmp.push_back(0.1 + 0.3 * uni(rng));
			m.swingPhase.push_back(2.0 * std::numbers::pi * uni(rng));
		}
		motions.push_back(std::move(m));
	}

	scene.truth.person_ids.resize(cfg.person_count);
	for (int p = 0; p < cfg.person_count; p++)
		scene.truth.person_ids[p] = p;
	scene.truth.joints.assign(cfg.frame_count,
		std::vector<std::vector<Eigen::Vector3d>>(cfg.person_count,
			std::vector<Eigen::Vector3d>(J)));

	for (int t = 0; t < cfg.frame_count; t++) {
		for (int p = 0; p < cfg.person_count; p++) {
			const PersonMotion& m = motions[p];
			Eigen::Vector2d rootXY;
			double yaw;
			if (cfg.crossing_paths) {
				const double s = cfg.frame_count > 1
					? static_cast<double>(t) / (cfg.frame_count - 1) : 0.0;
				const double sm = s * s * (3.0 - 2.0 * s);  // smoothstep
				rootXY = (1.0 - sm) * m.start + sm * m.end;
				const Eigen::Vector2d dir = m.end - m.start;
				yaw = std::atan2(dir.y(), dir.x());
			} else {
				const Eigen::Vector2d wander(
					std::sin(2.0 * std::numbers::pi * t / m.wanderPeriod1 + m.wanderPhase1),
					std::sin(2.0 * std::numbers::pi * t / m.wanderPeriod2 + m.wanderPhase2));
				rootXY = m.start + cfg.walk_amplitude * wander / std::numbers::sqrt2;
				yaw = m.wanderPhase1 + 0.5 * std::sin(2.0 * std::numbers::pi * t / m.wanderPeriod1);
			}

			auto& joints = scene.truth.joints[t][p];
			joints[cfg.topology.root] = Eigen::Vector3d(rootXY.x(), rootXY.y(), 1.0);
			const Eigen::Matrix3d Ryaw = axis_angle(Eigen::Vector3d::UnitZ(), yaw);
			for (const auto& [l, parent] : orderedLimbs) {
				const auto& [a, b] = cfg.topology.limbs[l];
				const int child = parent == a ? b : a;
				const double swing = m.swingAmp[l] *
					std::sin(2.0 * std::numbers::pi * t / cfg.gait_period + m.swingPhase[l]);
				const Eigen::Vector3d dir = Ryaw * axis_angle(m.swingAxis[l], swing) * shapes[l].dir;
				joints[child] = joints[parent] + shapes[l].length * dir;
			}
		}
	}
	return scene;
}

RenderedDetections render_detections(const GroundTruth& truth, const std::vector<Camera>& cameras,
	const SkeletonTopology& topology, const NoiseConfig& noise, std::uint64_t seed) {
	noise.validate();
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> uni(0.0, 1.0);
	std::normal_distribution<double> gauss(0.0, 1.0);
	const auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };

	const int F = static_cast<int>(truth.joints.size());
	const int V = static_cast<int>(cameras.size());
	const int J = topology.joint_count;
	const int torsoA = topology.root;
	const int torsoB = topology.limbs.empty() ? topology.root : topology.limbs.front().second;

	RenderedDetections out;
	out.frames.resize(F);
	out.index_map.resize(F);

	for (int f = 0; f < F; f++) {
		const auto& persons = truth.joints[f];
		const int P = static_cast<int>(persons.size());
		DetectionFrame& frame = out.frames[f];
		frame.frame_index = f;
		frame.views.resize(V);
		out.index_map[f].assign(V, std::vector<std::vector<int>>(J, std::vector<int>(P, -1)));

		for (int v = 0; v < V; v++) {
			const Camera& cam = cameras[v];
			ViewDetections& view = frame.views[v];
			view.camera_id = cam.id();
			view.joints.resize(J);

			for (int j = 0; j < J; j++) {
				// True candidates first, then clutter, then a deterministic shuffle.
				struct Pending {
					Pixel pos;
					double conf;
					int person;  // -1 = clutter
				};
				std::vector<Pending> pending;
				for (int p = 0; p < P; p++) {
					Pixel pix;
					try {
						pix = project(cam, persons[p][j]);
					} catch (const GeometryError&) {
						continue;
					}
					if (pix.u < 0 || pix.u >= cam.width() || pix.v < 0 || pix.v >= cam.height())
						continue;
					if (noise.occlusion) {
						bool blocked = false;
						for (int q = 0; q < P && !blocked; q++)
							if (q != p && segment_segment_distance(cam.center(), persons[p][j],
								persons[q][torsoA], persons[q][torsoB]) < noise.occlusion_radius)
								blocked = true;
						if (blocked)
							continue;
					}
					if (uni(rng) < noise.miss_prob)
						continue;
					pix.u += noise.pixel_sigma * gauss(rng);
					pix.v += noise.pixel_sigma * gauss(rng);
					pending.push_back({ pix, clamp01(0.9 + 0.05 * gauss(rng)), p });
				}
				std::poisson_distribution<int> poisson(noise.clutter_rate);
				const int clutterCount = noise.clutter_rate > 0.0 ? poisson(rng) : 0;
				for (int c = 0; c < clutterCount; c++) {
					// False candidates land near some person.
					const int p = static_cast<int>(uni(rng) * P) % std::max(P, 1);
					Pixel pix{ cam.width() / 2.0, cam.height() / 2.0 };
					try {
						pix = project(cam, persons[p][static_cast<int>(uni(rng) * J) % J]);
					} catch (const GeometryError&) {
					}
					pix.u = std::clamp(pix.u + 400.0 * (uni(rng) - 0.5), 0.0, cam.width() - 1.0);
					pix.v = std::clamp(pix.v + 400.0 * (uni(rng) - 0.5), 0.0, cam.height() - 1.0);
					pending.push_back({ pix, clamp01(0.5 + 0.15 * gauss(rng)), -1 });
				}

				std::vector<int> order(pending.size());
				for (size_t i = 0; i < order.size(); i++) order[i] = static_cast<int>(i);
				std::shuffle(order.begin(), order.end(), rng);
				for (size_t slot = 0; slot < order.size(); slot++) {
					const Pending& cand = pending[order[slot]];
					view.joints[j].push_back({ cand.pos, cand.conf });
					if (cand.person >= 0)
						out.index_map[f][v][j][cand.person] = static_cast<int>(slot);
				}
			}

			for (int l = 0; l < topology.limb_count(); l++) {
				const auto& [ji, jj] = topology.limbs[l];
				const int M = static_cast<int>(view.joints[ji].size());
				const int N = static_cast<int>(view.joints[jj].size());
				Eigen::MatrixXd paf(M, N);
				for (int m = 0; m < M; m++)
					for (int n = 0; n < N; n++) {
						bool truePair = false;
						for (int p = 0; p < P; p++)
							if (out.index_map[f][v][ji][p] == m && out.index_map[f][v][jj][p] == n) {
								truePair = true;
								break;
							}
						const double mean = truePair ? noise.paf_true_mean : noise.paf_false_mean;
						const double sigma = truePair ? noise.paf_true_sigma : noise.paf_false_sigma;
						paf(m, n) = clamp01(mean + sigma * gauss(rng));
					}
				view.pafs.push_back(std::move(paf));
			}
		}
	}
	return out;
}

std::vector<std::vector<Skeleton3D>> truth_skeletons(const GroundTruth& truth, int joint_count) {
	std::vector<std::vector<Skeleton3D>> out(truth.joints.size());
	for (size_t f = 0; f < truth.joints.size(); f++)
		for (size_t p = 0; p < truth.joints[f].size(); p++) {
			Skeleton3D s;
			s.person_id = truth.person_ids[p];
			s.frame_index = static_cast<int>(f);
			s.joints.resize(joint_count);
			s.confidences.assign(joint_count, 1.0);
			s.inferred.assign(joint_count, 0);
			for (int j = 0; j < joint_count; j++)
				s.joints[j] = truth.joints[f][p][j];
			out[f].push_back(std::move(s));
		}
	return out;
}

void save_ground_truth(const std::string& path, const GroundTruth& truth,
	const RenderedDetections* rendered) {
	json doc;
	doc["person_ids"] = truth.person_ids;
	json frames = json::array();
	for (size_t f = 0; f < truth.joints.size(); f++) {
		json jf;
		jf["t"] = f;
		json persons = json::array();
		for (const auto& joints : truth.joints[f]) {
			json jp = json::array();
			for (const Eigen::Vector3d& x : joints)
				jp.push_back({ x.x(), x.y(), x.z() });
			persons.push_back(std::move(jp));
		}
		jf["persons"] = std::move(persons);
		if (rendered != nullptr)
			jf["index_map"] = rendered->index_map[f];
		frames.push_back(std::move(jf));
	}
	doc["frames"] = std::move(frames);
	std::ofstream out(path);
	if (!out)
		throw ConfigError("cannot open " + path + " for writing");
	out << doc.dump(1, '\t') << '\n';
}

GroundTruth load_ground_truth(const std::string& path) {
	std::ifstream in(path);
	if (!in)
		throw ConfigError("cannot open " + path);
	try {
		const json doc = json::parse(in);
		GroundTruth truth;
		truth.person_ids = doc.at("person_ids").get<std::vector<int>>();
		for (const json& jf : doc.at("frames")) {
			std::vector<std::vector<Eigen::Vector3d>> persons;
			for (const json& jp : jf.at("persons")) {
				std::vector<Eigen::Vector3d> joints;
				for (const json& jx : jp)
					joints.emplace_back(jx.at(0).get<double>(), jx.at(1).get<double>(),
						jx.at(2).get<double>());
				persons.push_back(std::move(joints));
			}
			truth.joints.push_back(std::move(persons));
		}
		return truth;
	} catch (const json::exception& e) {
		throw ParseError(path + ": " + e.what());
	}
}

}  // namespace assoc4d
