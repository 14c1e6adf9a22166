#include "assoc4d/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

namespace assoc4d {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

Mode parse_mode(const std::string& name) {
	if (name == "full4d")
		return Mode::Full4D;
	if (name == "no-tracking")
		return Mode::NoTracking;
	if (name == "two-step")
		return Mode::TwoStep;
	throw ConfigError("unknown mode '" + name + "' (full4d, no-tracking, two-step)");
}

std::string mode_name(Mode mode) {
	switch (mode) {
	case Mode::Full4D: return "full4d";
	case Mode::NoTracking: return "no-tracking";
	case Mode::TwoStep: return "two-step";
	}
	return "?";
}

double RunStats::median_association_ms() const {
	if (association_ms.empty())
		return 0.0;
	std::vector<double> v = association_ms;
	std::sort(v.begin(), v.end());
	const size_t n = v.size();
	return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

double elapsed_ms(Clock::time_point from) {
	return std::chrono::duration<double, std::milli>(Clock::now() - from).count();
}

std::vector<int> views_per_joint(const Assembly::Person& person) {
	std::vector<int> counts(person.joints.rows(), 0);
	for (int j = 0; j < person.joints.rows(); j++)
		for (int v = 0; v < person.joints.cols(); v++)
			if (person.joints(j, v) >= 0)
				counts[j]++;
	return counts;
}

PriorSkeletons make_prior(const std::vector<Skeleton3D>& skeletons) {
	PriorSkeletons prior;
	for (const Skeleton3D& s : skeletons) {
		PriorPerson p;
		p.id = s.person_id;
		p.joints = s.joints;
		prior.push_back(std::move(p));
	}
	return prior;
}

// --- two-step baseline -----------------------------------------------------

// One per-view person: joint type -> candidate index, -1 absent.
using ViewPerson = std::vector<int>;

std::vector<ViewPerson> parse_single_view(const ViewDetections& view,
	const SkeletonTopology& topology, double prune_epsilon) {
	const int J = topology.joint_count;
	// Groups of (joint, candidate) detections, merged along accepted PAF
	// edges when the joint slots stay unique within the group.
	std::vector<ViewPerson> persons;
	std::vector<std::vector<int>> owner(J);  // (joint, cand) -> person index
	for (int j = 0; j < J; j++)
		owner[j].assign(view.joints[j].size(), -1);

	struct LimbEdge { double paf; int limb, m, n; };
	std::vector<LimbEdge> edges;
	for (int l = 0; l < topology.limb_count(); l++) {
		const Eigen::MatrixXd& paf = view.pafs[l];
		for (int m = 0; m < paf.rows(); m++)
			for (int n = 0; n < paf.cols(); n++)
				if (paf(m, n) >= prune_epsilon)
					edges.push_back({ paf(m, n), l, m, n });
	}
	std::sort(edges.begin(), edges.end(), [](const LimbEdge& a, const LimbEdge& b) {
		if (a.paf != b.paf) return a.paf > b.paf;
		if (a.limb != b.limb) return a.limb < b.limb;
		if (a.m != b.m) return a.m < b.m;
		return a.n < b.n;
	});

	const auto ensure = [&](int joint, int cand) {
		if (owner[joint][cand] < 0) {
			persons.emplace_back(J, -1);
			persons.back()[joint] = cand;
			owner[joint][cand] = static_cast<int>(persons.size()) - 1;
		}
		return owner[joint][cand];
	};
	for (const LimbEdge& e : edges) {
		const auto& [ji, jj] = topology.limbs[e.limb];
		const int pa = ensure(ji, e.m);
		const int pb = ensure(jj, e.n);
		if (pa == pb)
			continue;
		bool conflict = false;
		for (int j = 0; j < J && !conflict; j++)
			conflict = persons[pa][j] >= 0 && persons[pb][j] >= 0;
		if (conflict)
			continue;
		for (int j = 0; j < J; j++)
			if (persons[pb][j] >= 0) {
				persons[pa][j] = persons[pb][j];
				owner[j][persons[pb][j]] = pa;
				persons[pb][j] = -1;
			}
	}
	std::vector<ViewPerson> alive;
	for (const ViewPerson& p : persons) {
		int joints = 0;
		for (int j = 0; j < J; j++)
			joints += p[j] >= 0;
		if (joints >= 2)
			alive.push_back(p);
	}
	return alive;
}

std::vector<Skeleton3D> two_step_frame(const DetectionFrame& frame,
	const std::vector<Camera>& cameras, const SkeletonTopology& topology,
	const SolverConfig& cfg) {
	const int V = static_cast<int>(frame.views.size());
	const int J = topology.joint_count;

	std::vector<std::vector<ViewPerson>> perView(V);
	for (int v = 0; v < V; v++)
		perView[v] = parse_single_view(frame.views[v], topology, cfg.graph.prune_epsilon);

	// Greedy cross-view clustering: each cluster keeps one person per view.
	struct Cluster {
		std::vector<int> member;  // per view, person index, -1 = none
	};
	std::vector<Cluster> clusters;
	const auto affinity = [&](const Cluster& c, int view, const ViewPerson& person) {
		double sum = 0.0;
		int common = 0;
		for (int u = 0; u < V; u++) {
			if (c.member[u] < 0 || u == view)
				continue;
			const ViewPerson& other = perView[u][c.member[u]];
			for (int j = 0; j < J; j++) {
				if (person[j] < 0 || other[j] < 0)
					continue;
				sum += matching_weight(cameras[view], frame.views[view].joints[j][person[j]].position,
					cameras[u], frame.views[u].joints[j][other[j]].position, cfg.graph.epipolar_norm);
				common++;
			}
		}
		return common > 0 ? sum / common : -1.0;
	};
	for (int v = 0; v < V; v++)
		for (size_t p = 0; p < perView[v].size(); p++) {
			int best = -1;
			double bestAff = 0.5;  // require decent average epipolar agreement
			for (size_t c = 0; c < clusters.size(); c++) {
				if (clusters[c].member[v] >= 0)
					continue;
				const double a = affinity(clusters[c], v, perView[v][p]);
				if (a > bestAff) {
					bestAff = a;
					best = static_cast<int>(c);
				}
			}
			if (best < 0) {
				clusters.push_back({ std::vector<int>(V, -1) });
				best = static_cast<int>(clusters.size()) - 1;
			}
			clusters[best].member[v] = static_cast<int>(p);
		}

	std::vector<Skeleton3D> out;
	int nextId = 0;
	for (const Cluster& c : clusters) {
		Assembly::Person person;
		person.joints = Eigen::MatrixXi::Constant(J, V, -1);
		int views = 0;
		for (int v = 0; v < V; v++)
			if (c.member[v] >= 0) {
				views++;
				for (int j = 0; j < J; j++)
					person.joints(j, v) = perView[v][c.member[v]][j];
			}
		if (views < cfg.min_person_views)
			continue;
		Skeleton3D skel = triangulate_person(person, frame, cameras, topology);
		int present = 0;
		for (const auto& x : skel.joints)
			present += x.has_value();
		if (present < cfg.min_person_joint_fraction * J)
			continue;
		skel.person_id = nextId++;
		out.push_back(std::move(skel));
	}
	return out;
}

}  // namespace

SkeletonSequence run_sequence(const std::vector<DetectionFrame>& frames,
	const std::vector<Camera>& cameras, const SkeletonTopology& topology, const RunConfig& cfg,
	RunStats* stats) {
	cfg.solver.validate();
	cfg.fit.validate();
	SkeletonSequence out;
	out.reserve(frames.size());

	PriorSkeletons prior;
	std::map<int, Skeleton3D> prevById;
	std::map<int, BoneLengthState> boneById;
	int nextId = 0;

	for (const DetectionFrame& frame : frames) {
		const auto t0 = Clock::now();
		std::vector<Skeleton3D> skeletons;

		if (cfg.mode == Mode::TwoStep) {
			skeletons = two_step_frame(frame, cameras, topology, cfg.solver);
			if (stats != nullptr)
				stats->association_ms.push_back(elapsed_ms(t0));
		} else {
			const bool tracked = cfg.mode == Mode::Full4D;
			static const PriorSkeletons kNoPrior;
			const PriorSkeletons& framePrior = tracked ? prior : kNoPrior;
			SolveResult result = solve_frame(frame, framePrior, cameras, cfg.solver, topology,
				tracked ? nextId : 0);
			if (stats != nullptr)
				stats->association_ms.push_back(result.diagnostics.graph_ms
					+ result.diagnostics.parse_ms + result.diagnostics.assemble_ms);

			for (const Assembly::Person& person : result.assembly.persons) {
				Skeleton3D tri = triangulate_person(person, frame, cameras, topology);
				tri.person_id = person.id;
				tri.frame_index = frame.frame_index;
				if (!tracked) {
					skeletons.push_back(std::move(tri));
					continue;
				}
				auto bonesIt = boneById.find(person.id);
				if (bonesIt == boneById.end())
					bonesIt = boneById.emplace(person.id,
						BoneLengthState::fresh(person.id, topology.limb_count())).first;
				const auto prevIt = prevById.find(person.id);
				const Skeleton3D* prev = prevIt != prevById.end() ? &prevIt->second : nullptr;
				Skeleton3D fitted = fit_parametric(tri, prev, bonesIt->second, person, frame,
					cameras, topology, cfg.fit);
				fitted.person_id = person.id;
				fitted.frame_index = frame.frame_index;
				update_bone_lengths(bonesIt->second, fitted, views_per_joint(person), topology,
					cfg.fit);
				nextId = std::max(nextId, person.id + 1);
				skeletons.push_back(std::move(fitted));
			}
		}

		std::sort(skeletons.begin(), skeletons.end(),
			[](const Skeleton3D& a, const Skeleton3D& b) { return a.person_id < b.person_id; });
		for (Skeleton3D& s : skeletons)
			s.frame_index = frame.frame_index;

		if (cfg.mode == Mode::Full4D) {
			prior = make_prior(skeletons);
			prevById.clear();
			for (const Skeleton3D& s : skeletons)
				prevById[s.person_id] = s;
		}
		if (stats != nullptr)
			stats->total_ms.push_back(elapsed_ms(t0));
		out.push_back(std::move(skeletons));
	}
	return out;
}

void save_skeletons(const std::string& path, const SkeletonSequence& seq) {
	json frames = json::array();
	for (const auto& persons : seq) {
		json jf;
		jf["t"] = persons.empty() ? -1 : persons.front().frame_index;
		json jpersons = json::array();
		for (const Skeleton3D& s : persons) {
			jf["t"] = s.frame_index;
			json jp;
			jp["id"] = s.person_id;
			json joints = json::array();
			for (const auto& x : s.joints)
				joints.push_back(x ? json::array({ x->x(), x->y(), x->z() }) : json());
			jp["joints"] = std::move(joints);
			jp["confidences"] = s.confidences;
			jp["inferred"] = s.inferred;
			jpersons.push_back(std::move(jp));
		}
		jf["persons"] = std::move(jpersons);
		frames.push_back(std::move(jf));
	}
	json doc;
	doc["version"] = 1;
	doc["frames"] = std::move(frames);
	std::ofstream out(path);
	if (!out)
		throw ConfigError("cannot open " + path + " for writing");
	out << doc.dump(1, '\t') << '\n';
}

SkeletonSequence load_skeletons(const std::string& path) {
	std::ifstream in(path);
	if (!in)
		throw ConfigError("cannot open " + path);
	try {
		const json doc = json::parse(in);
		SkeletonSequence seq;
		for (const json& jf : doc.at("frames")) {
			std::vector<Skeleton3D> persons;
			for (const json& jp : jf.at("persons")) {
				Skeleton3D s;
				s.person_id = jp.at("id").get<int>();
				s.frame_index = jf.at("t").get<int>();
				for (const json& jx : jp.at("joints"))
					if (jx.is_null())
						s.joints.emplace_back(std::nullopt);
					else
						s.joints.emplace_back(Eigen::Vector3d(jx.at(0).get<double>(),
							jx.at(1).get<double>(), jx.at(2).get<double>()));
				s.confidences = jp.at("confidences").get<std::vector<double>>();
				s.inferred = jp.at("inferred").get<std::vector<std::uint8_t>>();
				persons.push_back(std::move(s));
			}
			seq.push_back(std::move(persons));
		}
		return seq;
	} catch (const json::exception& e) {
		throw ParseError(path + ": " + e.what());
	}
}

}  // namespace assoc4d
