#include "assoc4d/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

namespace assoc4d {

void GraphConfig::validate() const {
	if (epipolar_norm <= 0.0 || tracking_norm <= 0.0)
		throw ConfigError("graph config: normalization factors must be positive");
	if (w_parsing < 0.0 || w_matching < 0.0 || w_tracking < 0.0 || w_view < 0.0)
		throw ConfigError("graph config: weights must be non-negative");
	if (prune_epsilon < 0.0 || prune_epsilon >= 1.0)
		throw ConfigError("graph config: prune_epsilon must be in [0,1)");
}

double parsing_weight(double paf_score) {
	if (!(paf_score >= 0.0 && paf_score <= 1.0))
		throw ConfigError("parsing_weight: paf score out of [0,1]");
	return paf_score;
}

double matching_weight(const Camera& cam1, const Pixel& d1,
	const Camera& cam2, const Pixel& d2, double Z) {
	if (cam1.id() == cam2.id())
		throw ConfigError("matching_weight: both observations from camera " + std::to_string(cam1.id()));
	const double dist = line_line_distance(back_project(cam1, d1), back_project(cam2, d2));
	return std::clamp(1.0 - dist / Z, 0.0, 1.0);
}

double tracking_weight(const Eigen::Vector3d& x, const Camera& cam, const Pixel& d, double T) {
	const double dist = point_line_distance(x, back_project(cam, d));
	return std::clamp(1.0 - dist / T, 0.0, 1.0);
}

Graph4D build_graph(const DetectionFrame& frame, const PriorSkeletons& prior,
	const std::vector<Camera>& cameras, const GraphConfig& cfg, const SkeletonTopology& topology) {
	cfg.validate();
	frame.validate(topology);

	std::map<int, const Camera*> camById;
	for (const Camera& c : cameras) camById[c.id()] = &c;
	std::vector<const Camera*> viewCams;
	for (const ViewDetections& v : frame.views) {
		const auto it = camById.find(v.camera_id);
		if (it == camById.end())
			throw ConfigError("build_graph: no calibration for camera " + std::to_string(v.camera_id));
		viewCams.push_back(it->second);
	}

	const int nViews = static_cast<int>(frame.views.size());
	const int J = topology.joint_count;
	const int L = topology.limb_count();
	const int P = static_cast<int>(prior.size());

	Graph4D g;
	g.topology = &topology;
	g.n_views = nViews;
	g.n_prior = P;
	g.prior = prior;

	g.candidates.resize(nViews);
	g.rays.resize(nViews);
	for (int v = 0; v < nViews; v++) {
		g.candidates[v] = frame.views[v].joints;
		g.rays[v].resize(J);
		for (int j = 0; j < J; j++)
			for (const JointCandidate& c : frame.views[v].joints[j])
				g.rays[v][j].push_back(back_project(*viewCams[v], c.position));
	}

	const auto keep = [&](double w) { return w >= cfg.prune_epsilon ? w : -1.0; };

	// Parsing edges: the PAF score, pruned.
	g.parsing.resize(nViews);
	for (int v = 0; v < nViews; v++) {
		g.parsing[v].resize(L);
		for (int l = 0; l < L; l++) {
			const Eigen::MatrixXd& paf = frame.views[v].pafs[l];
			Eigen::MatrixXd& w = g.parsing[v][l];
			w.resize(paf.rows(), paf.cols());
			for (int m = 0; m < paf.rows(); m++)
				for (int n = 0; n < paf.cols(); n++)
					w(m, n) = keep(parsing_weight(paf(m, n)));
		}
	}

	// Matching edges: same joint type across distinct views.
	g.matching.assign(J, std::vector<std::vector<Eigen::MatrixXd>>(nViews,
		std::vector<Eigen::MatrixXd>(nViews)));
	for (int j = 0; j < J; j++)
		for (int a = 0; a < nViews; a++)
			for (int b = a + 1; b < nViews; b++) {
				const auto& ra = g.rays[a][j];
				const auto& rb = g.rays[b][j];
				Eigen::MatrixXd& w = g.matching[j][a][b];
				w.resize(ra.size(), rb.size());
				for (size_t m = 0; m < ra.size(); m++)
					for (size_t n = 0; n < rb.size(); n++)
						w(m, n) = keep(std::clamp(
							1.0 - line_line_distance(ra[m], rb[n]) / cfg.epipolar_norm, 0.0, 1.0));
			}

	// Tracking edges: prior 3D joint vs current candidate rays.
	g.tracking.assign(J, std::vector<Eigen::MatrixXd>(nViews));
	for (int j = 0; j < J; j++)
		for (int v = 0; v < nViews; v++) {
			Eigen::MatrixXd& w = g.tracking[j][v];
			w.setConstant(P, static_cast<int>(g.rays[v][j].size()), -1.0);
			for (int k = 0; k < P; k++) {
				if (j >= static_cast<int>(prior[k].joints.size()) || !prior[k].joints[j])
					continue;
				const Eigen::Vector3d& x = *prior[k].joints[j];
				for (int m = 0; m < w.cols(); m++)
					w(k, m) = keep(std::clamp(
						1.0 - point_line_distance(x, g.rays[v][j][m]) / cfg.tracking_norm, 0.0, 1.0));
			}
		}

	// Flat edge list in a fixed enumeration order.
	for (int v = 0; v < nViews; v++)
		for (int l = 0; l < L; l++)
			for (int m = 0; m < g.parsing[v][l].rows(); m++)
				for (int n = 0; n < g.parsing[v][l].cols(); n++)
					if (g.parsing[v][l](m, n) >= 0.0)
						g.edges.push_back({ EdgeType::Parsing, l, v, v, m, n, g.parsing[v][l](m, n) });
	for (int j = 0; j < J; j++)
		for (int a = 0; a < nViews; a++)
			for (int b = a + 1; b < nViews; b++)
				for (int m = 0; m < g.matching[j][a][b].rows(); m++)
					for (int n = 0; n < g.matching[j][a][b].cols(); n++)
						if (g.matching[j][a][b](m, n) >= 0.0)
							g.edges.push_back({ EdgeType::Matching, j, a, b, m, n, g.matching[j][a][b](m, n) });
	for (int j = 0; j < J; j++)
		for (int v = 0; v < nViews; v++)
			for (int k = 0; k < g.tracking[j][v].rows(); k++)
				for (int m = 0; m < g.tracking[j][v].cols(); m++)
					if (g.tracking[j][v](k, m) >= 0.0)
						g.edges.push_back({ EdgeType::Tracking, j, v, v, m, k, g.tracking[j][v](k, m) });

	return g;
}

double objective(const std::vector<std::uint8_t>& selection, const Graph4D& graph,
	const GraphConfig& cfg) {
	if (selection.size() != graph.edges.size())
		throw ConfigError("objective: selection size does not match edge count");
	double e = 0.0;
	for (size_t i = 0; i < selection.size(); i++) {
		if (!selection[i])
			continue;
		const Edge& edge = graph.edges[i];
		switch (edge.type) {
		case EdgeType::Parsing: e += cfg.w_parsing * edge.weight; break;
		case EdgeType::Matching: e += cfg.w_matching * edge.weight; break;
		case EdgeType::Tracking: e += cfg.w_tracking * edge.weight; break;
		}
	}
	return e;
}

FeasibilityReport check_feasible(const std::vector<std::uint8_t>& selection, const Graph4D& graph) {
	if (selection.size() != graph.edges.size())
		throw ConfigError("check_feasible: selection size does not match edge count");
	FeasibilityReport report;
	// Degree counters keyed by (constraint family, group indices, node index).
	std::map<std::array<int, 4>, int> deg;
	const auto bump = [&](int family, int a, int b, int c, const std::string& what) {
		const int count = ++deg[{ family, a, b, c }];
		if (count == 2) {
			report.feasible = false;
			report.violations.push_back(what);
		}
	};
	for (size_t i = 0; i < selection.size(); i++) {
		if (!selection[i])
			continue;
		const Edge& e = graph.edges[i];
		std::ostringstream loc;
		switch (e.type) {
		case EdgeType::Parsing:
			// Per (view, limb) each endpoint candidate in at most one edge.
			loc << "parsing view " << e.view_a << " limb " << e.group;
			bump(0, e.view_a, e.group, e.m, loc.str() + " row m=" + std::to_string(e.m));
			bump(1, e.view_a, e.group, e.n, loc.str() + " col n=" + std::to_string(e.n));
			break;
		case EdgeType::Matching:
			// Per (joint, view pair) each candidate in at most one edge.
			loc << "matching joint " << e.group << " views (" << e.view_a << "," << e.view_b << ")";
			bump(2, e.group, e.view_a * 1024 + e.view_b, e.m, loc.str() + " row m=" + std::to_string(e.m));
			bump(3, e.group, e.view_a * 1024 + e.view_b, e.n, loc.str() + " col n=" + std::to_string(e.n));
			break;
		case EdgeType::Tracking:
			// Per (joint, view) each prior joint and each candidate at most once.
			loc << "tracking joint " << e.group << " view " << e.view_a;
			bump(4, e.group, e.view_a, e.n, loc.str() + " prior k=" + std::to_string(e.n));
			bump(5, e.group, e.view_a, e.m, loc.str() + " candidate m=" + std::to_string(e.m));
			break;
		}
	}
	return report;
}

void dump_edges(std::ostream& out, const Graph4D& graph) {
	for (const Edge& e : graph.edges) {
		switch (e.type) {
		case EdgeType::Parsing:
			out << "P " << e.view_a << ' ' << e.group << ' ' << e.m << ' ' << e.n << ' ' << e.weight << '\n';
			break;
		case EdgeType::Matching:
			out << "M " << e.group << ' ' << e.view_a << ' ' << e.view_b << ' ' << e.m << ' ' << e.n
				<< ' ' << e.weight << '\n';
			break;
		case EdgeType::Tracking:
			out << "T " << e.group << ' ' << e.view_a << ' ' << e.n << ' ' << e.m << ' ' << e.weight << '\n';
			break;
		}
	}
}

}  // namespace assoc4d
