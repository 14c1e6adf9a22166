#include "assoc4d/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

namespace assoc4d {

namespace {
constexpr double kInf = 1e18;
}

std::vector<int> hungarian_match(const Eigen::MatrixXd& cost, double gate) {
	const int n = static_cast<int>(cost.rows());
	const int mCols = static_cast<int>(cost.cols());
	const int m = std::max(n, mCols);
	if (n == 0)
		return {};

	// Rows x m square matrix, gated and padded with a large finite cost.
	const double big = 1e9;
	auto at = [&](int r, int c) -> double {
		if (c >= mCols)
			return big;
		const double v = cost(r, c);
		return v <= gate ? v : big;
	};

	// Assignment by shortest augmenting paths with potentials.
	std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
	std::vector<int> p(m + 1, 0), way(m + 1, 0);
	for (int i = 1; i <= n; i++) {
		p[0] = i;
		int j0 = 0;
		std::vector<double> minv(m + 1, kInf);
		std::vector<char> used(m + 1, 0);
		do {
			used[j0] = 1;
			const int i0 = p[j0];
			double delta = kInf;
			int j1 = -1;
			for (int j = 1; j <= m; j++) {
				if (used[j])
					continue;
				const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
				if (cur < minv[j]) {
					minv[j] = cur;
					way[j] = j0;
				}
				if (minv[j] < delta) {
					delta = minv[j];
					j1 = j;
				}
			}
			for (int j = 0; j <= m; j++) {
				if (used[j]) {
					u[p[j]] += delta;
					v[j] -= delta;
				} else {
					minv[j] -= delta;
				}
			}
			j0 = j1;
		} while (p[j0] != 0);
		do {
			const int j1 = way[j0];
			p[j0] = p[j1];
			j0 = j1;
		} while (j0);
	}

	std::vector<int> rowMatch(n, -1);
	for (int j = 1; j <= m; j++)
		if (p[j] > 0 && j - 1 < mCols && cost(p[j] - 1, j - 1) <= gate)
			rowMatch[p[j] - 1] = j - 1;
	return rowMatch;
}

std::vector<int> match_persons(const std::vector<Skeleton3D>& pred,
	const std::vector<Skeleton3D>& gt, double gate) {
	Eigen::MatrixXd cost(gt.size(), pred.size());
	for (size_t g = 0; g < gt.size(); g++)
		for (size_t p = 0; p < pred.size(); p++) {
			double sum = 0.0;
			int count = 0;
			const size_t nj = std::min(gt[g].joints.size(), pred[p].joints.size());
			for (size_t j = 0; j < nj; j++)
				if (gt[g].joints[j] && pred[p].joints[j]) {
					sum += (*gt[g].joints[j] - *pred[p].joints[j]).norm();
					count++;
				}
			cost(g, p) = count > 0 ? sum / count : kInf;
		}
	return hungarian_match(cost, gate);
}

PcpResult pcp(const SkeletonSequence& pred, const SkeletonSequence& gt,
	const SkeletonTopology& topology, double alpha) {
	if (pred.size() != gt.size())
		throw ConfigError("pcp: sequences have different lengths");
	bool anyGt = false;
	for (const auto& frame : gt) anyGt |= !frame.empty();
	if (!anyGt)
		throw ConfigError("pcp: empty ground truth");

	std::map<int, std::pair<int, int>> counts;  // actor id -> (correct, total)
	for (size_t f = 0; f < gt.size(); f++) {
		const std::vector<int> match = match_persons(pred[f], gt[f]);
		for (size_t g = 0; g < gt[f].size(); g++) {
			const Skeleton3D& truth = gt[f][g];
			auto& [correct, total] = counts[truth.person_id];
			const Skeleton3D* est = match[g] >= 0 ? &pred[f][match[g]] : nullptr;
			for (const auto& [a, b] : topology.limbs) {
				if (!truth.joints[a] || !truth.joints[b])
					continue;
				total++;
				if (est == nullptr || !est->joints[a] || !est->joints[b])
					continue;
				const double limbLen = (*truth.joints[a] - *truth.joints[b]).norm();
				const double tol = alpha * limbLen;
				if ((*est->joints[a] - *truth.joints[a]).norm() <= tol &&
					(*est->joints[b] - *truth.joints[b]).norm() <= tol)
					correct++;
			}
		}
	}

	PcpResult out;
	double sum = 0.0;
	for (const auto& [id, c] : counts) {
		out.actor_ids.push_back(id);
		const double v = c.second > 0 ? 100.0 * c.first / c.second : 0.0;
		out.per_actor.push_back(v);
		sum += v;
	}
	out.average = counts.empty() ? 0.0 : sum / static_cast<double>(counts.size());
	return out;
}

PrecisionRecall precision_recall(const SkeletonSequence& pred, const SkeletonSequence& gt,
	double threshold_m) {
	if (pred.size() != gt.size())
		throw ConfigError("precision_recall: sequences have different lengths");
	long correct = 0, estimated = 0, truthTotal = 0;
	for (size_t f = 0; f < gt.size(); f++) {
		for (const Skeleton3D& p : pred[f])
			for (const auto& j : p.joints)
				if (j) estimated++;
		for (const Skeleton3D& g : gt[f])
			for (const auto& j : g.joints)
				if (j) truthTotal++;
		const std::vector<int> match = match_persons(pred[f], gt[f]);
		for (size_t g = 0; g < gt[f].size(); g++) {
			if (match[g] < 0)
				continue;
			const Skeleton3D& truth = gt[f][g];
			const Skeleton3D& est = pred[f][match[g]];
			const size_t nj = std::min(truth.joints.size(), est.joints.size());
			for (size_t j = 0; j < nj; j++)
				if (truth.joints[j] && est.joints[j] &&
					(*truth.joints[j] - *est.joints[j]).norm() <= threshold_m)
					correct++;
		}
	}
	PrecisionRecall out;
	out.precision = estimated > 0 ? 100.0 * correct / estimated : 0.0;
	out.recall = truthTotal > 0 ? 100.0 * correct / truthTotal : 0.0;
	return out;
}

int id_switches(const SkeletonSequence& pred, const SkeletonSequence& gt) {
	if (pred.size() != gt.size())
		throw ConfigError("id_switches: sequences have different lengths");
	std::map<int, int> lastId;  // actor id -> last matched pred id
	int switches = 0;
	for (size_t f = 0; f < gt.size(); f++) {
		const std::vector<int> match = match_persons(pred[f], gt[f]);
		for (size_t g = 0; g < gt[f].size(); g++) {
			if (match[g] < 0)
				continue;
			const int actor = gt[f][g].person_id;
			const int predId = pred[f][match[g]].person_id;
			const auto it = lastId.find(actor);
			if (it != lastId.end() && it->second != predId)
				switches++;
			lastId[actor] = predId;
		}
	}
	return switches;
}

namespace {

struct OracleItems {
	// item index per 2D candidate and per prior person; -1 = not participating
	std::vector<std::vector<std::vector<int>>> candidate_item;  // [view][joint][cand]
	std::vector<int> prior_item;
	int count = 0;
	std::vector<std::pair<int, int>> groups;  // (view, joint) with >= 1 active candidate
};

struct PersonConfig {
	std::uint64_t mask = 0;
	double score = 0.0;
	std::vector<int> choice;  // per group, candidate index or -1
	int prior = -1;
};

double config_score(const Graph4D& g, const GraphConfig& cfg, const OracleItems& items,
	const std::vector<int>& choice, int prior) {
	const SkeletonTopology& topo = *g.topology;
	// Candidate chosen per (view, joint), -1 when absent.
	std::vector<std::vector<int>> cand(g.n_views, std::vector<int>(topo.joint_count, -1));
	for (size_t gi = 0; gi < items.groups.size(); gi++)
		cand[items.groups[gi].first][items.groups[gi].second] = choice[gi];

	double e = 0.0;
	for (int v = 0; v < g.n_views; v++)
		for (int l = 0; l < topo.limb_count(); l++) {
			const int m = cand[v][topo.limbs[l].first];
			const int n = cand[v][topo.limbs[l].second];
			if (m >= 0 && n >= 0 && g.parsing[v][l](m, n) >= 0.0)
				e += cfg.w_parsing * g.parsing[v][l](m, n);
		}
	for (int j = 0; j < topo.joint_count; j++)
		for (int a = 0; a < g.n_views; a++)
			for (int b = a + 1; b < g.n_views; b++) {
				const int m = cand[a][j];
				const int n = cand[b][j];
				if (m >= 0 && n >= 0 && g.matching[j][a][b](m, n) >= 0.0)
					e += cfg.w_matching * g.matching[j][a][b](m, n);
			}
	if (prior >= 0)
		for (int j = 0; j < topo.joint_count; j++)
			for (int v = 0; v < g.n_views; v++) {
				const int m = cand[v][j];
				if (m >= 0 && g.tracking[j][v].rows() > prior && g.tracking[j][v](prior, m) >= 0.0)
					e += cfg.w_tracking * g.tracking[j][v](prior, m);
			}
	return e;
}

}  // namespace

OracleResult brute_force_solve(const Graph4D& graph, const GraphConfig& cfg, std::uint64_t cap) {
	const SkeletonTopology& topo = *graph.topology;

	// Candidates and priors that touch at least one edge.
	OracleItems items;
	items.candidate_item.resize(graph.n_views);
	for (int v = 0; v < graph.n_views; v++) {
		items.candidate_item[v].resize(topo.joint_count);
		for (int j = 0; j < topo.joint_count; j++)
			items.candidate_item[v][j].assign(graph.candidate_count(v, j), -1);
	}
	items.prior_item.assign(graph.n_prior, -1);
	for (const Edge& e : graph.edges) {
		switch (e.type) {
		case EdgeType::Parsing: {
			items.candidate_item[e.view_a][topo.limbs[e.group].first][e.m] = 0;
			items.candidate_item[e.view_a][topo.limbs[e.group].second][e.n] = 0;
			break;
		}
		case EdgeType::Matching:
			items.candidate_item[e.view_a][e.group][e.m] = 0;
			items.candidate_item[e.view_b][e.group][e.n] = 0;
			break;
		case EdgeType::Tracking:
			items.candidate_item[e.view_a][e.group][e.m] = 0;
			items.prior_item[e.n] = 0;
			break;
		}
	}
	for (int v = 0; v < graph.n_views; v++)
		for (int j = 0; j < topo.joint_count; j++) {
			bool any = false;
			for (int& it : items.candidate_item[v][j])
				if (it == 0) {
					it = items.count++;
					any = true;
				}
			if (any)
				items.groups.emplace_back(v, j);
		}
	for (int& it : items.prior_item)
		if (it == 0)
			it = items.count++;
	if (items.count == 0)
		return { 0.0, std::vector<std::uint8_t>(graph.edges.size(), 0) };
	if (items.count > 62)
		throw ConfigError("brute_force_solve: instance too large (item count)");

	// Per-person configuration count against the cap.
	std::uint64_t configCount = static_cast<std::uint64_t>(graph.n_prior) + 1;
	for (const auto& [v, j] : items.groups) {
		int active = 0;
		for (const int it : items.candidate_item[v][j])
			if (it >= 0) active++;
		if (configCount > cap / (active + 1))
			throw ConfigError("brute_force_solve: instance too large");
		configCount *= static_cast<std::uint64_t>(active + 1);
	}

	// Enumerate all single-person configurations with positive energy.
	std::vector<PersonConfig> configs;
	std::vector<int> choice(items.groups.size(), -1);
	const auto recurse = [&](const auto& self, size_t gi) -> void {
		if (gi == items.groups.size()) {
			for (int prior = -1; prior < graph.n_prior; prior++) {
				if (prior >= 0 && items.prior_item[prior] < 0)
					continue;
				const double score = config_score(graph, cfg, items, choice, prior);
				if (score <= 1e-12)
					continue;
				PersonConfig pc;
				pc.choice = choice;
				pc.prior = prior;
				pc.score = score;
				for (size_t k = 0; k < choice.size(); k++)
					if (choice[k] >= 0)
						pc.mask |= 1ull << items.candidate_item[items.groups[k].first]
							[items.groups[k].second][choice[k]];
				if (prior >= 0)
					pc.mask |= 1ull << items.prior_item[prior];
				configs.push_back(std::move(pc));
			}
			return;
		}
		const auto& [v, j] = items.groups[gi];
		choice[gi] = -1;
		self(self, gi + 1);
		for (size_t c = 0; c < items.candidate_item[v][j].size(); c++)
			if (items.candidate_item[v][j][c] >= 0) {
				choice[gi] = static_cast<int>(c);
				self(self, gi + 1);
			}
		choice[gi] = -1;
	};
	recurse(recurse, 0);

	std::vector<std::vector<int>> configsByItem(items.count);
	for (size_t c = 0; c < configs.size(); c++)
		for (int it = 0; it < items.count; it++)
			if (configs[c].mask & (1ull << it))
				configsByItem[it].push_back(static_cast<int>(c));

	// Best partition over the remaining item set, pivoting on the lowest item.
	std::unordered_map<std::uint64_t, std::pair<double, int>> memo;  // avail -> (best, config or -1)
	const auto solve = [&](const auto& self, std::uint64_t avail) -> double {
		if (avail == 0)
			return 0.0;
		const auto it = memo.find(avail);
		if (it != memo.end())
			return it->second.first;
		if (memo.size() > cap)
			throw ConfigError("brute_force_solve: instance too large (state count)");
		const int pivot = std::countr_zero(avail);
		double best = self(self, avail & ~(1ull << pivot));
		int bestChoice = -1;
		for (const int ci : configsByItem[pivot]) {
			const PersonConfig& pc = configs[ci];
			if ((pc.mask & avail) != pc.mask)
				continue;
			const double v = pc.score + self(self, avail & ~pc.mask);
			if (v > best) {
				best = v;
				bestChoice = ci;
			}
		}
		memo[avail] = { best, bestChoice };
		return best;
	};
	const std::uint64_t full = items.count == 62 ? ~0ull >> 2 : (1ull << items.count) - 1;
	const double best = solve(solve, full);

	// Reconstruct the partition and derive the edge selection.
	std::vector<std::vector<std::vector<int>>> label(graph.n_views);
	for (int v = 0; v < graph.n_views; v++) {
		label[v].resize(topo.joint_count);
		for (int j = 0; j < topo.joint_count; j++)
			label[v][j].assign(graph.candidate_count(v, j), -1);
	}
	std::vector<int> priorOwner(graph.n_prior, -1);
	std::uint64_t avail = full;
	int person = 0;
	while (avail != 0) {
		const auto& [score, ci] = memo.at(avail);
		const int pivot = std::countr_zero(avail);
		if (ci < 0) {
			avail &= ~(1ull << pivot);
			continue;
		}
		const PersonConfig& pc = configs[ci];
		for (size_t k = 0; k < pc.choice.size(); k++)
			if (pc.choice[k] >= 0)
				label[items.groups[k].first][items.groups[k].second][pc.choice[k]] = person;
		if (pc.prior >= 0)
			priorOwner[pc.prior] = person;
		person++;
		avail &= ~pc.mask;
	}

	OracleResult out;
	out.objective = best;
	out.selection.assign(graph.edges.size(), 0);
	for (size_t i = 0; i < graph.edges.size(); i++) {
		const Edge& e = graph.edges[i];
		switch (e.type) {
		case EdgeType::Parsing: {
			const int li = label[e.view_a][topo.limbs[e.group].first][e.m];
			out.selection[i] = li >= 0 && li == label[e.view_a][topo.limbs[e.group].second][e.n];
			break;
		}
		case EdgeType::Matching: {
			const int la = label[e.view_a][e.group][e.m];
			out.selection[i] = la >= 0 && la == label[e.view_b][e.group][e.n];
			break;
		}
		case EdgeType::Tracking: {
			const int lm = label[e.view_a][e.group][e.m];
			out.selection[i] = lm >= 0 && priorOwner[e.n] == lm;
			break;
		}
		}
	}
	return out;
}

MatchReport evaluate(const SkeletonSequence& pred, const SkeletonSequence& gt,
	const SkeletonTopology& topology, double pcp_alpha, double joint_threshold_m) {
	MatchReport report;
	report.pcp = pcp(pred, gt, topology, pcp_alpha);
	report.pr = precision_recall(pred, gt, joint_threshold_m);
	report.id_switch_count = id_switches(pred, gt);
	return report;
}

}  // namespace assoc4d
