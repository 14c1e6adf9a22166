#include "assoc4d/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <thread>

namespace assoc4d {

void SolverConfig::validate() const {
	graph.validate();
	if (beam_width < 1)
		throw ConfigError("solver config: beam width must be >= 1");
	if (score_floor < 0.0)
		throw ConfigError("solver config: score floor must be >= 0");
	if (min_person_views < 1 || min_person_joint_fraction < 0.0 || min_person_joint_fraction > 1.0)
		throw ConfigError("solver config: invalid person evidence filter");
	if (threads < 1)
		throw ConfigError("solver config: thread count must be >= 1");
}

double welsch(double x, double c) {
	if (c <= 0.0)
		throw ConfigError("welsch: c must be positive");
	const double r = x / c;
	return 1.0 - std::exp(-0.5 * r * r);
}

namespace {

// (N-1)/2, kept positive for the degenerate single-view case.
double welsch_scale(int n_views) {
	return std::max((n_views - 1) * 0.5, 0.5);
}

}  // namespace

int LimbClique::size() const {
	int s = temporal >= 0 ? 1 : 0;
	for (const int n : per_view)
		if (n >= 0) s++;
	return s;
}

std::vector<LimbGraph> build_limb_graphs(const Graph4D& graph) {
	const SkeletonTopology& topo = *graph.topology;
	std::vector<LimbGraph> out(topo.limb_count());
	for (int l = 0; l < topo.limb_count(); l++) {
		LimbGraph& lg = out[l];
		lg.limb = l;
		lg.joint_i = topo.limbs[l].first;
		lg.joint_j = topo.limbs[l].second;
		lg.n_views = graph.n_views;

		for (int v = 0; v < graph.n_views; v++) {
			const Eigen::MatrixXd& paf = graph.parsing[v][l];
			for (int m = 0; m < paf.rows(); m++)
				for (int n = 0; n < paf.cols(); n++)
					if (paf(m, n) >= 0.0)
						lg.nodes.push_back({ v, m, n, paf(m, n) });
		}
		for (int k = 0; k < graph.n_prior; k++) {
			const PriorPerson& p = graph.prior[k];
			const bool hasI = lg.joint_i < static_cast<int>(p.joints.size()) && p.joints[lg.joint_i];
			const bool hasJ = lg.joint_j < static_cast<int>(p.joints.size()) && p.joints[lg.joint_j];
			if (hasI && hasJ)
				lg.temporal.push_back(k);
		}

		const int nn = static_cast<int>(lg.nodes.size());
		lg.node_edges.setConstant(nn, nn, -1.0);
		for (int a = 0; a < nn; a++)
			for (int b = a + 1; b < nn; b++) {
				const LimbNode2D& na = lg.nodes[a];
				const LimbNode2D& nb = lg.nodes[b];
				if (na.view == nb.view)
					continue;
				const int va = std::min(na.view, nb.view);
				const int vb = std::max(na.view, nb.view);
				const LimbNode2D& first = na.view == va ? na : nb;
				const LimbNode2D& second = na.view == va ? nb : na;
				const double wi = graph.matching[lg.joint_i][va][vb](first.cand_i, second.cand_i);
				const double wj = graph.matching[lg.joint_j][va][vb](first.cand_j, second.cand_j);
				if (wi < 0.0 || wj < 0.0)
					continue;
				lg.node_edges(a, b) = lg.node_edges(b, a) = wi + wj;
			}

		lg.temporal_edges.setConstant(static_cast<int>(lg.temporal.size()), nn, -1.0);
		for (size_t ti = 0; ti < lg.temporal.size(); ti++) {
			const int k = lg.temporal[ti];
			for (int a = 0; a < nn; a++) {
				const LimbNode2D& na = lg.nodes[a];
				const double wi = graph.tracking[lg.joint_i][na.view](k, na.cand_i);
				const double wj = graph.tracking[lg.joint_j][na.view](k, na.cand_j);
				if (wi < 0.0 || wj < 0.0)
					continue;
				lg.temporal_edges(static_cast<int>(ti), a) = wi + wj;
			}
		}
	}
	return out;
}

double clique_score(const LimbClique& clique, const LimbGraph& lg, const SolverConfig& cfg) {
	const GraphConfig& gc = cfg.graph;
	double energy = 0.0;
	std::vector<int> members;
	for (int v = 0; v < lg.n_views; v++)
		if (clique.per_view[v] >= 0)
			members.push_back(clique.per_view[v]);

	for (const int node : members)
		energy += gc.w_parsing * lg.nodes[node].paf;
	for (size_t a = 0; a < members.size(); a++)
		for (size_t b = a + 1; b < members.size(); b++)
			energy += gc.w_matching * lg.node_edges(members[a], members[b]);
	if (clique.temporal >= 0)
		for (const int node : members)
			energy += gc.w_tracking * lg.temporal_edges(clique.temporal, node);

	const int size = clique.size();
	return energy / static_cast<double>(size) +
		gc.w_view * welsch(static_cast<double>(size), welsch_scale(lg.n_views));
}

namespace {

// Deterministic total order for equal-score ties.
bool clique_before(const LimbClique& a, const LimbClique& b) {
	if (a.score != b.score)
		return a.score > b.score;
	if (a.per_view != b.per_view)
		return a.per_view < b.per_view;
	return a.temporal < b.temporal;
}

template <typename Sink>
void enumerate_masked_into(const LimbGraph& lg, const SolverConfig& cfg,
	const std::vector<char>& node_alive, const std::vector<char>& temporal_alive, Sink&& emit) {
	const auto compatible = [&](const LimbClique& c, int node) {
		if (!node_alive[node])
			return false;
		for (int v = 0; v < lg.n_views; v++)
			if (c.per_view[v] >= 0 && lg.node_edges(c.per_view[v], node) < 0.0)
				return false;
		if (c.temporal >= 0 && lg.temporal_edges(c.temporal, node) < 0.0)
			return false;
		return true;
	};

	// Node indices grouped by view, for growth over unused views.
	std::vector<std::vector<int>> byView(lg.n_views);
	for (size_t n = 0; n < lg.nodes.size(); n++)
		if (node_alive[n])
			byView[lg.nodes[n].view].push_back(static_cast<int>(n));

	// Growth carries the clique's raw energy so each extension is O(views)
	// instead of a full rescore; the final score matches clique_score.
	struct Partial {
		LimbClique clique;
		double energy = 0.0;
	};
	const GraphConfig& gc = cfg.graph;
	const double scale = welsch_scale(lg.n_views);
	const auto finish = [&](Partial& p) {
		p.clique.score = p.energy / p.clique.size() +
			gc.w_view * welsch(p.clique.size(), scale);
	};
	const auto extend = [&](const Partial& p, int view, int node) {
		Partial next = p;
		next.clique.per_view[view] = node;
		next.energy += gc.w_parsing * lg.nodes[node].paf;
		for (int v = 0; v < lg.n_views; v++)
			if (p.clique.per_view[v] >= 0)
				next.energy += gc.w_matching * lg.node_edges(p.clique.per_view[v], node);
		if (p.clique.temporal >= 0)
			next.energy += gc.w_tracking * lg.temporal_edges(p.clique.temporal, node);
		finish(next);
		return next;
	};

	std::vector<Partial> seeds;
	for (size_t n = 0; n < lg.nodes.size(); n++) {
		if (!node_alive[n])
			continue;
		Partial p;
		p.clique.limb = lg.limb;
		p.clique.per_view.assign(lg.n_views, -1);
		p.clique.per_view[lg.nodes[n].view] = static_cast<int>(n);
		p.energy = gc.w_parsing * lg.nodes[n].paf;
		finish(p);
		seeds.push_back(std::move(p));
	}
	for (size_t t = 0; t < lg.temporal.size(); t++) {
		if (!temporal_alive[t])
			continue;
		Partial p;
		p.clique.limb = lg.limb;
		p.clique.per_view.assign(lg.n_views, -1);
		p.clique.temporal = static_cast<int>(t);
		finish(p);
		seeds.push_back(std::move(p));
	}

	const auto partial_before = [](const Partial& a, const Partial& b) {
		return clique_before(a.clique, b.clique);
	};
	for (const Partial& seed : seeds) {
		emit(seed.clique);
		std::vector<Partial> beam = { seed };
		while (!beam.empty()) {
			std::vector<Partial> grown;
			for (const Partial& p : beam)
				for (int v = 0; v < lg.n_views; v++) {
					if (p.clique.per_view[v] >= 0)
						continue;
					for (const int node : byView[v]) {
						if (!compatible(p.clique, node))
							continue;
						grown.push_back(extend(p, v, node));
					}
				}
			std::sort(grown.begin(), grown.end(), partial_before);
			grown.erase(std::unique(grown.begin(), grown.end(),
				[](const Partial& a, const Partial& b) {
					return a.clique.per_view == b.clique.per_view &&
						a.clique.temporal == b.clique.temporal;
				}), grown.end());
			if (static_cast<int>(grown.size()) > cfg.beam_width)
				grown.resize(cfg.beam_width);
			for (const Partial& p : grown)
				emit(p.clique);
			beam = std::move(grown);
		}
	}
}

std::vector<LimbClique> enumerate_masked(const LimbGraph& lg, const SolverConfig& cfg,
	const std::vector<char>& node_alive, const std::vector<char>& temporal_alive) {
	std::vector<LimbClique> out;
	std::set<std::vector<int>> seen;
	enumerate_masked_into(lg, cfg, node_alive, temporal_alive, [&](const LimbClique& c) {
		std::vector<int> key = c.per_view;
		key.push_back(c.temporal);
		if (seen.insert(std::move(key)).second)
			out.push_back(c);
	});
	std::sort(out.begin(), out.end(), clique_before);
	return out;
}

}  // namespace

std::vector<LimbClique> enumerate_cliques(const LimbGraph& lg, const SolverConfig& cfg) {
	cfg.validate();
	return enumerate_masked(lg, cfg,
		std::vector<char>(lg.nodes.size(), 1), std::vector<char>(lg.temporal.size(), 1));
}

std::vector<LimbBundle> parse_limb_bundles(const LimbGraph& lg, const SolverConfig& cfg) {
	cfg.validate();
	std::vector<char> nodeAlive(lg.nodes.size(), 1);
	std::vector<char> temporalAlive(lg.temporal.size(), 1);
	const double stop = cfg.graph.w_view * welsch(1.0, welsch_scale(lg.n_views)) + cfg.score_floor;

	std::vector<LimbBundle> bundles;
	while (true) {
		// Only the extraction winner matters, so keep a running best instead
		// of materializing the whole sorted candidate list.
		LimbClique best;
		bool found = false;
		enumerate_masked_into(lg, cfg, nodeAlive, temporalAlive, [&](const LimbClique& c) {
			if (!found || clique_before(c, best)) {
				best = c;
				found = true;
			}
		});
		if (!found || best.score <= stop)
			break;

		LimbBundle b;
		b.limb = lg.limb;
		b.cand_i.assign(lg.n_views, -1);
		b.cand_j.assign(lg.n_views, -1);
		b.score = best.score;
		if (best.temporal >= 0) {
			b.prior_person = lg.temporal[best.temporal];
			temporalAlive[best.temporal] = 0;
		}
		std::set<std::pair<int, int>> usedI, usedJ;  // (view, candidate)
		for (int v = 0; v < lg.n_views; v++) {
			if (best.per_view[v] < 0)
				continue;
			const LimbNode2D& node = lg.nodes[best.per_view[v]];
			b.cand_i[v] = node.cand_i;
			b.cand_j[v] = node.cand_j;
			usedI.insert({ v, node.cand_i });
			usedJ.insert({ v, node.cand_j });
		}
		bundles.push_back(b);

		// Remove the clique's joints and everything incident to them.
		for (size_t n = 0; n < lg.nodes.size(); n++) {
			if (!nodeAlive[n])
				continue;
			const LimbNode2D& node = lg.nodes[n];
			if (usedI.count({ node.view, node.cand_i }) || usedJ.count({ node.view, node.cand_j }))
				nodeAlive[n] = 0;
		}
	}
	return bundles;
}

namespace {

struct QueueItem {
	LimbBundle bundle;
};

// Max-heap order with a strict deterministic tie-break.
struct QueueLess {
	bool operator()(const QueueItem& a, const QueueItem& b) const {
		if (a.bundle.score != b.bundle.score)
			return a.bundle.score < b.bundle.score;
		if (a.bundle.limb != b.bundle.limb)
			return a.bundle.limb > b.bundle.limb;
		if (a.bundle.cand_i != b.bundle.cand_i)
			return a.bundle.cand_i > b.bundle.cand_i;
		if (a.bundle.cand_j != b.bundle.cand_j)
			return a.bundle.cand_j > b.bundle.cand_j;
		return a.bundle.prior_person > b.bundle.prior_person;
	}
};

double rescore_bundle(const LimbBundle& b, const LimbGraph& lg,
	const std::map<std::tuple<int, int, int>, int>& nodeIndex, const SolverConfig& cfg) {
	LimbClique c;
	c.limb = b.limb;
	c.per_view.assign(lg.n_views, -1);
	for (int v = 0; v < lg.n_views; v++)
		if (b.cand_i[v] >= 0)
			c.per_view[v] = nodeIndex.at({ v, b.cand_i[v], b.cand_j[v] });
	if (b.prior_person >= 0) {
		const auto it = std::find(lg.temporal.begin(), lg.temporal.end(), b.prior_person);
		c.temporal = static_cast<int>(it - lg.temporal.begin());
	}
	return clique_score(c, lg, cfg);
}

// True when the union of two partial persons is edge-consistent in the
// pruned graph: identical slot claims, a surviving matching edge for every
// cross-view same-joint pair, a surviving parsing edge for every within-view
// adjacent pair that the union creates.
bool persons_compatible(const Assembly::Person& a, const Assembly::Person& b,
	const Graph4D& graph, const SkeletonTopology& topo) {
	const int J = topo.joint_count;
	const int V = graph.n_views;
	for (int j = 0; j < J; j++)
		for (int u = 0; u < V; u++) {
			const int ca = a.joints(j, u);
			if (ca < 0)
				continue;
			for (int v = 0; v < V; v++) {
				const int cb = b.joints(j, v);
				if (cb < 0)
					continue;
				if (u == v) {
					if (ca != cb)
						return false;
					continue;
				}
				const double w = u < v ? graph.matching[j][u][v](ca, cb)
					: graph.matching[j][v][u](cb, ca);
				if (w < 0.0)
					return false;
			}
		}
	for (int l = 0; l < topo.limb_count(); l++) {
		const auto& [ji, jj] = topo.limbs[l];
		for (int v = 0; v < V; v++) {
			const int ai = a.joints(ji, v), aj = a.joints(jj, v);
			const int bi = b.joints(ji, v), bj = b.joints(jj, v);
			if (ai >= 0 && bj >= 0 && aj < 0 && graph.parsing[v][l](ai, bj) < 0.0)
				return false;
			if (bi >= 0 && aj >= 0 && bj < 0 && graph.parsing[v][l](bi, aj) < 0.0)
				return false;
		}
	}
	return true;
}

}  // namespace

Assembly assemble_skeletons(const std::vector<std::vector<LimbBundle>>& bundles_per_limb,
	const std::vector<LimbGraph>& limb_graphs, const Graph4D& graph, const SolverConfig& cfg,
	int first_fresh_id) {
	const SkeletonTopology& topo = *graph.topology;
	const int J = topo.joint_count;
	const int V = graph.n_views;

	// Node index lookup per limb graph, for rescoring split bundles.
	std::vector<std::map<std::tuple<int, int, int>, int>> nodeIndex(limb_graphs.size());
	for (size_t l = 0; l < limb_graphs.size(); l++)
		for (size_t n = 0; n < limb_graphs[l].nodes.size(); n++) {
			const LimbNode2D& node = limb_graphs[l].nodes[n];
			nodeIndex[l][{ node.view, node.cand_i, node.cand_j }] = static_cast<int>(n);
		}

	std::priority_queue<QueueItem, std::vector<QueueItem>, QueueLess> queue;
	for (const auto& bundles : bundles_per_limb)
		for (const LimbBundle& b : bundles)
			queue.push({ b });

	Assembly out;
	// label[view][joint][candidate] -> person index
	std::vector<std::vector<std::vector<int>>> label(V);
	for (int v = 0; v < V; v++) {
		label[v].resize(J);
		for (int j = 0; j < J; j++)
			label[v][j].assign(graph.candidate_count(v, j), -1);
	}
	std::vector<int> priorOwner(graph.n_prior, -1);  // prior index -> person index
	std::vector<std::uint8_t> dead;                  // emptied by merges
	int nextId = first_fresh_id;

	const auto assign = [&](int person, int view, int joint, int cand) {
		int& slot = out.persons[person].joints(joint, view);
		if (slot == -1) {
			slot = cand;
			label[view][joint][cand] = person;
		}
		// Differing existing assignment: keep the earlier (higher-score) one.
	};

	while (!queue.empty()) {
		const LimbBundle b = queue.top().bundle;
		queue.pop();
		const int ji = topo.limbs[b.limb].first;
		const int jj = topo.limbs[b.limb].second;

		// Existing person labels touched by this bundle.
		std::set<int> targets;
		for (int v = 0; v < V; v++) {
			if (b.cand_i[v] < 0)
				continue;
			if (const int li = label[v][ji][b.cand_i[v]]; li >= 0) targets.insert(li);
			if (const int lj = label[v][jj][b.cand_j[v]]; lj >= 0) targets.insert(lj);
		}
		if (b.prior_person >= 0 && priorOwner[b.prior_person] >= 0)
			targets.insert(priorOwner[b.prior_person]);

		// A bundle bridging several partial persons merges them when every
		// edge their union implies survives in the pruned graph: identical
		// slot claims, cross-view matching edges for every same-joint pair,
		// within-view parsing edges for every adjacent joint pair, tracking
		// edges against the (single) inherited prior.
		if (targets.size() >= 2) {
			bool compatible = true;
			int mergedPrior = b.prior_person;
			for (const int t : targets) {
				const int pp = out.persons[t].prior_person;
				if (pp < 0)
					continue;
				if (mergedPrior >= 0 && mergedPrior != pp)
					compatible = false;
				mergedPrior = pp;
			}
			const std::vector<int> ts(targets.begin(), targets.end());
			for (size_t a = 0; a + 1 < ts.size() && compatible; a++)
				for (size_t bb = a + 1; bb < ts.size() && compatible; bb++)
					compatible = persons_compatible(out.persons[ts[a]], out.persons[ts[bb]],
						graph, topo);
			if (compatible && mergedPrior >= 0)
				for (const int t : targets) {
					const Assembly::Person& p = out.persons[t];
					if (p.prior_person == mergedPrior)
						continue;
					for (int j = 0; j < J && compatible; j++) {
						if (!graph.prior[mergedPrior].joints[j].has_value())
							continue;
						for (int v = 0; v < V && compatible; v++)
							if (const int c = p.joints(j, v); c >= 0)
								compatible = graph.tracking[j][v](mergedPrior, c) >= 0.0;
					}
				}
			if (compatible) {
				int survivor = *targets.begin();
				for (const int t : targets)
					if (out.persons[t].prior_person >= 0)
						survivor = t;
				for (const int t : targets) {
					if (t == survivor)
						continue;
					Assembly::Person& loser = out.persons[t];
					for (int j = 0; j < J; j++)
						for (int v = 0; v < V; v++)
							if (const int c = loser.joints(j, v); c >= 0) {
								out.persons[survivor].joints(j, v) = c;
								label[v][j][c] = survivor;
							}
					loser.joints.setConstant(J, V, -1);
					loser.prior_person = -1;
					dead[t] = 1;
				}
				targets = { survivor };
			}
		}

		if (targets.size() <= 1) {
			int person;
			if (targets.empty()) {
				Assembly::Person p;
				if (b.prior_person >= 0) {
					p.id = graph.prior[b.prior_person].id;
					p.prior_person = b.prior_person;
					priorOwner[b.prior_person] = static_cast<int>(out.persons.size());
				} else {
					p.id = nextId++;
				}
				p.joints.setConstant(J, V, -1);
				out.persons.push_back(std::move(p));
				dead.push_back(0);
				person = static_cast<int>(out.persons.size()) - 1;
			} else {
				person = *targets.begin();
				if (b.prior_person >= 0 && priorOwner[b.prior_person] < 0 &&
					out.persons[person].prior_person < 0) {
					out.persons[person].prior_person = b.prior_person;
					priorOwner[b.prior_person] = person;
				}
			}
			for (int v = 0; v < V; v++) {
				if (b.cand_i[v] < 0)
					continue;
				assign(person, v, ji, b.cand_i[v]);
				assign(person, v, jj, b.cand_j[v]);
			}
			continue;
		}

		// Conflict: split per target person, rescore fragments, push back.
		std::map<int, LimbBundle> groups;  // target person index (-1 = unlabeled)
		const auto group_of = [&](int target) -> LimbBundle& {
			auto it = groups.find(target);
			if (it == groups.end()) {
				LimbBundle g;
				g.limb = b.limb;
				g.cand_i.assign(V, -1);
				g.cand_j.assign(V, -1);
				it = groups.emplace(target, std::move(g)).first;
			}
			return it->second;
		};
		for (int v = 0; v < V; v++) {
			if (b.cand_i[v] < 0)
				continue;
			const int li = label[v][ji][b.cand_i[v]];
			const int lj = label[v][jj][b.cand_j[v]];
			if (li >= 0 && lj >= 0 && li != lj)
				continue;  // the limb itself bridges two persons; infeasible either way
			LimbBundle& g = group_of(li >= 0 ? li : lj);
			g.cand_i[v] = b.cand_i[v];
			g.cand_j[v] = b.cand_j[v];
		}
		if (b.prior_person >= 0) {
			const int owner = priorOwner[b.prior_person];
			if (owner >= 0 && groups.count(owner))
				groups[owner].prior_person = b.prior_person;
			else if (owner < 0 && groups.count(-1))
				groups[-1].prior_person = b.prior_person;
		}
		for (auto& [target, g] : groups) {
			bool any2d = false;
			for (int v = 0; v < V; v++) any2d |= g.cand_i[v] >= 0;
			if (!any2d)
				continue;
			g.score = rescore_bundle(g, limb_graphs[b.limb], nodeIndex[b.limb], cfg);
			queue.push({ std::move(g) });
		}
	}

	if (cfg.attach_free_joints) {
		// Residual harvest: unlabeled candidates that still share surviving
		// edges with an assembled person are claimed greedily by objective
		// gain. Covers joints whose 2D limb never formed a clique.
		const GraphConfig& gc = cfg.graph;
		const auto gain_of = [&](int pi, int j, int v, int c) {
			const Assembly::Person& p = out.persons[pi];
			double gain = 0.0;
			for (int u = 0; u < V; u++) {
				if (u == v)
					continue;
				const int d = p.joints(j, u);
				if (d < 0)
					continue;
				const int lo = std::min(u, v), hi = std::max(u, v);
				const double w = graph.matching[j][lo][hi](lo == v ? c : d, lo == v ? d : c);
				if (w >= 0.0)
					gain += gc.w_matching * w;
			}
			for (int l = 0; l < topo.limb_count(); l++) {
				const auto& [ji, jj] = topo.limbs[l];
				if (ji == j && p.joints(jj, v) >= 0) {
					if (const double w = graph.parsing[v][l](c, p.joints(jj, v)); w >= 0.0)
						gain += gc.w_parsing * w;
				} else if (jj == j && p.joints(ji, v) >= 0) {
					if (const double w = graph.parsing[v][l](p.joints(ji, v), c); w >= 0.0)
						gain += gc.w_parsing * w;
				}
			}
			if (p.prior_person >= 0 && graph.prior[p.prior_person].joints[j].has_value()) {
				if (const double w = graph.tracking[j][v](p.prior_person, c); w >= 0.0)
					gain += gc.w_tracking * w;
			}
			return gain;
		};
		// Gain of merging person b into person a: surviving edges newly
		// internal to the union. Slot conflicts or two distinct priors
		// forbid the merge (gain -1).
		const auto merge_gain = [&](int a, int b) {
			const Assembly::Person& pa = out.persons[a];
			const Assembly::Person& pb = out.persons[b];
			if (pa.prior_person >= 0 && pb.prior_person >= 0)
				return -1.0;
			double gain = 0.0;
			for (int j = 0; j < J; j++)
				for (int v = 0; v < V; v++) {
					if (pa.joints(j, v) >= 0 && pb.joints(j, v) >= 0)
						return -1.0;
					const int ca = pa.joints(j, v) >= 0 ? pa.joints(j, v) : pb.joints(j, v);
					if (ca < 0)
						continue;
					const bool fromA = pa.joints(j, v) >= 0;
					for (int u = v + 1; u < V; u++) {
						// Cross pairs only: one endpoint from each person.
						const int cu = fromA ? pb.joints(j, u) : pa.joints(j, u);
						if (cu < 0)
							continue;
						if (const double w = graph.matching[j][v][u](ca, cu); w >= 0.0)
							gain += gc.w_matching * w;
					}
				}
			for (int l = 0; l < topo.limb_count(); l++) {
				const auto& [ji, jj] = topo.limbs[l];
				for (int v = 0; v < V; v++) {
					const int ai = pa.joints(ji, v), aj = pa.joints(jj, v);
					const int bi = pb.joints(ji, v), bj = pb.joints(jj, v);
					if (ai >= 0 && aj < 0 && bj >= 0)
						if (const double w = graph.parsing[v][l](ai, bj); w >= 0.0)
							gain += gc.w_parsing * w;
					if (bi >= 0 && bj < 0 && aj >= 0)
						if (const double w = graph.parsing[v][l](bi, aj); w >= 0.0)
							gain += gc.w_parsing * w;
				}
			}
			const int prior = pa.prior_person >= 0 ? pa.prior_person : pb.prior_person;
			if (prior >= 0) {
				const Assembly::Person& other = pa.prior_person >= 0 ? pb : pa;
				for (int j = 0; j < J; j++)
					for (int v = 0; v < V; v++)
						if (const int c = other.joints(j, v); c >= 0)
							if (const double w = graph.tracking[j][v](prior, c); w >= 0.0)
								gain += gc.w_tracking * w;
			}
			return gain;
		};

		while (true) {
			double bestGain = 0.0;
			int bp = -1, bj = -1, bv = -1, bc = -1;
			for (size_t pi = 0; pi < out.persons.size(); pi++) {
				if (dead[pi])
					continue;
				for (int j = 0; j < J; j++)
					for (int v = 0; v < V; v++) {
						if (out.persons[pi].joints(j, v) >= 0)
							continue;
						for (int c = 0; c < graph.candidate_count(v, j); c++) {
							if (label[v][j][c] >= 0)
								continue;
							const double g = gain_of(static_cast<int>(pi), j, v, c);
							if (g > bestGain) {
								bestGain = g;
								bp = static_cast<int>(pi);
								bj = j;
								bv = v;
								bc = c;
							}
						}
					}
			}
			double bestMerge = 0.0;
			int ma = -1, mb = -1;
			for (size_t a = 0; a < out.persons.size(); a++) {
				if (dead[a])
					continue;
				for (size_t b = a + 1; b < out.persons.size(); b++) {
					if (dead[b])
						continue;
					const double g = merge_gain(static_cast<int>(a), static_cast<int>(b));
					if (g > bestMerge) {
						bestMerge = g;
						ma = static_cast<int>(a);
						mb = static_cast<int>(b);
					}
				}
			}
			// Fresh person from the best unclaimed cross-view matching edge,
			// for joints with no limb support at all.
			double bestPair = 0.0;
			int pj = -1, pv = -1, pu = -1, pc = -1, pd = -1;
			for (int j = 0; j < J; j++)
				for (int v = 0; v < V; v++)
					for (int u = v + 1; u < V; u++)
						for (int c = 0; c < graph.candidate_count(v, j); c++) {
							if (label[v][j][c] >= 0)
								continue;
							for (int d = 0; d < graph.candidate_count(u, j); d++) {
								if (label[u][j][d] >= 0)
									continue;
								const double w = graph.matching[j][v][u](c, d);
								if (w >= 0.0 && gc.w_matching * w > bestPair) {
									bestPair = gc.w_matching * w;
									pj = j;
									pv = v;
									pu = u;
									pc = c;
									pd = d;
								}
							}
						}
			if (bp < 0 && ma < 0 && pj < 0)
				break;
			if (pj >= 0 && bestPair > bestGain && bestPair > bestMerge) {
				Assembly::Person p;
				p.id = nextId++;
				p.joints.setConstant(J, V, -1);
				p.joints(pj, pv) = pc;
				p.joints(pj, pu) = pd;
				out.persons.push_back(std::move(p));
				dead.push_back(0);
				const int idx = static_cast<int>(out.persons.size()) - 1;
				label[pv][pj][pc] = idx;
				label[pu][pj][pd] = idx;
				continue;
			}
			if (bestGain >= bestMerge) {
				out.persons[bp].joints(bj, bv) = bc;
				label[bv][bj][bc] = bp;
				continue;
			}
			Assembly::Person& winner = out.persons[ma];
			Assembly::Person& loser = out.persons[mb];
			for (int j = 0; j < J; j++)
				for (int v = 0; v < V; v++)
					if (const int c = loser.joints(j, v); c >= 0) {
						winner.joints(j, v) = c;
						label[v][j][c] = ma;
					}
			if (loser.prior_person >= 0) {
				winner.prior_person = loser.prior_person;
				winner.id = loser.id;
				priorOwner[loser.prior_person] = ma;
			}
			loser.joints.setConstant(J, V, -1);
			loser.prior_person = -1;
			dead[mb] = 1;
		}
	}

	// Evidence filter: clutter never becomes a person.
	std::vector<Assembly::Person> kept;
	const int needJoints = static_cast<int>(std::ceil(cfg.min_person_joint_fraction * J));
	for (size_t pi = 0; pi < out.persons.size(); pi++) {
		Assembly::Person& p = out.persons[pi];
		if (dead[pi])
			continue;
		int strong = 0;
		for (int j = 0; j < J; j++) {
			int views = 0;
			for (int v = 0; v < V; v++)
				if (p.joints(j, v) >= 0) views++;
			if (views >= cfg.min_person_views) strong++;
		}
		if (p.prior_person >= 0 || strong >= needJoints)
			kept.push_back(std::move(p));
	}
	out.persons = std::move(kept);
	return out;
}

std::vector<std::uint8_t> assembly_selection(const Assembly& assembly, const Graph4D& graph) {
	const SkeletonTopology& topo = *graph.topology;
	const int J = topo.joint_count;
	const int V = graph.n_views;

	std::vector<std::vector<std::vector<int>>> label(V);
	for (int v = 0; v < V; v++) {
		label[v].resize(J);
		for (int j = 0; j < J; j++)
			label[v][j].assign(graph.candidate_count(v, j), -1);
	}
	std::vector<int> priorOwner(graph.n_prior, -1);
	for (size_t p = 0; p < assembly.persons.size(); p++) {
		const Assembly::Person& person = assembly.persons[p];
		if (person.prior_person >= 0)
			priorOwner[person.prior_person] = static_cast<int>(p);
		for (int j = 0; j < J; j++)
			for (int v = 0; v < V; v++)
				if (person.joints(j, v) >= 0)
					label[v][j][person.joints(j, v)] = static_cast<int>(p);
	}

	std::vector<std::uint8_t> sel(graph.edges.size(), 0);
	for (size_t i = 0; i < graph.edges.size(); i++) {
		const Edge& e = graph.edges[i];
		switch (e.type) {
		case EdgeType::Parsing: {
			const int ji = topo.limbs[e.group].first;
			const int jj = topo.limbs[e.group].second;
			const int li = label[e.view_a][ji][e.m];
			sel[i] = li >= 0 && li == label[e.view_a][jj][e.n];
			break;
		}
		case EdgeType::Matching: {
			const int la = label[e.view_a][e.group][e.m];
			sel[i] = la >= 0 && la == label[e.view_b][e.group][e.n];
			break;
		}
		case EdgeType::Tracking: {
			const int lm = label[e.view_a][e.group][e.m];
			sel[i] = lm >= 0 && priorOwner[e.n] == lm;
			break;
		}
		}
	}
	return sel;
}

SolveResult solve_frame(const DetectionFrame& frame, const PriorSkeletons& prior,
	const std::vector<Camera>& cameras, const SolverConfig& cfg, const SkeletonTopology& topology,
	int first_fresh_id) {
	cfg.validate();
	using clock = std::chrono::steady_clock;
	const auto ms = [](clock::time_point a, clock::time_point b) {
		return std::chrono::duration<double, std::milli>(b - a).count();
	};

	SolveResult result;
	const auto t0 = clock::now();
	result.graph = build_graph(frame, prior, cameras, cfg.graph, topology);
	const std::vector<LimbGraph> limbGraphs = build_limb_graphs(result.graph);
	const auto t1 = clock::now();

	std::vector<std::vector<LimbBundle>> bundles(limbGraphs.size());
	const int nThreads = std::min<int>(cfg.threads, static_cast<int>(limbGraphs.size()));
	if (nThreads <= 1) {
		for (size_t l = 0; l < limbGraphs.size(); l++)
			bundles[l] = parse_limb_bundles(limbGraphs[l], cfg);
	} else {
		// Limb types touch disjoint graphs; results land in per-limb slots,
		// so the outcome is independent of the thread count.
		std::vector<std::thread> pool;
		for (int t = 0; t < nThreads; t++)
			pool.emplace_back([&, t]() {
				for (size_t l = t; l < limbGraphs.size(); l += nThreads)
					bundles[l] = parse_limb_bundles(limbGraphs[l], cfg);
			});
		for (std::thread& th : pool) th.join();
	}
	const auto t2 = clock::now();

	result.assembly = assemble_skeletons(bundles, limbGraphs, result.graph, cfg, first_fresh_id);
	const auto t3 = clock::now();

	result.diagnostics.graph_ms = ms(t0, t1);
	result.diagnostics.parse_ms = ms(t1, t2);
	result.diagnostics.assemble_ms = ms(t2, t3);
	result.diagnostics.objective =
		objective(assembly_selection(result.assembly, result.graph), result.graph, cfg.graph);
	return result;
}

void dump_bundles(std::ostream& out, const std::vector<std::vector<LimbBundle>>& bundles_per_limb) {
	for (const auto& bundles : bundles_per_limb)
		for (const LimbBundle& b : bundles) {
			out << "B " << b.limb << " prior=" << b.prior_person << " score=" << b.score;
			for (size_t v = 0; v < b.cand_i.size(); v++)
				if (b.cand_i[v] >= 0)
					out << " v" << v << ":(" << b.cand_i[v] << ',' << b.cand_j[v] << ')';
			out << '\n';
		}
}

}  // namespace assoc4d
