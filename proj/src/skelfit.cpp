#include "assoc4d/skelfit.hpp"

#include <algorithm>
#include <cmath>

namespace assoc4d {

void FitConfig::validate() const {
	if (w_2d < 0.0 || w_shape < 0.0 || w_temp < 0.0)
		throw ConfigError("fit config: weights must be non-negative");
	if (max_iterations < 1 || tolerance <= 0.0)
		throw ConfigError("fit config: invalid iteration settings");
	if (visibility_min_cams < 1 || bone_lock_samples < 1)
		throw ConfigError("fit config: invalid visibility settings");
}

BoneLengthState BoneLengthState::fresh(int person_id, int limb_count) {
	BoneLengthState s;
	s.person_id = person_id;
	s.mean.assign(limb_count, 0.0);
	s.count.assign(limb_count, 0);
	return s;
}

Skeleton3D triangulate_person(const Assembly::Person& person, const DetectionFrame& frame,
	const std::vector<Camera>& cameras, const SkeletonTopology& topology) {
	const int J = topology.joint_count;
	const int V = static_cast<int>(frame.views.size());

	std::vector<const Camera*> viewCams(V, nullptr);
	for (int v = 0; v < V; v++)
		for (const Camera& c : cameras)
			if (c.id() == frame.views[v].camera_id)
				viewCams[v] = &c;

	Skeleton3D out;
	out.person_id = person.id;
	out.frame_index = frame.frame_index;
	out.joints.resize(J);
	out.confidences.assign(J, 0.0);
	out.inferred.assign(J, 0);

	for (int j = 0; j < J; j++) {
		std::vector<std::pair<const Camera*, Pixel>> obs;
		double conf = 0.0;
		for (int v = 0; v < V; v++) {
			const int cand = person.joints(j, v);
			if (cand < 0 || viewCams[v] == nullptr)
				continue;
			const JointCandidate& c = frame.views[v].joints[j][cand];
			obs.emplace_back(viewCams[v], c.position);
			conf += c.confidence;
		}
		if (obs.size() < 2)
			continue;
		try {
			const Triangulation tri = triangulate(obs);
			out.joints[j] = tri.point;
			out.confidences[j] = conf / static_cast<double>(obs.size());
		} catch (const GeometryError&) {
			// Degenerate joint geometry: leave the joint absent.
		}
	}
	return out;
}

namespace {

Eigen::Vector3d term_position(int joint, const std::vector<int>& free_joints,
	const Eigen::VectorXd& theta, const Eigen::MatrixXd& fixed) {
	const auto it = std::lower_bound(free_joints.begin(), free_joints.end(), joint);
	if (it != free_joints.end() && *it == joint) {
		const int f = static_cast<int>(it - free_joints.begin());
		return theta.segment<3>(3 * f);
	}
	return fixed.col(joint);
}

}  // namespace

double FitProblem::objective(const Eigen::VectorXd& theta, const Eigen::MatrixXd& fixed) const {
	const auto pos = [&](int j) { return term_position(j, free_joints, theta, fixed); };
	double e = 0.0;
	for (const RayTerm& t : rays) {
		const Eigen::Vector3d rel = pos(t.joint) - t.ray.origin;
		e += cfg.w_2d * (rel - rel.dot(t.ray.direction) * t.ray.direction).squaredNorm();
	}
	for (const BoneTerm& t : bones) {
		const double len = (pos(t.joint_a) - pos(t.joint_b)).norm();
		e += cfg.w_shape * (len - t.target) * (len - t.target);
	}
	for (const SymTerm& t : syms) {
		const double d = (pos(t.a1) - pos(t.a2)).norm() - (pos(t.b1) - pos(t.b2)).norm();
		e += cfg.w_shape * d * d;
	}
	for (const TempTerm& t : temps)
		e += cfg.w_temp * (pos(t.joint) - t.prev).squaredNorm();
	return e;
}

Eigen::VectorXd FitProblem::gradient(const Eigen::VectorXd& theta, const Eigen::MatrixXd& fixed) const {
	const auto pos = [&](int j) { return term_position(j, free_joints, theta, fixed); };
	const auto freeIndex = [&](int j) -> int {
		const auto it = std::lower_bound(free_joints.begin(), free_joints.end(), j);
		return it != free_joints.end() && *it == j ? static_cast<int>(it - free_joints.begin()) : -1;
	};
	Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
	const auto add = [&](int joint, const Eigen::Vector3d& dg) {
		if (const int f = freeIndex(joint); f >= 0)
			g.segment<3>(3 * f) += dg;
	};

	for (const RayTerm& t : rays) {
		const Eigen::Vector3d rel = pos(t.joint) - t.ray.origin;
		const Eigen::Vector3d perp = rel - rel.dot(t.ray.direction) * t.ray.direction;
		add(t.joint, 2.0 * cfg.w_2d * perp);  // the perpendicular projector is idempotent
	}
	for (const BoneTerm& t : bones) {
		const Eigen::Vector3d diff = pos(t.joint_a) - pos(t.joint_b);
		const double len = std::max(diff.norm(), 1e-12);
		const Eigen::Vector3d u = diff / len;
		const double r = len - t.target;
		add(t.joint_a, 2.0 * cfg.w_shape * r * u);
		add(t.joint_b, -2.0 * cfg.w_shape * r * u);
	}
	for (const SymTerm& t : syms) {
		const Eigen::Vector3d da = pos(t.a1) - pos(t.a2);
		const Eigen::Vector3d db = pos(t.b1) - pos(t.b2);
		const double la = std::max(da.norm(), 1e-12);
		const double lb = std::max(db.norm(), 1e-12);
		const double r = la - lb;
		add(t.a1, 2.0 * cfg.w_shape * r * da / la);
		add(t.a2, -2.0 * cfg.w_shape * r * da / la);
		add(t.b1, -2.0 * cfg.w_shape * r * db / lb);
		add(t.b2, 2.0 * cfg.w_shape * r * db / lb);
	}
	for (const TempTerm& t : temps)
		add(t.joint, 2.0 * cfg.w_temp * (pos(t.joint) - t.prev));
	return g;
}

FitOutcome solve_fit(const FitProblem& problem, const Eigen::VectorXd& theta0,
	const Eigen::MatrixXd& fixed) {
	const int dim = static_cast<int>(theta0.size());
	FitOutcome out;
	out.theta = theta0;
	out.objective = problem.objective(theta0, fixed);
	if (dim == 0) {
		out.converged = true;
		return out;
	}

	// Residual stack for the Gauss-Newton normal equations.
	const auto build = [&](const Eigen::VectorXd& theta, Eigen::MatrixXd& JtJ, Eigen::VectorXd& Jtr) {
		JtJ.setZero(dim, dim);
		Jtr.setZero(dim);
		const auto pos = [&](int j) { return term_position(j, problem.free_joints, theta, fixed); };
		const auto freeIndex = [&](int j) -> int {
			const auto it = std::lower_bound(problem.free_joints.begin(), problem.free_joints.end(), j);
			return it != problem.free_joints.end() && *it == j
				? static_cast<int>(it - problem.free_joints.begin()) : -1;
		};
		const auto rank1 = [&](const std::vector<std::pair<int, Eigen::Vector3d>>& jac, double r) {
			for (const auto& [fa, ja] : jac) {
				Jtr.segment<3>(3 * fa) += ja * r;
				for (const auto& [fb, jb] : jac)
					JtJ.block<3, 3>(3 * fa, 3 * fb) += ja * jb.transpose();
			}
		};

		const FitConfig& cfg = problem.cfg;
		for (const FitProblem::RayTerm& t : problem.rays) {
			const int f = freeIndex(t.joint);
			if (f < 0)
				continue;
			const double sw = std::sqrt(cfg.w_2d);
			const Eigen::Vector3d rel = pos(t.joint) - t.ray.origin;
			const Eigen::Matrix3d P =
				Eigen::Matrix3d::Identity() - t.ray.direction * t.ray.direction.transpose();
			const Eigen::Vector3d r = sw * P * rel;
			const Eigen::Matrix3d Jb = sw * P;
			JtJ.block<3, 3>(3 * f, 3 * f) += Jb.transpose() * Jb;
			Jtr.segment<3>(3 * f) += Jb.transpose() * r;
		}
		for (const FitProblem::BoneTerm& t : problem.bones) {
			const double sw = std::sqrt(cfg.w_shape);
			const Eigen::Vector3d diff = pos(t.joint_a) - pos(t.joint_b);
			const double len = std::max(diff.norm(), 1e-12);
			const Eigen::Vector3d u = diff / len;
			std::vector<std::pair<int, Eigen::Vector3d>> jac;
			if (const int f = freeIndex(t.joint_a); f >= 0) jac.emplace_back(f, sw * u);
			if (const int f = freeIndex(t.joint_b); f >= 0) jac.emplace_back(f, -sw * u);
			rank1(jac, sw * (len - t.target));
		}
		for (const FitProblem::SymTerm& t : problem.syms) {
			const double sw = std::sqrt(cfg.w_shape);
			const Eigen::Vector3d da = pos(t.a1) - pos(t.a2);
			const Eigen::Vector3d db = pos(t.b1) - pos(t.b2);
			const double la = std::max(da.norm(), 1e-12);
			const double lb = std::max(db.norm(), 1e-12);
			std::vector<std::pair<int, Eigen::Vector3d>> jac;
			if (const int f = freeIndex(t.a1); f >= 0) jac.emplace_back(f, sw * da / la);
			if (const int f = freeIndex(t.a2); f >= 0) jac.emplace_back(f, -sw * da / la);
			if (const int f = freeIndex(t.b1); f >= 0) jac.emplace_back(f, -sw * db / lb);
			if (const int f = freeIndex(t.b2); f >= 0) jac.emplace_back(f, sw * db / lb);
			rank1(jac, sw * (la - lb));
		}
		for (const FitProblem::TempTerm& t : problem.temps) {
			const int f = freeIndex(t.joint);
			if (f < 0)
				continue;
			const double sw = std::sqrt(cfg.w_temp);
			JtJ.block<3, 3>(3 * f, 3 * f) += sw * sw * Eigen::Matrix3d::Identity();
			Jtr.segment<3>(3 * f) += sw * sw * (pos(t.joint) - t.prev);
		}
	};

	double lambda = 1e-4;
	Eigen::MatrixXd JtJ;
	Eigen::VectorXd Jtr;
	for (int iter = 0; iter < problem.cfg.max_iterations; iter++) {
		out.iterations = iter + 1;
		build(out.theta, JtJ, Jtr);
		bool accepted = false;
		for (int attempt = 0; attempt < 8; attempt++) {
			const Eigen::MatrixXd damped =
				JtJ + lambda * Eigen::MatrixXd::Identity(dim, dim);
			const Eigen::VectorXd step = damped.ldlt().solve(-Jtr);
			const Eigen::VectorXd trial = out.theta + step;
			const double trialObj = problem.objective(trial, fixed);
			if (trialObj <= out.objective) {
				const bool small = step.norm() < problem.cfg.tolerance;
				out.theta = trial;
				out.objective = trialObj;
				lambda = std::max(lambda / 3.0, 1e-10);
				accepted = true;
				if (small) {
					out.converged = true;
					return out;
				}
				break;
			}
			lambda *= 10.0;
		}
		if (!accepted) {
			out.converged = true;  // no descent direction left at this scale
			return out;
		}
	}
	return out;
}

Skeleton3D fit_parametric(const Skeleton3D& tri, const Skeleton3D* prev,
	const BoneLengthState& bones, const Assembly::Person& person, const DetectionFrame& frame,
	const std::vector<Camera>& cameras, const SkeletonTopology& topology, const FitConfig& cfg) {
	cfg.validate();
	const int J = topology.joint_count;
	const int V = static_cast<int>(frame.views.size());

	std::vector<const Camera*> viewCams(V, nullptr);
	for (int v = 0; v < V; v++)
		for (const Camera& c : cameras)
			if (c.id() == frame.views[v].camera_id)
				viewCams[v] = &c;

	std::vector<std::vector<int>> neighbors(J);
	for (const auto& [a, b] : topology.limbs) {
		neighbors[a].push_back(b);
		neighbors[b].push_back(a);
	}
	const auto limb_between = [&](int a, int b) {
		for (int l = 0; l < topology.limb_count(); l++)
			if ((topology.limbs[l].first == a && topology.limbs[l].second == b) ||
				(topology.limbs[l].first == b && topology.limbs[l].second == a))
				return l;
		return -1;
	};

	std::vector<std::vector<Ray>> jointRays(J);
	std::vector<double> confSum(J, 0.0);
	std::vector<int> confCount(J, 0);
	for (int j = 0; j < J; j++)
		for (int v = 0; v < V; v++) {
			const int cand = person.joints(j, v);
			if (cand < 0 || viewCams[v] == nullptr)
				continue;
			const JointCandidate& c = frame.views[v].joints[j][cand];
			jointRays[j].push_back(back_project(*viewCams[v], c.position));
			confSum[j] += c.confidence;
			confCount[j]++;
		}

	const auto prevJoint = [&](int j) -> const std::optional<Eigen::Vector3d>* {
		return prev != nullptr && j < static_cast<int>(prev->joints.size()) ? &prev->joints[j] : nullptr;
	};

	// Which joints participate: observed in >= 1 view, or occluded but held
	// by a temporal prior next to an observed joint.
	std::vector<char> present(J, 0);
	for (int j = 0; j < J; j++) {
		if (!jointRays[j].empty()) {
			present[j] = 1;
			continue;
		}
		const auto* pj = prevJoint(j);
		if (pj != nullptr && pj->has_value() && cfg.w_temp > 0.0)
			for (const int n : neighbors[j])
				if (!jointRays[n].empty())
					present[j] = 1;
	}

	// Initialization: triangulation, then temporal prior, then propagation
	// from initialized neighbors.
	Eigen::MatrixXd positions = Eigen::MatrixXd::Zero(3, J);
	std::vector<char> initialized(J, 0);
	for (int j = 0; j < J; j++) {
		if (!present[j])
			continue;
		if (tri.joints[j]) {
			positions.col(j) = *tri.joints[j];
			initialized[j] = 1;
		} else if (const auto* pj = prevJoint(j); pj != nullptr && pj->has_value()) {
			positions.col(j) = **pj;
			initialized[j] = 1;
		}
	}
	for (bool changed = true; changed;) {
		changed = false;
		for (int j = 0; j < J; j++) {
			if (!present[j] || initialized[j])
				continue;
			for (const int n : neighbors[j]) {
				if (!initialized[n])
					continue;
				if (!jointRays[j].empty()) {
					// Closest point on the single observing ray to the neighbor.
					const Ray& r = jointRays[j].front();
					positions.col(j) =
						r.origin + (positions.col(n) - r.origin).dot(r.direction) * r.direction;
				} else {
					const int l = limb_between(j, n);
					const double len = l >= 0 && bones.count[l] > 0 ? bones.mean[l] : 0.3;
					positions.col(j) = positions.col(n) + Eigen::Vector3d(0.0, 0.0, -len);
				}
				initialized[j] = 1;
				changed = true;
				break;
			}
		}
	}
	for (int j = 0; j < J; j++)
		if (present[j] && !initialized[j]) {
			if (!jointRays[j].empty()) {
				const Ray& r = jointRays[j].front();
				positions.col(j) = r.origin + 3.0 * r.direction;
				initialized[j] = 1;
			} else {
				present[j] = 0;
			}
		}

	FitProblem problem;
	problem.cfg = cfg;
	problem.n_joints = J;
	for (int j = 0; j < J; j++)
		if (present[j])
			problem.free_joints.push_back(j);
	for (int j = 0; j < J; j++)
		for (const Ray& r : jointRays[j])
			problem.rays.push_back({ j, r });
	if (cfg.w_shape > 0.0) {
		for (int l = 0; l < topology.limb_count(); l++) {
			const auto& [a, b] = topology.limbs[l];
			if (present[a] && present[b] && bones.count[l] > 0)
				problem.bones.push_back({ a, b, bones.mean[l] });
		}
		for (const auto& [la, lb] : topology.symmetric_limbs) {
			const auto& [a1, a2] = topology.limbs[la];
			const auto& [b1, b2] = topology.limbs[lb];
			if (present[a1] && present[a2] && present[b1] && present[b2])
				problem.syms.push_back({ a1, a2, b1, b2 });
		}
	}
	if (cfg.w_temp > 0.0)
		for (int j = 0; j < J; j++) {
			const auto* pj = prevJoint(j);
			if (present[j] && pj != nullptr && pj->has_value())
				problem.temps.push_back({ j, **pj });
		}

	Eigen::VectorXd theta0(3 * problem.free_joints.size());
	for (size_t f = 0; f < problem.free_joints.size(); f++)
		theta0.segment<3>(3 * static_cast<int>(f)) = positions.col(problem.free_joints[f]);

	const FitOutcome fit = solve_fit(problem, theta0, positions);

	Skeleton3D out;
	out.person_id = tri.person_id;
	out.frame_index = tri.frame_index;
	out.joints.resize(J);
	out.confidences.assign(J, 0.0);
	out.inferred.assign(J, 0);
	for (size_t f = 0; f < problem.free_joints.size(); f++) {
		const int j = problem.free_joints[f];
		out.joints[j] = Eigen::Vector3d(fit.theta.segment<3>(3 * static_cast<int>(f)));
		if (tri.joints[j]) {
			out.confidences[j] = tri.confidences[j];
		} else {
			out.inferred[j] = 1;
			out.confidences[j] = confCount[j] > 0 ? confSum[j] / confCount[j] * 0.5 : 0.0;
		}
	}
	return out;
}

void update_bone_lengths(BoneLengthState& state, const Skeleton3D& skel,
	const std::vector<int>& views_per_joint, const SkeletonTopology& topology, const FitConfig& cfg) {
	for (int l = 0; l < topology.limb_count(); l++) {
		if (state.locked(l, cfg))
			continue;
		const auto& [a, b] = topology.limbs[l];
		if (!skel.joints[a] || !skel.joints[b] || skel.inferred[a] || skel.inferred[b])
			continue;
		if (views_per_joint[a] < cfg.visibility_min_cams || views_per_joint[b] < cfg.visibility_min_cams)
			continue;
		const double len = (*skel.joints[a] - *skel.joints[b]).norm();
		state.count[l]++;
		state.mean[l] += (len - state.mean[l]) / static_cast<double>(state.count[l]);
	}
}

}  // namespace assoc4d
