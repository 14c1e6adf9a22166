#include "assoc4d/detections.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace assoc4d {

using nlohmann::json;

void SkeletonTopology::validate() const {
	if (joint_count < 2)
		throw ConfigError("topology: need at least 2 joints");
	if (static_cast<int>(limbs.size()) != joint_count - 1)
		throw ConfigError("topology: a tree over " + std::to_string(joint_count) +
			" joints needs " + std::to_string(joint_count - 1) + " limbs, got " +
			std::to_string(limbs.size()));
	if (root < 0 || root >= joint_count)
		throw ConfigError("topology: root out of range");

	// Union-find connectivity / acyclicity check.
	std::vector<int> parent(joint_count);
	for (int i = 0; i < joint_count; i++) parent[i] = i;
	auto find = [&](int x) {
		while (parent[x] != x) x = parent[x] = parent[parent[x]];
		return x;
	};
	for (const auto& [a, b] : limbs) {
		if (a < 0 || a >= joint_count || b < 0 || b >= joint_count || a == b)
			throw ConfigError("topology: invalid limb endpoints");
		const int ra = find(a), rb = find(b);
		if (ra == rb)
			throw ConfigError("topology: limb list contains a cycle");
		parent[ra] = rb;
	}
	for (const auto& [l, r] : symmetric_limbs)
		if (l < 0 || l >= limb_count() || r < 0 || r >= limb_count())
			throw ConfigError("topology: symmetric pair out of range");
}

std::uint64_t SkeletonTopology::hash() const {
	std::ostringstream ss;
	ss << joint_count << ';' << root << ';';
	for (const auto& [a, b] : limbs) ss << a << ',' << b << ';';
	std::uint64_t h = 14695981039346656037ull;
	for (const char c : ss.str()) {
		h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
		h *= 1099511628211ull;
	}
	return h;
}

SkeletonTopology default_topology() {
	SkeletonTopology t;
	t.joint_count = 19;
	t.root = 0;
	t.joint_names = {
		"mid_hip", "neck", "head",
		"r_shoulder", "r_elbow", "r_wrist",
		"l_shoulder", "l_elbow", "l_wrist",
		"r_hip", "r_knee", "r_ankle",
		"l_hip", "l_knee", "l_ankle",
		"r_eye", "l_eye", "r_ear", "l_ear" };
	t.limbs = {
		{ 0, 1 }, { 1, 2 },
		{ 1, 3 }, { 3, 4 }, { 4, 5 },
		{ 1, 6 }, { 6, 7 }, { 7, 8 },
		{ 0, 9 }, { 9, 10 }, { 10, 11 },
		{ 0, 12 }, { 12, 13 }, { 13, 14 },
		{ 2, 15 }, { 2, 16 }, { 15, 17 }, { 16, 18 } };
	t.symmetric_limbs = {
		{ 5, 2 }, { 6, 3 }, { 7, 4 },
		{ 11, 8 }, { 12, 9 }, { 13, 10 },
		{ 15, 14 }, { 17, 16 } };
	t.validate();
	return t;
}

SkeletonTopology chain_topology(int joint_count) {
	SkeletonTopology t;
	t.joint_count = joint_count;
	t.root = 0;
	for (int j = 0; j < joint_count; j++)
		t.joint_names.push_back("j" + std::to_string(j));
	for (int j = 0; j + 1 < joint_count; j++)
		t.limbs.emplace_back(j, j + 1);
	t.validate();
	return t;
}

void DetectionFrame::validate(const SkeletonTopology& topology) const {
	for (size_t v = 0; v < views.size(); v++) {
		const ViewDetections& view = views[v];
		const std::string where = "frame " + std::to_string(frame_index) + " view " + std::to_string(v);
		if (static_cast<int>(view.joints.size()) != topology.joint_count)
			throw ParseError(where + ": joint list size mismatch");
		if (static_cast<int>(view.pafs.size()) != topology.limb_count())
			throw ParseError(where + ": paf list size mismatch");
		for (int j = 0; j < topology.joint_count; j++)
			for (const JointCandidate& c : view.joints[j]) {
				if (!std::isfinite(c.position.u) || !std::isfinite(c.position.v))
					throw ParseError(where + " joint " + std::to_string(j) + ": non-finite candidate");
				if (c.confidence < 0.0 || c.confidence > 1.0)
					throw ParseError(where + " joint " + std::to_string(j) + ": confidence out of [0,1]");
			}
		for (int l = 0; l < topology.limb_count(); l++) {
			const auto& [ji, jj] = topology.limbs[l];
			const Eigen::MatrixXd& paf = view.pafs[l];
			if (paf.rows() != static_cast<int>(view.joints[ji].size()) ||
				paf.cols() != static_cast<int>(view.joints[jj].size()))
				throw ParseError(where + " limb " + std::to_string(l) + ": paf dimension mismatch");
			if (paf.size() > 0 && (paf.minCoeff() < 0.0 || paf.maxCoeff() > 1.0))
				throw ParseError(where + " limb " + std::to_string(l) + ": paf score out of [0,1]");
		}
	}
}

namespace {

bool is_binary_path(const std::string& path) {
	return path.ends_with(".msgpack") || path.ends_with(".bin");
}

json frame_to_json(const DetectionFrame& f) {
	json jf;
	jf["t"] = f.frame_index;
	json views = json::array();
	for (const ViewDetections& v : f.views) {
		json jv;
		jv["camera"] = v.camera_id;
		json joints = json::array();
		for (const auto& cands : v.joints) {
			json jl = json::array();
			for (const JointCandidate& c : cands)
				jl.push_back({ c.position.u, c.position.v, c.confidence });
			joints.push_back(std::move(jl));
		}
		jv["joints"] = std::move(joints);
		json pafs = json::array();
		for (const Eigen::MatrixXd& m : v.pafs) {
			json jm = json::array();
			for (int r = 0; r < m.rows(); r++) {
				json row = json::array();
				for (int c = 0; c < m.cols(); c++) row.push_back(m(r, c));
				jm.push_back(std::move(row));
			}
			pafs.push_back(std::move(jm));
		}
		jv["pafs"] = std::move(pafs);
		views.push_back(std::move(jv));
	}
	jf["views"] = std::move(views);
	return jf;
}

DetectionFrame frame_from_json(const json& jf, const SkeletonTopology& topology) {
	DetectionFrame f;
	f.frame_index = jf.at("t").get<int>();
	for (const json& jv : jf.at("views")) {
		ViewDetections v;
		v.camera_id = jv.at("camera").get<int>();
		for (const json& jl : jv.at("joints")) {
			std::vector<JointCandidate> cands;
			for (const json& jc : jl)
				cands.push_back({ { jc.at(0).get<double>(), jc.at(1).get<double>() }, jc.at(2).get<double>() });
			v.joints.push_back(std::move(cands));
		}
		for (size_t l = 0; l < jv.at("pafs").size(); l++) {
			const json& jm = jv.at("pafs")[l];
			const int ji = topology.limbs[l].first, jj = topology.limbs[l].second;
			Eigen::MatrixXd m(v.joints[ji].size(), v.joints[jj].size());
			if (static_cast<int>(jm.size()) != m.rows())
				throw ParseError("paf row count mismatch in frame " + std::to_string(f.frame_index));
			for (int r = 0; r < m.rows(); r++) {
				if (static_cast<int>(jm[r].size()) != m.cols())
					throw ParseError("paf col count mismatch in frame " + std::to_string(f.frame_index));
				for (int c = 0; c < m.cols(); c++) m(r, c) = jm[r][c].get<double>();
			}
			v.pafs.push_back(std::move(m));
		}
		f.views.push_back(std::move(v));
	}
	f.validate(topology);
	return f;
}

json load_document(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw ConfigError("cannot open " + path);
	try {
		if (is_binary_path(path)) {
			std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
				std::istreambuf_iterator<char>());
			return json::from_msgpack(buf);
		}
		return json::parse(in);
	} catch (const json::exception& e) {
		throw ParseError(path + ": " + e.what());
	}
}

void save_document(const std::string& path, const json& doc) {
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw ConfigError("cannot open " + path + " for writing");
	if (is_binary_path(path)) {
		const std::vector<std::uint8_t> buf = json::to_msgpack(doc);
		out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
	} else {
		out << doc.dump(1, '\t') << '\n';
	}
}

}  // namespace

std::vector<DetectionFrame> load_frames(const std::string& path, const SkeletonTopology& topology) {
	const json doc = load_document(path);
	try {
		if (doc.at("version").get<int>() != 1)
			throw ParseError(path + ": unsupported detection file version");
		if (doc.at("topology_hash").get<std::uint64_t>() != topology.hash())
			throw ParseError(path + ": topology hash mismatch");
		std::vector<DetectionFrame> frames;
		for (const json& jf : doc.at("frames"))
			frames.push_back(frame_from_json(jf, topology));
		std::stable_sort(frames.begin(), frames.end(),
			[](const DetectionFrame& a, const DetectionFrame& b) { return a.frame_index < b.frame_index; });
		return frames;
	} catch (const json::exception& e) {
		throw ParseError(path + ": " + e.what());
	}
}

void save_frames(const std::string& path, const std::vector<DetectionFrame>& frames,
	const SkeletonTopology& topology, const std::vector<int>& camera_ids) {
	json doc;
	doc["version"] = 1;
	doc["topology_hash"] = topology.hash();
	doc["camera_ids"] = camera_ids;
	json jframes = json::array();
	for (const DetectionFrame& f : frames) jframes.push_back(frame_to_json(f));
	doc["frames"] = std::move(jframes);
	save_document(path, doc);
}

std::vector<Camera> load_calibration(const std::string& path) {
	const json doc = load_document(path);
	std::vector<Camera> cams;
	try {
		for (const json& jc : doc.at("cameras")) {
			Eigen::Matrix3d K, R;
			Eigen::Vector3d t;
			for (int i = 0; i < 9; i++) {
				K(i / 3, i % 3) = jc.at("K").at(i).get<double>();
				R(i / 3, i % 3) = jc.at("R").at(i).get<double>();
			}
			for (int i = 0; i < 3; i++) t(i) = jc.at("t").at(i).get<double>();
			cams.emplace_back(jc.at("id").get<int>(), K, R, t,
				jc.at("width").get<int>(), jc.at("height").get<int>());
		}
	} catch (const json::exception& e) {
		throw ParseError(path + ": " + e.what());
	}
	return cams;
}

void save_calibration(const std::string& path, const std::vector<Camera>& cameras) {
	json doc;
	json jcams = json::array();
	for (const Camera& cam : cameras) {
		json jc;
		jc["id"] = cam.id();
		json K = json::array(), R = json::array(), t = json::array();
		for (int i = 0; i < 9; i++) {
			K.push_back(cam.intrinsic()(i / 3, i % 3));
			R.push_back(cam.rotation()(i / 3, i % 3));
		}
		for (int i = 0; i < 3; i++) t.push_back(cam.translation()(i));
		jc["K"] = std::move(K);
		jc["R"] = std::move(R);
		jc["t"] = std::move(t);
		jc["width"] = cam.width();
		jc["height"] = cam.height();
		jcams.push_back(std::move(jc));
	}
	doc["cameras"] = std::move(jcams);
	save_document(path, doc);
}

}  // namespace assoc4d
