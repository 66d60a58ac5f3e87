#include "headfit/io.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace headfit {

namespace {

size_t dtype_size(const std::string& dtype) {
    if (dtype == "f4" || dtype == "i4") return 4;
    if (dtype == "u1") return 1;
    throw validation_error("unknown dtype '" + dtype + "'");
}

void push_u32le(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v & 0xff));
    out.push_back(uint8_t((v >> 8) & 0xff));
    out.push_back(uint8_t((v >> 16) & 0xff));
    out.push_back(uint8_t((v >> 24) & 0xff));
}

uint32_t read_u32le(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

}  // namespace

size_t HhmFile::ArrayDesc::count() const {
    size_t n = 1;
    for (int d : shape) n *= size_t(d);
    return n;
}

void HhmFile::add_f4(const std::string& name, const std::vector<int>& shape,
                     const std::vector<float>& data) {
    ArrayDesc d{name, "f4", shape};
    if (d.count() != data.size()) throw validation_error("array '" + name + "' shape mismatch");
    std::vector<uint8_t> bytes;
    bytes.reserve(4 * data.size());
    for (float f : data) push_u32le(bytes, std::bit_cast<uint32_t>(f));
    order_.push_back(d);
    payload_[name] = std::move(bytes);
}

void HhmFile::add_i4(const std::string& name, const std::vector<int>& shape,
                     const std::vector<int32_t>& data) {
    ArrayDesc d{name, "i4", shape};
    if (d.count() != data.size()) throw validation_error("array '" + name + "' shape mismatch");
    std::vector<uint8_t> bytes;
    bytes.reserve(4 * data.size());
    for (int32_t v : data) push_u32le(bytes, std::bit_cast<uint32_t>(v));
    order_.push_back(d);
    payload_[name] = std::move(bytes);
}

void HhmFile::add_u1(const std::string& name, const std::vector<int>& shape,
                     const std::vector<uint8_t>& data) {
    ArrayDesc d{name, "u1", shape};
    if (d.count() != data.size()) throw validation_error("array '" + name + "' shape mismatch");
    order_.push_back(d);
    payload_[name] = data;
}

bool HhmFile::has(const std::string& name) const { return payload_.count(name) > 0; }

const HhmFile::ArrayDesc& HhmFile::desc(const std::string& name) const {
    for (const auto& d : order_)
        if (d.name == name) return d;
    throw validation_error("array '" + name + "' not present");
}

const std::vector<uint8_t>& HhmFile::raw(const std::string& name) const {
    auto it = payload_.find(name);
    if (it == payload_.end()) throw validation_error("array '" + name + "' not present");
    return it->second;
}

std::vector<float> HhmFile::get_f4(const std::string& name) const {
    if (desc(name).dtype != "f4") throw validation_error("array '" + name + "' is not f4");
    const auto& bytes = raw(name);
    std::vector<float> out(bytes.size() / 4);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = std::bit_cast<float>(read_u32le(bytes.data() + 4 * i));
    return out;
}

std::vector<int32_t> HhmFile::get_i4(const std::string& name) const {
    if (desc(name).dtype != "i4") throw validation_error("array '" + name + "' is not i4");
    const auto& bytes = raw(name);
    std::vector<int32_t> out(bytes.size() / 4);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = std::bit_cast<int32_t>(read_u32le(bytes.data() + 4 * i));
    return out;
}

std::vector<uint8_t> HhmFile::get_u1(const std::string& name) const {
    if (desc(name).dtype != "u1") throw validation_error("array '" + name + "' is not u1");
    return raw(name);
}

void HhmFile::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot open '" + path + "' for writing");
    out << "HHM v1\n";
    for (const auto& [k, v] : meta) out << "meta " << k << " " << v << "\n";
    for (const auto& d : order_) {
        out << "array " << d.name << " " << d.dtype;
        for (int s : d.shape) out << " " << s;
        out << "\n";
    }
    out << "end\n";
    for (const auto& d : order_) {
        const auto& bytes = raw(d.name);
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    }
    if (!out) throw validation_error("write failed for '" + path + "'");
}

HhmFile HhmFile::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "HHM v1")
        throw validation_error("'" + path + "' is not an HHM v1 file");
    HhmFile file;
    std::vector<ArrayDesc> descs;
    while (std::getline(in, line)) {
        if (line == "end") break;
        std::istringstream s(line);
        std::string tag;
        s >> tag;
        if (tag == "meta") {
            std::string key, value;
            s >> key;
            std::getline(s, value);
            if (!value.empty() && value[0] == ' ') value.erase(0, 1);
            file.meta[key] = value;
        } else if (tag == "array") {
            ArrayDesc d;
            s >> d.name >> d.dtype;
            int dim;
            while (s >> dim) d.shape.push_back(dim);
            if (d.name.empty() || d.shape.empty())
                throw validation_error("malformed array line in '" + path + "'");
            dtype_size(d.dtype);
            descs.push_back(d);
        } else {
            throw validation_error("unexpected header line '" + line + "' in '" + path + "'");
        }
    }
    for (const auto& d : descs) {
        std::vector<uint8_t> bytes(d.count() * dtype_size(d.dtype));
        in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
        if (size_t(in.gcount()) != bytes.size())
            throw validation_error("truncated payload for array '" + d.name + "' in '" + path + "'");
        file.order_.push_back(d);
        file.payload_[d.name] = std::move(bytes);
    }
    return file;
}

void hhm_add_matrix(HhmFile& file, const std::string& name, const MatXd& m) {
    std::vector<float> data;
    data.reserve(m.size());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) data.push_back(float(m(r, c)));
    file.add_f4(name, {int(m.rows()), int(m.cols())}, data);
}

void hhm_add_matrix(HhmFile& file, const std::string& name, const MatX3& m) {
    std::vector<float> data;
    data.reserve(m.size());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < 3; ++c) data.push_back(float(m(r, c)));
    file.add_f4(name, {int(m.rows()), 3}, data);
}

void hhm_add_vector(HhmFile& file, const std::string& name, const VecXd& v) {
    std::vector<float> data(v.size());
    for (int i = 0; i < v.size(); ++i) data[i] = float(v[i]);
    file.add_f4(name, {int(v.size())}, data);
}

MatXd hhm_get_matrix(const HhmFile& file, const std::string& name) {
    const auto& d = file.desc(name);
    if (d.shape.size() != 2) throw validation_error("array '" + name + "' is not 2-D");
    const auto data = file.get_f4(name);
    MatXd m(d.shape[0], d.shape[1]);
    for (int r = 0; r < d.shape[0]; ++r)
        for (int c = 0; c < d.shape[1]; ++c) m(r, c) = data[size_t(r) * d.shape[1] + c];
    return m;
}

MatX3 hhm_get_matrix3(const HhmFile& file, const std::string& name) {
    const auto& d = file.desc(name);
    if (d.shape.size() != 2 || d.shape[1] != 3)
        throw validation_error("array '" + name + "' is not N x 3");
    const auto data = file.get_f4(name);
    MatX3 m(d.shape[0], 3);
    for (int r = 0; r < d.shape[0]; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = data[size_t(r) * 3 + c];
    return m;
}

VecXd hhm_get_vector(const HhmFile& file, const std::string& name) {
    const auto& d = file.desc(name);
    if (d.shape.size() != 1) throw validation_error("array '" + name + "' is not 1-D");
    const auto data = file.get_f4(name);
    VecXd v(d.shape[0]);
    for (int i = 0; i < d.shape[0]; ++i) v[i] = data[i];
    return v;
}

void save_model(const HeadModel& model, const std::string& path) {
    HhmFile file;
    const int n = model.num_vertices();
    const int j = model.num_joints();
    hhm_add_matrix(file, "template", model.template_verts);

    std::vector<int32_t> faces;
    faces.reserve(model.faces.size() * 3);
    for (const Face& f : model.faces) {
        faces.push_back(f[0]);
        faces.push_back(f[1]);
        faces.push_back(f[2]);
    }
    file.add_i4("faces", {int(model.faces.size()), 3}, faces);

    hhm_add_matrix(file, "shape_basis", model.shape_basis);
    hhm_add_matrix(file, "expr_basis", model.expr_basis);

    std::vector<float> joint_rest;
    std::vector<int32_t> joint_parent;
    std::string joint_names;
    for (const Joint& joint : model.joints) {
        joint_rest.push_back(float(joint.rest.x()));
        joint_rest.push_back(float(joint.rest.y()));
        joint_rest.push_back(float(joint.rest.z()));
        joint_parent.push_back(joint.parent);
        if (!joint_names.empty()) joint_names += ",";
        joint_names += joint.name;
    }
    file.add_f4("joint_rest", {j, 3}, joint_rest);
    file.add_i4("joint_parent", {j}, joint_parent);
    file.meta["joint_names"] = joint_names;
    file.meta["jaw_joint"] = std::to_string(model.jaw_joint);

    std::vector<float> weights;
    weights.reserve(size_t(n) * j);
    for (int v = 0; v < n; ++v)
        for (int k = 0; k < j; ++k) weights.push_back(float(model.skin_weights(v, k)));
    file.add_f4("skin_weights", {n, j}, weights);

    std::vector<int32_t> selector(model.head_selector.begin(), model.head_selector.end());
    file.add_i4("head_selector", {int(selector.size())}, selector);
    std::vector<int32_t> landmarks(model.landmark_indices.begin(), model.landmark_indices.end());
    file.add_i4("landmark_indices", {int(landmarks.size())}, landmarks);
    file.add_u1("facial_labels", {n}, model.facial_labels);
    file.save(path);
}

HeadModel load_model(const std::string& path) {
    const HhmFile file = HhmFile::load(path);
    HeadModel model;
    model.template_verts = hhm_get_matrix3(file, "template");
    const int n = model.num_vertices();

    const auto faces = file.get_i4("faces");
    for (size_t i = 0; i + 2 < faces.size(); i += 3)
        model.faces.push_back({faces[i], faces[i + 1], faces[i + 2]});

    model.shape_basis = hhm_get_matrix(file, "shape_basis");
    model.expr_basis = hhm_get_matrix(file, "expr_basis");

    const auto rest = file.get_f4("joint_rest");
    const auto parent = file.get_i4("joint_parent");
    std::vector<std::string> names;
    {
        std::istringstream s(file.meta.count("joint_names") ? file.meta.at("joint_names") : "");
        std::string tok;
        while (std::getline(s, tok, ',')) names.push_back(tok);
    }
    for (size_t k = 0; k < parent.size(); ++k) {
        Joint joint;
        joint.rest = Vec3(rest[3 * k], rest[3 * k + 1], rest[3 * k + 2]);
        joint.parent = parent[k];
        joint.name = k < names.size() ? names[k] : "joint" + std::to_string(k);
        model.joints.push_back(joint);
    }
    model.jaw_joint = file.meta.count("jaw_joint") ? std::stoi(file.meta.at("jaw_joint")) : -1;

    const auto& wd = file.desc("skin_weights");
    const auto weights = file.get_f4("skin_weights");
    model.skin_weights.resize(wd.shape[0], wd.shape[1]);
    for (int v = 0; v < wd.shape[0]; ++v)
        for (int k = 0; k < wd.shape[1]; ++k)
            model.skin_weights(v, k) = weights[size_t(v) * wd.shape[1] + k];
    // float32 storage perturbs row sums; renormalize to restore convexity
    for (int v = 0; v < wd.shape[0]; ++v) {
        const double s = model.skin_weights.row(v).sum();
        if (s > 0) model.skin_weights.row(v) /= s;
    }

    const auto selector = file.get_i4("head_selector");
    model.head_selector.assign(selector.begin(), selector.end());
    const auto landmarks = file.get_i4("landmark_indices");
    model.landmark_indices.assign(landmarks.begin(), landmarks.end());
    model.facial_labels = file.get_u1("facial_labels");
    if (int(model.facial_labels.size()) != n)
        throw validation_error("facial_labels length mismatch in '" + path + "'");
    model.validate();
    return model;
}

void write_pfm(const std::string& path, int width, int height, int channels,
               const std::vector<float>& data) {
    if (channels != 1 && channels != 3) throw validation_error("PFM supports 1 or 3 channels");
    if (int(data.size()) != width * height * channels)
        throw validation_error("PFM data size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot open '" + path + "' for writing");
    out << (channels == 3 ? "PF" : "Pf") << "\n" << width << " " << height << "\n-1.0\n";
    // rows bottom-to-top per the PFM convention
    for (int y = height - 1; y >= 0; --y) {
        const float* row = data.data() + size_t(y) * width * channels;
        std::vector<uint8_t> bytes;
        bytes.reserve(size_t(width) * channels * 4);
        for (int i = 0; i < width * channels; ++i)
            push_u32le(bytes, std::bit_cast<uint32_t>(row[i]));
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    }
    if (!out) throw validation_error("write failed for '" + path + "'");
}

std::vector<float> read_pfm(const std::string& path, int& width, int& height, int& channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic == "PF")
        channels = 3;
    else if (magic == "Pf")
        channels = 1;
    else
        throw validation_error("'" + path + "' is not a PFM file");
    double scale;
    in >> width >> height >> scale;
    in.get();  // single whitespace after the scale
    if (scale >= 0) throw validation_error("big-endian PFM not supported: '" + path + "'");
    std::vector<float> data(size_t(width) * height * channels);
    std::vector<uint8_t> bytes(size_t(width) * channels * 4);
    for (int y = height - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
        if (size_t(in.gcount()) != bytes.size())
            throw validation_error("truncated PFM '" + path + "'");
        float* row = data.data() + size_t(y) * width * channels;
        for (int i = 0; i < width * channels; ++i)
            row[i] = std::bit_cast<float>(read_u32le(bytes.data() + 4 * i));
    }
    return data;
}

void write_pgm(const std::string& path, int width, int height, const std::vector<uint8_t>& data) {
    if (int(data.size()) != width * height) throw validation_error("PGM data size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot open '" + path + "' for writing");
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
    if (!out) throw validation_error("write failed for '" + path + "'");
}

std::vector<uint8_t> read_pgm(const std::string& path, int& width, int& height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open '" + path + "'");
    std::string magic;
    int maxval;
    in >> magic >> width >> height >> maxval;
    if (magic != "P5" || maxval != 255)
        throw validation_error("'" + path + "' is not a maxval-255 P5 PGM");
    in.get();
    std::vector<uint8_t> data(size_t(width) * height);
    in.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size()));
    if (size_t(in.gcount()) != data.size()) throw validation_error("truncated PGM '" + path + "'");
    return data;
}

void save_normal_map(const std::string& path, const RenderBuffers& buf) {
    std::vector<float> data(buf.normal.size());
    for (size_t i = 0; i < data.size(); ++i) data[i] = float(buf.normal[i]);
    write_pfm(path, buf.width, buf.height, 3, data);
}

void save_depth_map(const std::string& path, const RenderBuffers& buf) {
    const float sentinel = std::numeric_limits<float>::max();
    std::vector<float> data(buf.depth.size());
    for (size_t i = 0; i < data.size(); ++i)
        data[i] = std::isinf(buf.depth[i]) ? sentinel : float(buf.depth[i]);
    write_pfm(path, buf.width, buf.height, 1, data);
}

void save_coverage(const std::string& path, const RenderBuffers& buf) {
    std::vector<uint8_t> data(buf.coverage.size());
    for (size_t i = 0; i < data.size(); ++i) data[i] = buf.coverage[i] ? 255 : 0;
    write_pgm(path, buf.width, buf.height, data);
}

void load_normal_map(const std::string& path, std::vector<double>& normal, int& w, int& h) {
    int channels;
    const auto data = read_pfm(path, w, h, channels);
    if (channels != 3) throw validation_error("normal map '" + path + "' must have 3 channels");
    normal.assign(data.begin(), data.end());
}

void load_depth_map(const std::string& path, std::vector<double>& depth, int& w, int& h) {
    int channels;
    const auto data = read_pfm(path, w, h, channels);
    if (channels != 1) throw validation_error("depth map '" + path + "' must have 1 channel");
    const float sentinel = std::numeric_limits<float>::max();
    depth.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i)
        depth[i] = data[i] >= sentinel ? std::numeric_limits<double>::infinity() : double(data[i]);
}

void write_obj(const std::string& path, const MatX3& positions, const FaceList& faces) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot open '" + path + "' for writing");
    out.precision(9);
    for (int v = 0; v < int(positions.rows()); ++v)
        out << "v " << positions(v, 0) << " " << positions(v, 1) << " " << positions(v, 2) << "\n";
    for (const Face& f : faces) out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    if (!out) throw validation_error("write failed for '" + path + "'");
}

void read_obj(const std::string& path, MatX3& positions, FaceList& faces) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open '" + path + "'");
    std::vector<Vec3> verts;
    faces.clear();
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream s(line);
        std::string tag;
        s >> tag;
        if (tag == "v") {
            Vec3 p;
            s >> p.x() >> p.y() >> p.z();
            verts.push_back(p);
        } else if (tag == "f") {
            Face f;
            s >> f[0] >> f[1] >> f[2];
            faces.push_back({f[0] - 1, f[1] - 1, f[2] - 1});
        }
    }
    positions.resize(verts.size(), 3);
    for (size_t i = 0; i < verts.size(); ++i) positions.row(i) = verts[i].transpose();
}

void write_landmarks_csv(const std::string& path, const std::vector<LandmarkFrame>& frames) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot open '" + path + "' for writing");
    out.precision(17);
    out << "frame,landmark_id,u,v,valid\n";
    for (size_t i = 0; i < frames.size(); ++i)
        for (int k = 0; k < int(frames[i].uv.rows()); ++k)
            out << i << "," << k << "," << frames[i].uv(k, 0) << "," << frames[i].uv(k, 1) << ","
                << int(frames[i].valid[k]) << "\n";
    if (!out) throw validation_error("write failed for '" + path + "'");
}

std::vector<LandmarkFrame> read_landmarks_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open '" + path + "'");
    std::string line;
    std::getline(in, line);  // header
    struct Row {
        int frame, id, valid;
        double u, v;
    };
    std::vector<Row> rows;
    int max_frame = -1, max_id = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Row r;
        char comma;
        std::istringstream s(line);
        s >> r.frame >> comma >> r.id >> comma >> r.u >> comma >> r.v >> comma >> r.valid;
        if (!s) throw validation_error("malformed landmark CSV line: '" + line + "'");
        rows.push_back(r);
        max_frame = std::max(max_frame, r.frame);
        max_id = std::max(max_id, r.id);
    }
    std::vector<LandmarkFrame> frames(max_frame + 1);
    for (auto& f : frames) {
        f.uv = MatX2::Zero(max_id + 1, 2);
        f.valid.assign(max_id + 1, 0);
    }
    for (const Row& r : rows) {
        frames[r.frame].uv(r.id, 0) = r.u;
        frames[r.frame].uv(r.id, 1) = r.v;
        frames[r.frame].valid[r.id] = uint8_t(r.valid);
    }
    return frames;
}

void save_frame_params(const std::string& path, const std::vector<FrameParams>& frames) {
    nlohmann::json arr = nlohmann::json::array();
    for (const FrameParams& f : frames) {
        nlohmann::json rec;
        rec["psi"] = std::vector<double>(f.psi.data(), f.psi.data() + f.psi.size());
        rec["omega"] = {f.omega.x(), f.omega.y(), f.omega.z()};
        rec["global_rot"] = {f.global_rot.x(), f.global_rot.y(), f.global_rot.z()};
        rec["global_trans"] = {f.global_trans.x(), f.global_trans.y(), f.global_trans.z()};
        arr.push_back(rec);
    }
    write_text_file(path, arr.dump(2) + "\n");
}

std::vector<FrameParams> load_frame_params(const std::string& path) {
    const nlohmann::json arr = nlohmann::json::parse(read_text_file(path));
    std::vector<FrameParams> frames;
    for (const auto& rec : arr) {
        FrameParams f;
        const auto psi = rec.at("psi").get<std::vector<double>>();
        f.psi = Eigen::Map<const VecXd>(psi.data(), psi.size());
        auto vec3 = [&rec](const char* key) {
            const auto v = rec.at(key).get<std::vector<double>>();
            if (v.size() != 3) throw validation_error(std::string(key) + " must have 3 entries");
            return Vec3(v[0], v[1], v[2]);
        };
        f.omega = vec3("omega");
        f.global_rot = vec3("global_rot");
        f.global_trans = vec3("global_trans");
        f.normalize();
        frames.push_back(std::move(f));
    }
    return frames;
}

void save_camera(const std::string& path, const Camera& cam) {
    nlohmann::json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot[3 * r + c] = cam.rot(r, c);
    j["rot"] = rot;
    j["trans"] = {cam.trans.x(), cam.trans.y(), cam.trans.z()};
    write_text_file(path, j.dump(2) + "\n");
}

Camera load_camera(const std::string& path) {
    const nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    Camera cam;
    cam.fx = j.at("fx");
    cam.fy = j.at("fy");
    cam.cx = j.at("cx");
    cam.cy = j.at("cy");
    cam.width = j.at("width");
    cam.height = j.at("height");
    const auto rot = j.at("rot").get<std::vector<double>>();
    if (rot.size() != 9) throw validation_error("camera rot must have 9 entries");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cam.rot(r, c) = rot[3 * r + c];
    const auto trans = j.at("trans").get<std::vector<double>>();
    cam.trans = Vec3(trans[0], trans[1], trans[2]);
    cam.validate();
    return cam;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw validation_error("write failed for '" + path + "'");
}

}  // namespace headfit
