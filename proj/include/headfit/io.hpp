#pragma once

#include "headfit/model.hpp"
#include "headfit/raster.hpp"

#include <map>

namespace headfit {

// "HHM v1" container: a text header listing named arrays (dtype + shape) and
// optional meta key/value lines, followed by the raw array bytes
// little-endian in header order. Layout:
//
//   HHM v1\n
//   meta <key> <value>\n            (zero or more)
//   array <name> <f4|i4|u1> <d0> [d1 ...]\n
//   ...
//   end\n
//   <payload: arrays packed tightly in header order>
//
// f4 = IEEE 754 binary32 little-endian, i4 = int32 little-endian, u1 = byte.
class HhmFile {
public:
    struct ArrayDesc {
        std::string name;
        std::string dtype;  // "f4", "i4", "u1"
        std::vector<int> shape;
        size_t count() const;
    };

    std::map<std::string, std::string> meta;

    void add_f4(const std::string& name, const std::vector<int>& shape,
                const std::vector<float>& data);
    void add_i4(const std::string& name, const std::vector<int>& shape,
                const std::vector<int32_t>& data);
    void add_u1(const std::string& name, const std::vector<int>& shape,
                const std::vector<uint8_t>& data);

    bool has(const std::string& name) const;
    const ArrayDesc& desc(const std::string& name) const;
    std::vector<float> get_f4(const std::string& name) const;
    std::vector<int32_t> get_i4(const std::string& name) const;
    std::vector<uint8_t> get_u1(const std::string& name) const;

    void save(const std::string& path) const;
    static HhmFile load(const std::string& path);

    const std::vector<ArrayDesc>& arrays() const { return order_; }

private:
    std::vector<ArrayDesc> order_;
    std::map<std::string, std::vector<uint8_t>> payload_;  // raw little-endian bytes
    const std::vector<uint8_t>& raw(const std::string& name) const;
};

// Eigen bridges (fitting runs in doubles; files carry float32).
void hhm_add_matrix(HhmFile& file, const std::string& name, const MatXd& m);
void hhm_add_matrix(HhmFile& file, const std::string& name, const MatX3& m);
void hhm_add_vector(HhmFile& file, const std::string& name, const VecXd& v);
MatXd hhm_get_matrix(const HhmFile& file, const std::string& name);
MatX3 hhm_get_matrix3(const HhmFile& file, const std::string& name);
VecXd hhm_get_vector(const HhmFile& file, const std::string& name);

// HeadModel in an HHM v1 container.
void save_model(const HeadModel& model, const std::string& path);
HeadModel load_model(const std::string& path);

// PFM (portable float map), scale -1.0 = little-endian, rows bottom-to-top.
void write_pfm(const std::string& path, int width, int height, int channels,
               const std::vector<float>& data);
std::vector<float> read_pfm(const std::string& path, int& width, int& height, int& channels);

// PGM P5, maxval 255.
void write_pgm(const std::string& path, int width, int height, const std::vector<uint8_t>& data);
std::vector<uint8_t> read_pgm(const std::string& path, int& width, int& height);

// Buffer <-> file bridges. Depth +inf is stored as the largest finite float32
// and restored to +inf on load.
void save_normal_map(const std::string& path, const RenderBuffers& buf);
void save_depth_map(const std::string& path, const RenderBuffers& buf);
void save_coverage(const std::string& path, const RenderBuffers& buf);
void load_normal_map(const std::string& path, std::vector<double>& normal, int& w, int& h);
void load_depth_map(const std::string& path, std::vector<double>& depth, int& w, int& h);

// OBJ subset: v/f records only.
void write_obj(const std::string& path, const MatX3& positions, const FaceList& faces);
void read_obj(const std::string& path, MatX3& positions, FaceList& faces);

// Landmark CSV: header then "frame,landmark_id,u,v,valid".
struct LandmarkFrame {
    MatX2 uv;
    std::vector<uint8_t> valid;
};
void write_landmarks_csv(const std::string& path, const std::vector<LandmarkFrame>& frames);
std::vector<LandmarkFrame> read_landmarks_csv(const std::string& path);

// FrameParams sequence as a JSON array of records with keys
// psi / omega / global_rot / global_trans.
void save_frame_params(const std::string& path, const std::vector<FrameParams>& frames);
std::vector<FrameParams> load_frame_params(const std::string& path);

void save_camera(const std::string& path, const Camera& cam);
Camera load_camera(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace headfit
