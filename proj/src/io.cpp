#include "cmcforge/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "cmcforge/error.hpp"

namespace cmcforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

void atomic_write(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      throw IoError("write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("rename failed: " + path.string());
  }
}

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("container truncated");
  }
  std::string_view bytes_;
  std::size_t pos_{0};
};

}  // namespace

void Container::put(const std::string& name, Tensor t) {
  if (name.size() > 0xffff) throw ContractError("tensor name too long");
  tensors_[name] = std::move(t);
}

void Container::put_matrix(const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Tensor t;
  t.dtype = DType::kF64;
  t.dims = {std::uint64_t(m.rows()), std::uint64_t(m.cols())};
  t.f64.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.f64.data(), m.rows(),
                                                                                      m.cols()) = m;
  put(name, std::move(t));
}

void Container::put_vector(const std::string& name, const Eigen::Ref<const Eigen::VectorXd>& v) {
  Tensor t;
  t.dtype = DType::kF64;
  t.dims = {std::uint64_t(v.size())};
  t.f64.assign(v.data(), v.data() + v.size());
  put(name, std::move(t));
}

void Container::put_ivector(const std::string& name, const Eigen::Ref<const Eigen::VectorXi>& v) {
  Tensor t;
  t.dtype = DType::kI32;
  t.dims = {std::uint64_t(v.size())};
  t.i32.assign(v.data(), v.data() + v.size());
  put(name, std::move(t));
}

const Tensor& Container::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IoError("container has no tensor '" + name + "'");
  return it->second;
}

Eigen::MatrixXd Container::matrix(const std::string& name) const {
  const Tensor& t = at(name);
  if (t.dtype != DType::kF64 || t.dims.size() != 2) throw IoError("tensor '" + name + "' is not an f64 matrix");
  const auto rows = static_cast<Eigen::Index>(t.dims[0]);
  const auto cols = static_cast<Eigen::Index>(t.dims[1]);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.f64.data(), rows,
                                                                                                 cols);
}

Eigen::VectorXd Container::vector(const std::string& name) const {
  const Tensor& t = at(name);
  if (t.dtype != DType::kF64 || t.dims.size() != 1) throw IoError("tensor '" + name + "' is not an f64 vector");
  return Eigen::Map<const Eigen::VectorXd>(t.f64.data(), static_cast<Eigen::Index>(t.f64.size()));
}

Eigen::VectorXi Container::ivector(const std::string& name) const {
  const Tensor& t = at(name);
  if (t.dtype != DType::kI32 || t.dims.size() != 1) throw IoError("tensor '" + name + "' is not an i32 vector");
  return Eigen::Map<const Eigen::VectorXi>(t.i32.data(), static_cast<Eigen::Index>(t.i32.size()));
}

std::string Container::serialize() const {
  std::string out = "CMCF";
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint64_t>(out, d);
    if (t.dtype == DType::kF64)
      for (double x : t.f64) put_le<double>(out, x);
    else
      for (std::int32_t x : t.i32) put_le<std::int32_t>(out, x);
  }
  return out;
}

Container Container::parse(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != "CMCF") throw IoError("bad container magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kContainerVersion) throw IoError("unsupported container version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  Container c;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name(r.take(name_len));
    Tensor t;
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw IoError("unknown tensor dtype");
    t.dtype = static_cast<DType>(dtype);
    const auto ndim = r.get<std::uint8_t>();
    for (int d = 0; d < ndim; ++d) t.dims.push_back(r.get<std::uint64_t>());
    const std::uint64_t n = t.element_count();
    const std::size_t width = t.dtype == DType::kF64 ? 8 : 4;
    if (n > bytes.size() / width) throw IoError("container truncated");
    if (t.dtype == DType::kF64) {
      t.f64.resize(n);
      for (auto& x : t.f64) x = r.get<double>();
    } else {
      t.i32.resize(n);
      for (auto& x : t.i32) x = r.get<std::int32_t>();
    }
    c.tensors_[name] = std::move(t);
  }
  if (!r.done()) throw IoError("trailing bytes in container");
  return c;
}

void save_container(const fs::path& path, const Container& c, const json& meta) {
  const std::string bytes = c.serialize();
  json sidecar = meta;
  sidecar["format"] = "cmcf";
  sidecar["version"] = kContainerVersion;
  sidecar["sha256"] = sha256_hex(bytes);
  atomic_write(path, bytes);
  fs::path side = path;
  side += ".json";
  atomic_write(side, sidecar.dump(2) + "\n");
}

Container load_container(const fs::path& path, json* meta) {
  const std::string bytes = read_file(path);
  Container c = Container::parse(bytes);
  fs::path side = path;
  side += ".json";
  if (meta != nullptr || fs::exists(side)) {
    json j;
    try {
      j = json::parse(read_file(side));
    } catch (const json::exception& e) {
      throw IoError("bad sidecar " + side.string() + ": " + e.what());
    }
    if (j.contains("sha256") && j["sha256"].get<std::string>() != sha256_hex(bytes))
      throw IoError("checksum mismatch for " + path.string());
    if (meta != nullptr) *meta = std::move(j);
  }
  return c;
}

namespace {

json pose_json(const Pose& pose) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) r.push_back({pose.rotation(i, 0), pose.rotation(i, 1), pose.rotation(i, 2)});
  return {{"rotation", r}, {"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) p.rotation(i, k) = j.at("rotation").at(i).at(k).get<double>();
  for (int i = 0; i < 3; ++i) p.translation[i] = j.at("translation").at(i).get<double>();
  return p;
}

json intrinsics_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from_json(const json& j) {
  Intrinsics k;
  k.fx = j.at("fx");
  k.fy = j.at("fy");
  k.cx = j.at("cx");
  k.cy = j.at("cy");
  k.width = j.at("width");
  k.height = j.at("height");
  return k;
}

template <typename F>
auto guarded(const fs::path& path, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw IoError("bad metadata in " + path.string() + ": " + e.what());
  }
}

}  // namespace

void save_view(const fs::path& path, const CameraView& view) {
  Container c;
  c.put_matrix("features", view.features);
  c.put_ivector("gt_labels", view.gt_labels);
  c.put_vector("gt_depth", view.gt_depth);
  save_container(path, c,
                 {{"kind", "camera_view"},
                  {"view_id", view.view_id},
                  {"class_count", view.class_count},
                  {"intrinsics", intrinsics_json(view.intrinsics)},
                  {"pose", pose_json(view.pose)}});
}

CameraView load_view(const fs::path& path) {
  json meta;
  Container c = load_container(path, &meta);
  return guarded(path, [&] {
    CameraView v;
    v.view_id = meta.at("view_id");
    v.class_count = meta.at("class_count");
    v.intrinsics = intrinsics_from_json(meta.at("intrinsics"));
    v.pose = pose_from_json(meta.at("pose"));
    v.features = c.matrix("features");
    v.gt_labels = c.ivector("gt_labels");
    v.gt_depth = c.vector("gt_depth");
    return v;
  });
}

void save_cloud(const fs::path& path, const ScenePointCloud& cloud) {
  Container c;
  c.put_matrix("positions", Eigen::MatrixXd(cloud.positions));
  c.put_vector("rec_confidence", cloud.rec_confidence);
  c.put_matrix("features", cloud.features);
  c.put_ivector("sparse_labels", cloud.sparse_labels);
  Eigen::MatrixXd src(cloud.size(), 3);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const PixelCoord& p = cloud.source[static_cast<std::size_t>(i)];
    src.row(i) << p.u, p.v, double(p.view_id);
  }
  c.put_matrix("source", src);
  save_container(path, c,
                 {{"kind", "point_cloud"}, {"class_count", cloud.class_count}, {"scene_scale", cloud.scene_scale}});
}

ScenePointCloud load_cloud(const fs::path& path) {
  json meta;
  Container c = load_container(path, &meta);
  return guarded(path, [&] {
    ScenePointCloud cloud;
    cloud.class_count = meta.at("class_count");
    cloud.scene_scale = meta.at("scene_scale");
    cloud.positions = c.matrix("positions");
    cloud.rec_confidence = c.vector("rec_confidence");
    cloud.features = c.matrix("features");
    cloud.sparse_labels = c.ivector("sparse_labels");
    const Eigen::MatrixXd src = c.matrix("source");
    cloud.source.resize(static_cast<std::size_t>(src.rows()));
    for (Eigen::Index i = 0; i < src.rows(); ++i)
      cloud.source[static_cast<std::size_t>(i)] = PixelCoord{src(i, 0), src(i, 1), static_cast<int>(src(i, 2))};
    return cloud;
  });
}

void save_label_map(const fs::path& path, const SparseLabelMap& map, const json& params) {
  Container c;
  c.put_ivector("labels", map.labels);
  save_container(path, c,
                 {{"kind", "label_map"},
                  {"label_kind", to_string(map.kind)},
                  {"view_id", map.view_id},
                  {"width", map.width},
                  {"height", map.height},
                  {"class_count", map.class_count},
                  {"unlabeled_id", map.class_count},
                  {"coverage", map.coverage()},
                  {"params", params}});
}

SparseLabelMap load_label_map(const fs::path& path) {
  json meta;
  Container c = load_container(path, &meta);
  return guarded(path, [&] {
    SparseLabelMap m;
    m.kind = label_kind_from_string(meta.at("label_kind").get<std::string>());
    m.view_id = meta.at("view_id");
    m.width = meta.at("width");
    m.height = meta.at("height");
    m.class_count = meta.at("class_count");
    m.labels = c.ivector("labels");
    return m;
  });
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  Container c;
  json branches = json::array();
  for (const BranchState& b : ckpt.branches) {
    const std::string p = std::string(to_string(b.modality)) + ".";
    c.put_vector(p + "student", b.student.params());
    c.put_vector(p + "teacher", b.teacher.params());
    c.put_vector(p + "first_moment", b.first_moment);
    c.put_vector(p + "second_moment", b.second_moment);
    branches.push_back({{"modality", to_string(b.modality)},
                        {"input_dim", b.student.input_dim()},
                        {"hidden_dim", b.student.hidden_dim()},
                        {"output_dim", b.student.output_dim()},
                        {"activation", b.student.activation() == Activation::kTanh ? "tanh" : "identity"},
                        {"step_count", b.step_count}});
  }
  save_container(path, c,
                 {{"kind", "checkpoint"}, {"epoch", ckpt.epoch}, {"config_hash", ckpt.config_hash},
                  {"branches", branches}});
}

Checkpoint load_checkpoint(const fs::path& path) {
  json meta;
  Container c = load_container(path, &meta);
  return guarded(path, [&] {
    Checkpoint ckpt;
    ckpt.epoch = meta.at("epoch");
    ckpt.config_hash = meta.at("config_hash");
    for (const json& b : meta.at("branches")) {
      const std::string name = b.at("modality");
      const Modality modality = name == "2d" ? Modality::k2d : Modality::k3d;
      const Activation act = b.at("activation") == "tanh" ? Activation::kTanh : Activation::kIdentity;
      MicroNet net(b.at("input_dim"), b.at("hidden_dim"), b.at("output_dim"), act);
      BranchState s = BranchState::create(modality, net);
      const std::string p = name + ".";
      s.student.params() = c.vector(p + "student");
      s.teacher.params() = c.vector(p + "teacher");
      s.first_moment = c.vector(p + "first_moment");
      s.second_moment = c.vector(p + "second_moment");
      if (s.student.params().size() != net.parameter_count() || s.teacher.params().size() != net.parameter_count())
        throw IoError("checkpoint parameter size mismatch in " + path.string());
      s.step_count = b.at("step_count");
      ckpt.branches.push_back(std::move(s));
    }
    return ckpt;
  });
}

}  // namespace cmcforge
