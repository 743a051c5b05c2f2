#pragma once

// Binary tensor container.
//
// Layout (all integers little-endian):
//   magic    4 bytes  "CMCF"
//   version  u32      kContainerVersion
//   count    u32      number of tensors
//   per tensor:
//     name_len u16, name bytes (UTF-8)
//     dtype    u8     0 = f64, 1 = i32
//     ndim     u8
//     dims     ndim x u64
//     data     prod(dims) elements, row-major, IEEE-754 / two's complement
//
// Metadata lives in a JSON sidecar next to the container (`<file>.json`).
// Label rasters use class_count as the unlabeled / void id.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "cmcforge/annotate.hpp"
#include "cmcforge/nets.hpp"
#include "cmcforge/scene.hpp"

namespace cmcforge {

inline constexpr std::uint32_t kContainerVersion = 1;

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Writes to a sibling temp file, then renames over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

enum class DType : std::uint8_t { kF64 = 0, kI32 = 1 };

struct Tensor {
  DType dtype{DType::kF64};
  std::vector<std::uint64_t> dims;
  std::vector<double> f64;
  std::vector<std::int32_t> i32;

  std::uint64_t element_count() const;
};

class Container {
 public:
  void put_matrix(const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& m);
  void put_vector(const std::string& name, const Eigen::Ref<const Eigen::VectorXd>& v);
  void put_ivector(const std::string& name, const Eigen::Ref<const Eigen::VectorXi>& v);
  void put(const std::string& name, Tensor t);

  bool has(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Eigen::MatrixXd matrix(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
  Eigen::VectorXi ivector(const std::string& name) const;

  std::string serialize() const;
  static Container parse(std::string_view bytes);

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

 private:
  std::map<std::string, Tensor> tensors_;
};

// Writes `path` and `path.json` atomically.
void save_container(const std::filesystem::path& path, const Container& c, const nlohmann::json& meta);
Container load_container(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

void save_view(const std::filesystem::path& path, const CameraView& view);
CameraView load_view(const std::filesystem::path& path);

void save_cloud(const std::filesystem::path& path, const ScenePointCloud& cloud);
ScenePointCloud load_cloud(const std::filesystem::path& path);

void save_label_map(const std::filesystem::path& path, const SparseLabelMap& map, const nlohmann::json& params = {});
SparseLabelMap load_label_map(const std::filesystem::path& path);

struct Checkpoint {
  int epoch{0};
  std::string config_hash;
  std::vector<BranchState> branches;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cmcforge
