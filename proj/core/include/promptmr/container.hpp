#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "promptmr/ndarray.hpp"

// On-disk container shared by cases, reconstructions and checkpoints:
//
//   <dir>/manifest.json   UTF-8 JSON: magic, format_version, kind, free-form
//                         metadata, and an "arrays" list with name, file,
//                         dtype, shape, axes, order ("row-major"), byte_length
//   <dir>/<name>.bin      little-endian payload, one file per array
//
// dtypes: "complex64" (interleaved re/im float32), "float32", "float64".
// Readers validate magic, version and byte lengths and ignore unknown keys.

namespace promptmr {

enum class DType { complex64, float32, float64 };

const char* to_string(DType d);
DType dtype_from_string(const std::string& s);

struct ContainerArray {
  DType dtype = DType::float32;
  std::vector<std::string> axes;
  // Exactly one of these is populated, matching dtype.
  ComplexArray complex_data;
  RealArray real_data;
};

struct Container {
  std::string magic;
  int format_version = 1;
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, ContainerArray> arrays;

  void put(const std::string& name, const ComplexArray& a, std::vector<std::string> axes = {});
  void put(const std::string& name, const RealArray& a, std::vector<std::string> axes = {},
           DType dtype = DType::float32);
  const ComplexArray& complex(const std::string& name) const;
  const RealArray& real(const std::string& name) const;
  bool has(const std::string& name) const { return arrays.count(name) != 0; }
};

inline constexpr const char* kCaseMagic = "PROMPTMR-CASE";
inline constexpr const char* kCheckpointMagic = "PROMPTMR-CKPT";
inline constexpr int kFormatVersion = 1;

void write_container(const Container& c, const std::filesystem::path& dir);
/// `expected_magic` empty means accept any known magic.
Container read_container(const std::filesystem::path& dir, const std::string& expected_magic);

}  // namespace promptmr
