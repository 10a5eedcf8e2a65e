#include "promptmr/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

namespace promptmr {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(DType d) {
  switch (d) {
    case DType::complex64: return "complex64";
    case DType::float32: return "float32";
    case DType::float64: return "float64";
  }
  return "?";
}

DType dtype_from_string(const std::string& s) {
  if (s == "complex64") return DType::complex64;
  if (s == "float32") return DType::float32;
  if (s == "float64") return DType::float64;
  throw FormatError("dtype", "unknown dtype '" + s + "'");
}

namespace {

std::size_t element_bytes(DType d) {
  switch (d) {
    case DType::complex64: return 8;
    case DType::float32: return 4;
    case DType::float64: return 8;
  }
  return 0;
}

template <class U>
void put_le(std::string& out, U bits) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

template <class U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(p[b]) << (8 * b);
  return v;
}

std::string encode(const ContainerArray& a) {
  std::string out;
  switch (a.dtype) {
    case DType::complex64:
      out.reserve(a.complex_data.size() * 8);
      for (auto v : a.complex_data.vec()) {
        put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v.real())));
        put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v.imag())));
      }
      break;
    case DType::float32:
      out.reserve(a.real_data.size() * 4);
      for (auto v : a.real_data.vec()) put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      break;
    case DType::float64:
      out.reserve(a.real_data.size() * 8);
      for (auto v : a.real_data.vec()) put_le(out, std::bit_cast<std::uint64_t>(v));
      break;
  }
  return out;
}

const std::set<std::string> kReserved = {"magic", "format_version", "kind", "arrays"};

}  // namespace

void Container::put(const std::string& name, const ComplexArray& a, std::vector<std::string> axes) {
  ContainerArray ca;
  ca.dtype = DType::complex64;
  ca.axes = std::move(axes);
  ca.complex_data = a;
  arrays[name] = std::move(ca);
}

void Container::put(const std::string& name, const RealArray& a, std::vector<std::string> axes, DType dtype) {
  if (dtype == DType::complex64) throw ShapeError("Container::put: real array stored as complex64");
  ContainerArray ca;
  ca.dtype = dtype;
  ca.axes = std::move(axes);
  ca.real_data = a;
  arrays[name] = std::move(ca);
}

const ComplexArray& Container::complex(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw FormatError("arrays", "missing array '" + name + "'");
  if (it->second.dtype != DType::complex64) throw FormatError("arrays." + name + ".dtype", "expected complex64");
  return it->second.complex_data;
}

const RealArray& Container::real(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw FormatError("arrays", "missing array '" + name + "'");
  if (it->second.dtype == DType::complex64) throw FormatError("arrays." + name + ".dtype", "expected a real dtype");
  return it->second.real_data;
}

void write_container(const Container& c, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest = c.meta.is_object() ? c.meta : json::object();
  manifest["magic"] = c.magic;
  manifest["format_version"] = c.format_version;
  manifest["kind"] = c.kind;
  json arrays = json::array();
  for (const auto& [name, a] : c.arrays) {
    const std::string payload = encode(a);
    const std::string file = name + ".bin";
    std::ofstream os(dir / file, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + (dir / file).string() + " for writing");
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    const Shape& shape = a.dtype == DType::complex64 ? a.complex_data.shape() : a.real_data.shape();
    arrays.push_back({{"name", name},
                      {"file", file},
                      {"dtype", to_string(a.dtype)},
                      {"shape", shape},
                      {"axes", a.axes},
                      {"order", "row-major"},
                      {"byte_length", payload.size()}});
  }
  manifest["arrays"] = arrays;
  std::ofstream ms(dir / "manifest.json", std::ios::trunc);
  if (!ms) throw DataError("cannot write manifest in " + dir.string());
  ms << manifest.dump(2) << "\n";
}

Container read_container(const fs::path& dir, const std::string& expected_magic) {
  std::ifstream ms(dir / "manifest.json");
  if (!ms) throw DataError("missing manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(ms);
  } catch (const json::exception& e) {
    throw FormatError("manifest.json", e.what());
  }
  auto field = [&](const char* key) -> const json& {
    if (!manifest.contains(key)) throw FormatError(key, "missing");
    return manifest.at(key);
  };

  Container c;
  const json& magic = field("magic");
  if (!magic.is_string()) throw FormatError("magic", "not a string");
  c.magic = magic.get<std::string>();
  if (!expected_magic.empty() && c.magic != expected_magic) {
    throw FormatError("magic", "expected '" + expected_magic + "', found '" + c.magic + "'");
  }
  if (expected_magic.empty() && c.magic != kCaseMagic && c.magic != kCheckpointMagic) {
    throw FormatError("magic", "unrecognised magic '" + c.magic + "'");
  }
  const json& version = field("format_version");
  if (!version.is_number_integer() || version.get<int>() != kFormatVersion) {
    throw FormatError("format_version", "unsupported version " + version.dump());
  }
  c.format_version = version.get<int>();
  c.kind = manifest.value("kind", std::string{});
  for (auto it = manifest.begin(); it != manifest.end(); ++it)
    if (!kReserved.count(it.key())) c.meta[it.key()] = it.value();

  const json& arrays = field("arrays");
  if (!arrays.is_array()) throw FormatError("arrays", "not a list");
  for (const auto& entry : arrays) {
    std::string name, file;
    Shape shape;
    DType dtype;
    std::size_t byte_length = 0;
    try {
      name = entry.at("name").get<std::string>();
    } catch (const json::exception& e) {
      throw FormatError("arrays[].name", e.what());
    }
    const std::string where = "arrays." + name;
    try {
      file = entry.at("file").get<std::string>();
      shape = entry.at("shape").get<Shape>();
      byte_length = entry.at("byte_length").get<std::size_t>();
    } catch (const json::exception& e) {
      throw FormatError(where, e.what());
    }
    if (entry.contains("order") && entry.at("order") != "row-major") throw FormatError(where + ".order", "only row-major is supported");
    dtype = dtype_from_string(entry.value("dtype", std::string{}));
    const std::size_t expected = shape_size(shape) * element_bytes(dtype);
    if (byte_length != expected) {
      throw FormatError(where + ".byte_length",
                        "declares " + std::to_string(byte_length) + " bytes but shape needs " + std::to_string(expected));
    }
    std::ifstream is(dir / file, std::ios::binary);
    if (!is) throw DataError("missing payload " + (dir / file).string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (buf.size() != byte_length) {
      throw LengthError("payload " + file + " has " + std::to_string(buf.size()) + " bytes, manifest declares " +
                        std::to_string(byte_length));
    }
    ContainerArray a;
    a.dtype = dtype;
    if (entry.contains("axes")) a.axes = entry.at("axes").get<std::vector<std::string>>();
    const std::size_t n = shape_size(shape);
    if (dtype == DType::complex64) {
      std::vector<cdouble> v(n);
      for (std::size_t i = 0; i < n; ++i) {
        const float re = std::bit_cast<float>(get_le<std::uint32_t>(&buf[8 * i]));
        const float im = std::bit_cast<float>(get_le<std::uint32_t>(&buf[8 * i + 4]));
        v[i] = cdouble(re, im);
      }
      a.complex_data = ComplexArray(shape, std::move(v));
    } else if (dtype == DType::float32) {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<float>(get_le<std::uint32_t>(&buf[4 * i]));
      a.real_data = RealArray(shape, std::move(v));
    } else {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<double>(get_le<std::uint64_t>(&buf[8 * i]));
      a.real_data = RealArray(shape, std::move(v));
    }
    c.arrays[name] = std::move(a);
  }
  return c;
}

}  // namespace promptmr
