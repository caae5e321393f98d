#pragma once

// Flat tensor files: `<stem>.bin` holds the values as little-endian float64 in
// row-major order; `<stem>.txt` is a `key = value` sidecar with at least
// `dims` (space separated, outermost first) and `dtype = f64le`, followed by
// free-form metadata keys in sorted order.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "evpose/detail/io_util.hpp"
#include "evpose/errors.hpp"

namespace evpose {

struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> data;
  std::map<std::string, std::string> meta;

  std::size_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  const std::string& require(const std::string& key) const {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError("tensor sidecar missing key '" + key + "'", 0);
    return it->second;
  }

  double require_double(const std::string& key) const {
    const auto v = detail::parse_number<double>(require(key));
    if (!v) throw FormatError("tensor sidecar key '" + key + "' is not a number", 0);
    return *v;
  }

  std::int64_t require_int(const std::string& key) const {
    const auto v = detail::parse_number<std::int64_t>(require(key));
    if (!v) throw FormatError("tensor sidecar key '" + key + "' is not an integer", 0);
    return *v;
  }
};

inline std::filesystem::path tensor_data_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".bin");
}

inline std::filesystem::path tensor_sidecar_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".txt");
}

inline std::string encode_tensor_sidecar(const Tensor& t) {
  std::string out = "dims =";
  for (auto d : t.dims) out += " " + std::to_string(d);
  out += "\ndtype = f64le\n";
  for (const auto& [k, v] : t.meta) {
    if (k == "dims" || k == "dtype") throw ValidationError("reserved tensor metadata key " + k);
    out += k + " = " + v + "\n";
  }
  return out;
}

inline std::vector<std::uint8_t> encode_tensor_data(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(t.data.size() * 8);
  for (double v : t.data) detail::put_le<double>(out, v);
  return out;
}

inline void write_tensor(const Tensor& t, const std::filesystem::path& stem) {
  if (t.element_count() != t.data.size()) throw ShapeMismatchError("tensor dims disagree with data");
  detail::write_bytes(tensor_data_path(stem), encode_tensor_data(t));
  detail::write_text(tensor_sidecar_path(stem), encode_tensor_sidecar(t));
}

inline Tensor read_tensor(const std::filesystem::path& stem) {
  Tensor t;
  auto kv = detail::parse_key_values(detail::read_lines(tensor_sidecar_path(stem)));
  const auto dims_it = kv.find("dims");
  if (dims_it == kv.end()) throw FormatError("tensor sidecar missing dims", 0);
  for (auto tok : detail::split_ws(dims_it->second)) {
    const auto d = detail::parse_number<std::size_t>(tok);
    if (!d) throw FormatError("bad tensor dimension", 0);
    t.dims.push_back(*d);
  }
  if (const auto it = kv.find("dtype"); it == kv.end() || it->second != "f64le") {
    throw FormatError("tensor dtype must be f64le", 0);
  }
  kv.erase("dims");
  kv.erase("dtype");
  t.meta = std::move(kv);
  const auto bytes = detail::read_bytes(tensor_data_path(stem));
  if (bytes.size() != t.element_count() * 8) {
    throw FormatError("tensor payload size disagrees with dims", bytes.size());
  }
  t.data.resize(t.element_count());
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = detail::get_le<double>(bytes, 8 * i);
  return t;
}

}  // namespace evpose
