#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "seedrecon/tensor.hpp"

namespace seedrecon {

// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  IoError(const std::filesystem::path& path, const std::string& what)
      : std::runtime_error(path.string() + ": " + what), path_(path) {}
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

// The bytes are not an NPY container this codec accepts. field() names the
// offending part: "magic", "version", "header_len", "header", "descr",
// "fortran_order", "shape" or "payload".
class NpyFormatError : public std::runtime_error {
 public:
  NpyFormatError(std::string field, const std::string& what)
      : std::runtime_error("npy " + field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// NPY version 1.0, dtype '<f4', C order. The header is laid out exactly as
// numpy.save lays it out, so files written here are byte-identical to
// numpy's for the same array.
std::vector<char> encode_npy(const Tensor& tensor);
Tensor decode_npy(std::string_view bytes);

Tensor read_npy(const std::filesystem::path& path);
void write_npy(const Tensor& tensor, const std::filesystem::path& path);

}  // namespace seedrecon
