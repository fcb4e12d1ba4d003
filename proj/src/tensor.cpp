#include "seedrecon/tensor.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace seedrecon {

std::size_t shape_numel(std::span<const std::size_t> shape) noexcept {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

Shape parse_shape(const std::string& text) {
  Shape shape;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    std::size_t dim = 0;
    auto [next, ec] = std::from_chars(p, end, dim);
    if (ec != std::errc{} || next == p || dim == 0)
      throw std::invalid_argument("malformed shape '" + text + "': expected positive dimensions like 16x64x64");
    shape.push_back(dim);
    p = next;
    if (p < end) {
      if (*p != 'x' && *p != 'X' && *p != ',')
        throw std::invalid_argument("malformed shape '" + text + "': unexpected separator");
      ++p;
      if (p == end) throw std::invalid_argument("malformed shape '" + text + "': trailing separator");
    }
  }
  if (shape.empty()) throw std::invalid_argument("empty shape");
  return shape;
}

namespace {

void check_shape(const Shape& shape, std::size_t payload) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0) throw std::invalid_argument("tensor shape " + shape_to_string(shape) + " has a zero dimension");
  if (shape_numel(shape) != payload)
    throw std::invalid_argument("tensor shape " + shape_to_string(shape) + " does not match payload of " +
                                std::to_string(payload) + " elements");
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_, data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (!std::isfinite(data_[i]))
      throw std::invalid_argument("tensor element " + std::to_string(i) + " is not finite");
}

Tensor::Tensor(Trusted, Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_, data_.size());
}

Tensor Tensor::from_trusted(Shape shape, std::vector<float> data) {
  return Tensor(Trusted{}, std::move(shape), std::move(data));
}

bool Tensor::bitwise_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

}  // namespace seedrecon
