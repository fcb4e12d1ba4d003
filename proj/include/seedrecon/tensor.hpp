#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace seedrecon {

using Shape = std::vector<std::size_t>;

// Product of all dimensions; zero for an empty shape.
std::size_t shape_numel(std::span<const std::size_t> shape) noexcept;

// "16x64x64"
std::string shape_to_string(std::span<const std::size_t> shape);

// Parses "16x64x64" or "16,64,64". Throws std::invalid_argument.
Shape parse_shape(const std::string& text);

// Flat float32 tensor in C order. A constructed tensor always has a
// non-empty shape of positive dimensions, a payload of exactly
// product(shape) elements, and only finite values. The default-constructed
// tensor is the empty placeholder.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data);

  // Skips the finiteness scan; for generators whose output is finite by
  // construction.
  static Tensor from_trusted(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> values() const noexcept { return data_; }
  std::span<float> values() noexcept { return data_; }
  const float* data() const noexcept { return data_.data(); }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  std::vector<float> release() && { return std::move(data_); }

  // Bitwise equality of shape and payload (distinguishes -0 from +0).
  bool bitwise_equal(const Tensor& other) const noexcept;

 private:
  struct Trusted {};
  Tensor(Trusted, Shape shape, std::vector<float> data);

  Shape shape_;
  std::vector<float> data_;
};

// The initial noise of a generation and the latent of an image share one
// representation.
using NoiseVector = Tensor;
using LatentVector = Tensor;

}  // namespace seedrecon
