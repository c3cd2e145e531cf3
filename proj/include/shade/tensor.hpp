#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace shade {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major float tensor with an optional same-shape gradient buffer.
// Activations use N x C x H x W layout.
struct Tensor {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until ensure_grad()

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();
  void zero_grad();

  float& at(std::initializer_list<int64_t> idx);
  float at(std::initializer_list<int64_t> idx) const;

  bool all_finite() const;
  // Throws std::runtime_error naming `what` when a NaN/Inf is present.
  void check_finite(const std::string& what) const;
};

// Labels and masks: dense row-major unsigned byte tensor.
struct ByteTensor {
  Shape shape;
  std::vector<uint8_t> data;

  ByteTensor() = default;
  explicit ByteTensor(Shape s, uint8_t fill = 0);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  uint8_t& at(std::initializer_list<int64_t> idx);
  uint8_t at(std::initializer_list<int64_t> idx) const;
};

}  // namespace shade
