#include "shade/tensor.hpp"

#include <cmath>
#include <sstream>

namespace shade {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

template <typename T>
int64_t flat_index(const Shape& shape, std::initializer_list<int64_t> idx, const T&) {
  if (idx.size() != shape.size())
    throw std::runtime_error("tensor index rank mismatch for shape " + shape_str(shape));
  int64_t flat = 0;
  size_t i = 0;
  for (int64_t v : idx) {
    if (v < 0 || v >= shape[i])
      throw std::runtime_error("tensor index out of range for shape " + shape_str(shape));
    flat = flat * shape[i] + v;
    ++i;
  }
  return flat;
}

}  // namespace

Tensor::Tensor(Shape s, float fill) : shape(std::move(s)) {
  for (int64_t e : shape)
    if (e <= 0) throw std::runtime_error("non-positive tensor extent in " + shape_str(shape));
  data.assign(static_cast<size_t>(numel(shape)), fill);
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
}

void Tensor::zero_grad() {
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0f);
}

float& Tensor::at(std::initializer_list<int64_t> idx) {
  return data[static_cast<size_t>(flat_index(shape, idx, 0))];
}

float Tensor::at(std::initializer_list<int64_t> idx) const {
  return data[static_cast<size_t>(flat_index(shape, idx, 0))];
}

bool Tensor::all_finite() const {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::check_finite(const std::string& what) const {
  if (!all_finite()) throw std::runtime_error("non-finite values in " + what);
}

ByteTensor::ByteTensor(Shape s, uint8_t fill) : shape(std::move(s)) {
  for (int64_t e : shape)
    if (e <= 0) throw std::runtime_error("non-positive tensor extent in " + shape_str(shape));
  data.assign(static_cast<size_t>(numel(shape)), fill);
}

uint8_t& ByteTensor::at(std::initializer_list<int64_t> idx) {
  return data[static_cast<size_t>(flat_index(shape, idx, 0))];
}

uint8_t ByteTensor::at(std::initializer_list<int64_t> idx) const {
  return data[static_cast<size_t>(flat_index(shape, idx, 0))];
}

}  // namespace shade
