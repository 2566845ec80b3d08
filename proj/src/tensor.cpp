#include <numeric>
#include <sstream>
#include <stdexcept>

#include "siq/nn.hpp"

namespace siq::nn {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != element_count(shape_)) {
    throw std::invalid_argument("tensor of shape " + shape_string() + " cannot hold " +
                                std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw std::invalid_argument("expected rank-2 tensor, got " + shape_string());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) throw std::invalid_argument("expected rank-2 tensor, got " + shape_string());
  return shape_[1];
}

double Tensor::item() const {
  if (values_.size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_string());
  return values_[0];
}

std::span<const double> Tensor::row(std::size_t r) const {
  std::size_t c = cols();
  if (r >= rows()) throw std::out_of_range("row " + std::to_string(r) + " of tensor " + shape_string());
  return std::span<const double>(values_).subspan(r * c, c);
}

std::string Tensor::shape_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out << 'x';
    out << shape_[i];
  }
  out << ']';
  return out.str();
}

void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_string() +
                              " and " + b.shape_string());
}

}  // namespace siq::nn
