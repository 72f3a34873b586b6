#include "l2caf/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace l2caf {

int Tensor::checked_size(const std::vector<int>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  long long n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    n *= d;
    if (n > std::numeric_limits<int>::max()) throw ShapeError("tensor too large");
  }
  return static_cast<int>(n);
}

double Tensor::min() const {
  double m = std::numeric_limits<double>::infinity();
  for (double v : data_) m = std::min(m, v);
  return m;
}

double Tensor::max() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : data_) m = std::max(m, v);
  return m;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

int argmax(const Tensor& t) {
  int best = 0;
  for (int i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("cosine_similarity: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace l2caf
