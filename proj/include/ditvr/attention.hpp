#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ditvr {

// Numerically stable row-wise softmax.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax_rows(
    const Eigen::MatrixBase<Derived>& logits) {
  using Matrix = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix out = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

// softmax(Q K^T / sqrt(d_head)) V, computed independently for each of `heads`
// equal column slices. When `weights` is given it receives one
// (queries x keys) matrix per head.
template <typename DQ, typename DK, typename DV>
Eigen::Matrix<typename DQ::Scalar, Eigen::Dynamic, Eigen::Dynamic> scaled_dot_product_attention(
    const Eigen::MatrixBase<DQ>& q, const Eigen::MatrixBase<DK>& k, const Eigen::MatrixBase<DV>& v, int heads = 1,
    std::vector<Eigen::Matrix<typename DQ::Scalar, Eigen::Dynamic, Eigen::Dynamic>>* weights = nullptr) {
  using Scalar = typename DQ::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (heads < 1 || q.cols() % heads != 0 || v.cols() % heads != 0)
    throw std::invalid_argument("attention: feature width not divisible by head count");
  if (q.cols() != k.cols()) throw std::invalid_argument("attention: query/key width mismatch");
  if (k.rows() != v.rows()) throw std::invalid_argument("attention: key/value count mismatch");
  if (k.rows() == 0) throw std::invalid_argument("attention: no keys");
  const Eigen::Index dh = q.cols() / heads;
  const Eigen::Index dvh = v.cols() / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  Matrix out(q.rows(), v.cols());
  if (weights) weights->clear();
  for (int h = 0; h < heads; ++h) {
    Matrix w = softmax_rows((q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale);
    out.middleCols(h * dvh, dvh).noalias() = w * v.middleCols(h * dvh, dvh);
    if (weights) weights->push_back(std::move(w));
  }
  return out;
}

// tanh approximation of GELU.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gelu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar c = std::sqrt(Scalar(2) / Scalar(3.14159265358979323846));
  return x.unaryExpr([c](Scalar v) {
    return Scalar(0.5) * v * (Scalar(1) + std::tanh(c * (v + Scalar(0.044715) * v * v * v)));
  });
}

}  // namespace ditvr
