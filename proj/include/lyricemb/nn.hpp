#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "lyricemb/binary_io.hpp"
#include "lyricemb/common.hpp"
#include "lyricemb/rng.hpp"

namespace lyricemb::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// y = W x + b, with W stored out x in. Biases are kept as one-column
// matrices so every parameter block has the same type.
struct Dense {
  Matrix weight;
  Matrix bias;

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out) : weight(Matrix::Zero(out, in)), bias(Matrix::Zero(out, 1)) {}

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }

  // Glorot-uniform weights, zero bias.
  void init(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in() + out()));
    for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = (2.0 * uniform01(rng) - 1.0) * limit;
    bias.setZero();
  }

  // X is in x batch; returns out x batch.
  Matrix forward(const Matrix& x) const {
    Matrix y = weight * x;
    y.colwise() += bias.col(0);
    return y;
  }
};

using ParameterList = std::vector<Matrix*>;
using GradientList = std::vector<Matrix>;

inline GradientList zeros_like(const ParameterList& params) {
  GradientList g;
  g.reserve(params.size());
  for (const auto* p : params) g.push_back(Matrix::Zero(p->rows(), p->cols()));
  return g;
}

inline void accumulate(GradientList& into, const GradientList& from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

inline bool all_finite(const GradientList& g) {
  for (const auto& m : g) {
    if (!m.allFinite()) return false;
  }
  return true;
}

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const ParameterList& params, AdamOptions opts) : opts_(opts), m_(zeros_like(params)), v_(zeros_like(params)) {}

  void step(const ParameterList& params, const GradientList& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * grads[i];
      v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grads[i].cwiseProduct(grads[i]);
      const Matrix m_hat = m_[i] / c1;
      const Matrix v_hat = v_[i] / c2;
      *params[i] -= (opts_.learning_rate * m_hat.array() / (v_hat.array().sqrt() + opts_.epsilon)).matrix();
    }
  }

 private:
  AdamOptions opts_;
  GradientList m_;
  GradientList v_;
  std::uint64_t t_ = 0;
};

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

inline Matrix relu_grad(const Matrix& pre, const Matrix& upstream) {
  return (pre.array() > 0.0).select(upstream, 0.0);
}

// Column-wise softmax of logits (classes x batch).
inline Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - mx).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Row-major f32 block: u32 rows, u32 cols, then values.
inline void write_matrix(BinaryWriter& w, const Matrix& m) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.put<float>(static_cast<float>(m(r, c)));
  }
}

inline Matrix read_matrix(BinaryReader& r) {
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.get<float>();
  }
  return m;
}

}  // namespace lyricemb::nn
