#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace galflow {

using real_t = double;

/// Symmetric DxD tensor with structural symmetry: only the independent
/// components are stored (D=1: xx; D=2: xx, yy, xy).
///
/// Two coordinate views are provided:
///  - packed(): the raw independent components;
///  - iso(): isometric coordinates where off-diagonal entries carry a sqrt(2)
///    factor, so the Euclidean norm of iso() equals the Frobenius norm and the
///    Euclidean dot product equals the full double contraction A:B. All
///    integration/optimization over tensor space runs in iso coordinates, which
///    makes radial kernels genuinely radial.
template <int Dim>
struct SymTensor {
  static_assert(Dim == 1 || Dim == 2, "supported spatial dimensions: 1, 2");

  static constexpr int dim = Dim;
  static constexpr int packed_size = Dim * (Dim + 1) / 2;

  using Packed = Eigen::Matrix<real_t, packed_size, 1>;
  using Iso = Eigen::Matrix<real_t, packed_size, 1>;
  using Full = Eigen::Matrix<real_t, Dim, Dim>;
  using Vec = Eigen::Matrix<real_t, Dim, 1>;

  Packed p = Packed::Zero();

  SymTensor() = default;
  explicit SymTensor(const Packed& packed) : p(packed) {}

  static SymTensor Zero() { return SymTensor(); }

  static SymTensor Identity() {
    SymTensor t;
    for (int i = 0; i < Dim; ++i) t.p[i] = 1.0;
    return t;
  }

  /// Symmetrize an arbitrary square matrix: 0.5 * (m + m^T).
  static SymTensor FromFull(const Full& m) {
    SymTensor t;
    for (int i = 0; i < Dim; ++i) t.p[i] = m(i, i);
    if constexpr (Dim == 2) t.p[2] = 0.5 * (m(0, 1) + m(1, 0));
    return t;
  }

  static SymTensor FromIso(const Iso& y) {
    SymTensor t;
    t.p = y;
    if constexpr (Dim == 2) t.p[2] = y[2] / std::sqrt(real_t(2));
    return t;
  }

  Iso iso() const {
    Iso y = p;
    if constexpr (Dim == 2) y[2] = p[2] * std::sqrt(real_t(2));
    return y;
  }

  Full full() const {
    Full m;
    for (int i = 0; i < Dim; ++i) m(i, i) = p[i];
    if constexpr (Dim == 2) {
      m(0, 1) = p[2];
      m(1, 0) = p[2];
    }
    return m;
  }

  real_t operator()(int i, int j) const {
    if (i == j) return p[i];
    return p[2];  // Dim == 2 only; (0,1) and (1,0) share storage
  }

  real_t trace() const {
    real_t t = 0;
    for (int i = 0; i < Dim; ++i) t += p[i];
    return t;
  }

  SymTensor operator+(const SymTensor& o) const { return SymTensor(Packed(p + o.p)); }
  SymTensor operator-(const SymTensor& o) const { return SymTensor(Packed(p - o.p)); }
  SymTensor operator*(real_t s) const { return SymTensor(Packed(p * s)); }
  SymTensor& operator+=(const SymTensor& o) {
    p += o.p;
    return *this;
  }
};

template <int Dim>
inline SymTensor<Dim> operator*(real_t s, const SymTensor<Dim>& t) {
  return t * s;
}

/// Full double contraction A:B = sum_ij A_ij B_ij.
template <int Dim>
inline real_t ddot(const SymTensor<Dim>& a, const SymTensor<Dim>& b) {
  return a.iso().dot(b.iso());
}

/// Contraction of a symmetric tensor against an arbitrary matrix, S : G.
template <int Dim>
inline real_t ddot(const SymTensor<Dim>& s, const Eigen::Matrix<real_t, Dim, Dim>& g) {
  real_t acc = 0;
  for (int i = 0; i < Dim; ++i)
    for (int j = 0; j < Dim; ++j) acc += s(i, j) * g(i, j);
  return acc;
}

template <int Dim>
inline real_t frobenius_norm(const SymTensor<Dim>& a) {
  return a.iso().norm();
}

/// Trace-free part: A - (tr A / Dim) * I. Identically zero when Dim == 1.
template <int Dim>
inline SymTensor<Dim> deviatoric(const SymTensor<Dim>& a) {
  SymTensor<Dim> out = a;
  const real_t mean = a.trace() / Dim;
  for (int i = 0; i < Dim; ++i) out.p[i] -= mean;
  return out;
}

/// Frobenius norm of the gradient matrix (not symmetrized).
template <int Dim>
inline real_t frobenius_norm(const Eigen::Matrix<real_t, Dim, Dim>& g) {
  return g.norm();
}

}  // namespace galflow
