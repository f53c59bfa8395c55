#pragma once

// Fixed-size 2x2 helpers for single-mode phase-space quantities.
//
// Symmetric matrices (covariances and their parameter derivatives) are kept
// as three independent entries so that symmetry holds by construction.

#include <array>
#include <cmath>

namespace qmetro {

struct Vec2 {
  double q = 0.0;
  double p = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.q + b.q, a.p + b.p}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.q - b.q, a.p - b.p}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.q, s * a.p}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.q * b.q + a.p * b.p; }
inline double norm(Vec2 a) { return std::hypot(a.q, a.p); }

/// General 2x2 matrix, row-major.
struct Mat2 {
  double a11 = 0.0, a12 = 0.0;
  double a21 = 0.0, a22 = 0.0;

  static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static constexpr Mat2 rotation(double theta_cos, double theta_sin) {
    return {theta_cos, -theta_sin, theta_sin, theta_cos};
  }

  constexpr Mat2 transposed() const { return {a11, a21, a12, a22}; }
  constexpr double trace() const { return a11 + a22; }
  constexpr double det() const { return a11 * a22 - a12 * a21; }

  friend constexpr Mat2 operator*(const Mat2& x, const Mat2& y) {
    return {x.a11 * y.a11 + x.a12 * y.a21, x.a11 * y.a12 + x.a12 * y.a22,
            x.a21 * y.a11 + x.a22 * y.a21, x.a21 * y.a12 + x.a22 * y.a22};
  }
  friend constexpr Vec2 operator*(const Mat2& m, Vec2 v) {
    return {m.a11 * v.q + m.a12 * v.p, m.a21 * v.q + m.a22 * v.p};
  }
  friend constexpr bool operator==(const Mat2&, const Mat2&) = default;
};

/// Symmetric 2x2 matrix [[qq, qp], [qp, pp]].
struct Sym2 {
  double qq = 0.0;
  double qp = 0.0;
  double pp = 0.0;

  static constexpr Sym2 identity() { return {1.0, 0.0, 1.0}; }
  static constexpr Sym2 diag(double a, double b) { return {a, 0.0, b}; }
  /// Symmetric part (M + M^T)/2 of a general matrix.
  static constexpr Sym2 symmetrize(const Mat2& m) {
    return {m.a11, 0.5 * (m.a12 + m.a21), m.a22};
  }

  constexpr Mat2 full() const { return {qq, qp, qp, pp}; }
  constexpr double trace() const { return qq + pp; }
  constexpr double det() const { return qq * pp - qp * qp; }

  /// Eigenvalues (smaller, larger).
  std::array<double, 2> eigenvalues() const {
    const double half_tr = 0.5 * (qq + pp);
    const double half_diff = 0.5 * (qq - pp);
    const double radius = std::hypot(half_diff, qp);
    const double hi = half_tr + radius;
    // det/hi avoids cancellation for strongly squeezed matrices.
    const double lo = hi > 0.0 ? det() / hi : half_tr - radius;
    return {lo, hi};
  }

  /// Inverse; caller guarantees det() != 0.
  constexpr Sym2 inverse() const {
    const double d = det();
    return {pp / d, -qp / d, qq / d};
  }

  /// Quadratic form v^T S v.
  constexpr double quad(Vec2 v) const {
    return qq * v.q * v.q + 2.0 * qp * v.q * v.p + pp * v.p * v.p;
  }

  friend constexpr Sym2 operator+(Sym2 a, Sym2 b) { return {a.qq + b.qq, a.qp + b.qp, a.pp + b.pp}; }
  friend constexpr Sym2 operator-(Sym2 a, Sym2 b) { return {a.qq - b.qq, a.qp - b.qp, a.pp - b.pp}; }
  friend constexpr Sym2 operator*(double s, Sym2 a) { return {s * a.qq, s * a.qp, s * a.pp}; }
  friend constexpr Vec2 operator*(const Sym2& s, Vec2 v) {
    return {s.qq * v.q + s.qp * v.p, s.qp * v.q + s.pp * v.p};
  }
  friend constexpr bool operator==(Sym2, Sym2) = default;
};

/// R S R^T for a general R.
constexpr Sym2 congruence(const Mat2& r, const Sym2& s) {
  return Sym2::symmetrize(r * s.full() * r.transposed());
}

constexpr double max_abs(Sym2 s) {
  const double a = s.qq < 0 ? -s.qq : s.qq;
  const double b = s.qp < 0 ? -s.qp : s.qp;
  const double c = s.pp < 0 ? -s.pp : s.pp;
  return a > b ? (a > c ? a : c) : (b > c ? b : c);
}

}  // namespace qmetro
