#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace tilt {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

/// Rotation vectors shorter than this use the series form of the Rodrigues coefficients.
inline constexpr double kSmallAngle = 1e-8;

inline Vector3 unit_z() { return Vector3::UnitZ(); }

/// Cross-product matrix: skew(v) * w == v.cross(w).
inline Matrix3 skew(const Vector3& v) {
  Matrix3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

/// skew(v)^2 without forming the product: v v^T - |v|^2 I.
inline Matrix3 skew_squared(const Vector3& v) {
  return v * v.transpose() - v.squaredNorm() * Matrix3::Identity();
}

namespace detail {

// Coefficients a = sin(t)/t and b = (1 - cos t)/t^2 of the Rodrigues formula.
struct RodriguesCoefficients {
  double a;
  double b;
};

inline RodriguesCoefficients rodrigues_coefficients(double angle) {
  if (angle < kSmallAngle) {
    const double a2 = angle * angle;
    return {1.0 - a2 / 6.0, 0.5 - a2 / 24.0};
  }
  const double half_sin = std::sin(0.5 * angle);
  return {std::sin(angle) / angle, 2.0 * half_sin * half_sin / (angle * angle)};
}

}  // namespace detail

/// 3x3 rotation matrix. Construction from an arbitrary matrix is checked; the
/// group operations in this header produce rotations directly.
class RotationMatrix {
 public:
  struct Unchecked {};

  RotationMatrix() : m_(Matrix3::Identity()) {}
  RotationMatrix(Unchecked, const Matrix3& m) : m_(m) {}

  static RotationMatrix identity() { return RotationMatrix(); }

  /// Accepts m if |m^T m - I|_F and |det m - 1| are both within tol.
  static RotationMatrix from_matrix(const Matrix3& m, double tol = 1e-9) {
    if (!m.allFinite()) throw std::invalid_argument("rotation matrix has non-finite entries");
    if (orthogonality_error(m) > tol || std::abs(m.determinant() - 1.0) > tol) {
      throw std::invalid_argument("matrix is not a rotation within tolerance");
    }
    return RotationMatrix(Unchecked{}, m);
  }

  static double orthogonality_error(const Matrix3& m) {
    return (m.transpose() * m - Matrix3::Identity()).norm();
  }

  const Matrix3& matrix() const { return m_; }
  RotationMatrix transpose() const { return RotationMatrix(Unchecked{}, m_.transpose()); }
  double orthogonality_error() const { return orthogonality_error(m_); }
  double determinant() const { return m_.determinant(); }

  Vector3 operator*(const Vector3& v) const { return m_ * v; }
  RotationMatrix operator*(const RotationMatrix& other) const {
    return RotationMatrix(Unchecked{}, m_ * other.m_);
  }

 private:
  Matrix3 m_;
};

/// Vector of unit length; the norm is fixed when the value is built.
class UnitVector3 {
 public:
  UnitVector3() : v_(Vector3::UnitZ()) {}

  static UnitVector3 normalized(const Vector3& v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("cannot normalize a zero or non-finite vector");
    return UnitVector3(v / n);
  }

  /// Accepts v if | |v| - 1 | <= tol.
  static UnitVector3 from_unit(const Vector3& v, double tol = 1e-9) {
    if (!v.allFinite() || std::abs(v.norm() - 1.0) > tol) {
      throw std::invalid_argument("vector is not of unit norm within tolerance");
    }
    return UnitVector3(v);
  }

  static UnitVector3 e_z() { return UnitVector3(Vector3::UnitZ()); }

  const Vector3& vec() const { return v_; }
  double operator[](int i) const { return v_[i]; }

  friend UnitVector3 operator*(const RotationMatrix& r, const UnitVector3& u) { return UnitVector3(r * u.v_); }

 private:
  explicit UnitVector3(const Vector3& v) : v_(v) {}
  Vector3 v_;
};

/// Exponential map so(3) -> SO(3) (Rodrigues).
inline RotationMatrix rotation_exp(const Vector3& w) {
  const auto [a, b] = detail::rodrigues_coefficients(w.norm());
  const Matrix3 s = skew(w);
  return RotationMatrix(RotationMatrix::Unchecked{}, Matrix3::Identity() + a * s + b * s * s);
}

/// (exp(w) - I) v, accurate when both w and the result are small.
inline Vector3 rotation_exp_delta(const Vector3& w, const Vector3& v) {
  const auto [a, b] = detail::rodrigues_coefficients(w.norm());
  const Vector3 wv = w.cross(v);
  return a * wv + b * w.cross(wv);
}

/// exp(w) v for a single vector.
inline Vector3 rotate_by_exp(const Vector3& w, const Vector3& v) { return v + rotation_exp_delta(w, v); }

inline UnitVector3 rotate_by_exp(const Vector3& w, const UnitVector3& u) {
  return rotation_exp(w) * u;
}

/// Inverse right-trivialised differential of exp, truncated after the
/// second Bernoulli term (enough for fourth-order Munthe-Kaas schemes).
inline Vector3 dexp_inv(const Vector3& w, const Vector3& v) {
  const Vector3 wv = w.cross(v);
  return v - 0.5 * wv + w.cross(wv) / 12.0;
}

/// One step of R' = S(omega) R with omega held constant: exp(omega dt) R.
inline RotationMatrix integrate_rotation(const RotationMatrix& r, const Vector3& omega, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_rotation: dt must be positive");
  return rotation_exp(omega * dt) * r;
}

/// Fourth-order Magnus rotation vector for R' = S(omega(t)) R over a step of
/// length h, from omega sampled at the two Gauss points t + (1/2 -+ sqrt(3)/6) h.
inline Vector3 magnus4_rotation_vector(const Vector3& omega_g1, const Vector3& omega_g2, double h) {
  return 0.5 * h * (omega_g1 + omega_g2) + (std::sqrt(3.0) / 12.0) * h * h * omega_g2.cross(omega_g1);
}

/// Gauss-Legendre node offsets (fractions of the step) used by magnus4_rotation_vector.
inline constexpr double kGaussNode1 = 0.5 - 0.28867513459481288225;
inline constexpr double kGaussNode2 = 0.5 + 0.28867513459481288225;

/// Nearest rotation to m (orthogonal polar factor). Throws when the polar
/// factor is a reflection.
inline RotationMatrix reorthonormalize(const Matrix3& m) {
  if (!m.allFinite()) throw std::invalid_argument("reorthonormalize: non-finite input");
  Eigen::JacobiSVD<Matrix3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix3 q = svd.matrixU() * svd.matrixV().transpose();
  if (q.determinant() <= 0.0) throw std::domain_error("reorthonormalize: polar factor has det <= 0");
  return RotationMatrix(RotationMatrix::Unchecked{}, q);
}

/// Rotation by angle about e_z.
inline RotationMatrix rotation_about_z(double angle) { return rotation_exp(Vector3(0.0, 0.0, angle)); }

/// Minimal-angle rotation R with R from = to.
inline RotationMatrix rotation_between(const UnitVector3& from, const UnitVector3& to) {
  const Vector3& a = from.vec();
  const Vector3& b = to.vec();
  const Vector3 axis = a.cross(b);
  const double s = axis.norm();
  const double c = a.dot(b);
  if (s < 1e-12) {
    if (c > 0.0) return RotationMatrix::identity();
    // Antiparallel: half turn about any axis orthogonal to a.
    Vector3 ortho = a.cross(Vector3::UnitX());
    if (ortho.norm() < 1e-6) ortho = a.cross(Vector3::UnitY());
    return rotation_exp(M_PI * ortho.normalized());
  }
  return rotation_exp(std::atan2(s, c) * axis / s);
}

}  // namespace tilt
