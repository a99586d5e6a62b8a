#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>

namespace rvelab {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec3i = Eigen::Vector3i;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Voigt ordering throughout: {xx, yy, zz, yz, xz, xy}, shear entries tensorial
// (eps_ij = gamma_ij / 2).
inline Mat3 voigt_to_tensor(const Vec6& v) {
    Mat3 t;
    t << v[0], v[5], v[4],
         v[5], v[1], v[3],
         v[4], v[3], v[2];
    return t;
}

inline Vec6 tensor_to_voigt(const Mat3& t) {
    Vec6 v;
    v << t(0, 0), t(1, 1), t(2, 2),
         0.5 * (t(1, 2) + t(2, 1)), 0.5 * (t(0, 2) + t(2, 0)), 0.5 * (t(0, 1) + t(1, 0));
    return v;
}

// Double contraction a:b of two symmetric tensors in Voigt form.
inline double voigt_ddot(const Vec6& a, const Vec6& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] +
           2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5]);
}

// Equivalent deviatoric strain sqrt(3/2 * dev:dev), the measure used for the
// load table (4.50e-5 for the pure shear loads).
inline double equivalent_deviatoric_strain(const Vec6& eps) {
    const double tr = eps[0] + eps[1] + eps[2];
    Vec6 dev = eps;
    dev[0] -= tr / 3.0;
    dev[1] -= tr / 3.0;
    dev[2] -= tr / 3.0;
    return std::sqrt(1.5 * voigt_ddot(dev, dev));
}

// Skew-symmetric matrix such that skew(a) * b = a x b.
inline Mat3 skew(const Vec3& a) {
    Mat3 s;
    s <<     0, -a[2],  a[1],
          a[2],     0, -a[0],
         -a[1],  a[0],     0;
    return s;
}

// Levi-Civita permutation symbol; contractions with it are expanded to cross
// products in the kinematics.
constexpr int levi_civita(int i, int j, int k) {
    if (i == j || j == k || i == k) return 0;
    return ((j - i + 3) % 3 == 1) ? 1 : -1;
}

struct ParameterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace rvelab
