#include "rvelab/homogenize.hpp"

namespace rvelab {

Mat6 apparent_stiffness(const ElasticSystem& system, const SolveSettings& settings) {
    Mat6 C;
    const double scale = 1e-5;
    for (int j = 0; j < 6; ++j) {
        Vec6 eps = Vec6::Zero();
        // Unit engineering strain: tensorial shear entry is half.
        eps[j] = (j < 3) ? scale : 0.5 * scale;
        const auto sol = system.solve(voigt_to_tensor(eps), settings);
        C.col(j) = sol.macro_sigma / scale;
    }
    return C;
}

Mat6 isotropic_stiffness(double E, double nu) {
    const double lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    const double mu = E / (2.0 * (1.0 + nu));
    Mat6 C = Mat6::Zero();
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) C(a, b) = lam;
        C(a, a) = lam + 2.0 * mu;
        C(a + 3, a + 3) = mu;
    }
    return C;
}

IsotropicFit fit_isotropic(const Mat6& C) {
    // Basis tensors of the isotropic subspace: B_K (ones on the upper 3x3
    // block) and B_G (4/3 on the normal diagonal, -2/3 off-diagonal, 1 on the
    // shear diagonal). They are Frobenius-orthogonal, so the least-squares
    // projection decouples.
    double tr_n = 0.0, off = 0.0, tr_s = 0.0, upper = 0.0;
    for (int a = 0; a < 3; ++a) {
        tr_n += C(a, a);
        tr_s += C(a + 3, a + 3);
        for (int b = 0; b < 3; ++b) {
            upper += C(a, b);
            if (a != b) off += C(a, b);
        }
    }
    IsotropicFit fit;
    fit.kappa = upper / 9.0;
    fit.G = ((4.0 / 3.0) * tr_n - (2.0 / 3.0) * off + tr_s) / 11.0;
    const double denom = 3.0 * fit.kappa + fit.G;
    fit.E = 9.0 * fit.kappa * fit.G / denom;
    fit.nu = (3.0 * fit.kappa - 2.0 * fit.G) / (2.0 * denom);
    if (!(fit.nu > -1.0 && fit.nu < 0.5) || !(fit.E > 0.0))
        throw NumericalError("isotropic fit: non-physical parameters");
    const Mat6 iso = isotropic_stiffness(fit.E, fit.nu);
    fit.residual = (C - iso).norm() / C.norm();
    return fit;
}

}  // namespace rvelab
