#pragma once

#include "rvelab/solver.hpp"

namespace rvelab {

// 6x6 apparent stiffness in engineering Voigt convention: column j is the
// macroscopic (tensorial) stress response to a unit engineering strain e_j.
// Symmetric within elastic reciprocity.
Mat6 apparent_stiffness(const ElasticSystem& system, const SolveSettings& settings);

struct IsotropicFit {
    double E = 0.0;
    double nu = 0.0;
    double kappa = 0.0;  // bulk modulus
    double G = 0.0;      // shear modulus
    double residual = 0.0;  // relative Frobenius distance to the fitted tensor
};

// Closed-form Frobenius projection onto the isotropic subspace.
IsotropicFit fit_isotropic(const Mat6& C);

// Exact isotropic stiffness (engineering Voigt) for reference and tests.
Mat6 isotropic_stiffness(double E, double nu);

}  // namespace rvelab
