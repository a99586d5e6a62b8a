#pragma once

#include "rvelab/types.hpp"

namespace rvelab {

enum class Variant { S, V, H };

// Eq.-level parameter maps between the volumetric-deviatoric pair and the
// macroscopic constants; exact inverse of each other.
std::pair<double, double> ed_ev_from_macro(double E, double nu);     // -> {E_D, E_V}
std::pair<double, double> macro_from_ed_ev(double E_D, double E_V);  // -> {E, nu}

// Voigt kinematic estimate of the macroscopic constants of the standard law.
std::pair<double, double> voigt_estimate(double E0, double alpha);   // -> {E, nu}

Vec3 traction_S(const Vec3& e, double E0, double alpha);

// Variant V law; the (E_V - E_D) eps_V term is carried by the load vector, not
// the stiffness.
Vec3 traction_V(const Vec3& e, double eps_V, double E_D, double E_V);

// Eigenstrain projection of the averaged nodal stress onto the contact frame.
// Uses the identity psi diag(I_hat lambda) psi^T = tr(sigma) I - sigma; the sign
// is chosen so that t = E (e - e_hat) reproduces the isotropic continuum.
Vec3 eigenstrain_H(const Mat3& sigma_avg, const Vec3& n_N, const Vec3& n_M, const Vec3& n_L,
                   double E, double nu);

// Branch-switch direction of the strength envelope; depends on alpha only.
double solve_omega0(double alpha);

struct ElementDamageState {
    double d = 0.0;
    double max_eN2 = 0.0;
    double max_eT2 = 0.0;
    Vec3 eigenstrain = Vec3::Zero();
};

// Per-element damage law with bound geometric factors. G_t in N/mm.
struct DamageLaw {
    double E0 = 0.0;
    double alpha = 1.0;
    double f_t = 0.0;
    double G_t = 0.0;
    double l = 0.0;
    double omega0 = 0.0;
    double K_t = 0.0;
    double K_s = 0.0;
    double n_t = 0.0;

    static DamageLaw bind(double E0, double alpha, double f_t, double G_t, double l);

    double f_eq(double omega) const;
    double K_slope(double omega) const;
};

struct DamageResult {
    Vec3 traction;
    ElementDamageState state;
};

// Evaluate tractions and the trial damage state from the committed state.
// e_total is the full kinematic strain; the stored eigenstrain is subtracted
// before the equivalent-strain evaluation (zero for variant S).
DamageResult damage_update(const Vec3& e_total, const DamageLaw& law,
                           const ElementDamageState& committed, const Vec3& eigenstrain);

}  // namespace rvelab
