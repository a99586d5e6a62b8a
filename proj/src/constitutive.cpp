#include "rvelab/constitutive.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rvelab {

namespace {
constexpr double kHalfPi = 1.57079632679489661923;
// Strength envelope constants of the inelastic law. 20.0704 = 4.52^2 - 9*0.04,
// the self-consistent value the paper rounds to 20.07; with it both roots of
// the omega >= omega0 branch coincide and the branch stays finite.
constexpr double kC1 = 4.52;
constexpr double kC2 = kC1 * kC1 - 9.0 * 0.04;  // 20.0704
}  // namespace

std::pair<double, double> ed_ev_from_macro(double E, double nu) {
    if (!(E > 0.0)) throw ParameterError("elastic map: E must be positive");
    if (!(nu > -1.0 && nu < 0.5))
        throw ParameterError("elastic map: nu must lie in (-1, 0.5)");
    return {E / (1.0 + nu), E / (1.0 - 2.0 * nu)};
}

std::pair<double, double> macro_from_ed_ev(double E_D, double E_V) {
    if (!(E_D > 0.0) || !(E_V > 0.0))
        throw ParameterError("elastic map: E_D and E_V must be positive");
    const double denom = E_D + 2.0 * E_V;
    return {3.0 * E_V * E_D / denom, (E_V - E_D) / denom};
}

std::pair<double, double> voigt_estimate(double E0, double alpha) {
    if (!(alpha > 0.0)) throw ParameterError("voigt estimate: alpha must be positive");
    return {E0 * (2.0 + 3.0 * alpha) / (4.0 + alpha), (1.0 - alpha) / (4.0 + alpha)};
}

Vec3 traction_S(const Vec3& e, double E0, double alpha) {
    return Vec3(E0 * e[0], alpha * E0 * e[1], alpha * E0 * e[2]);
}

Vec3 traction_V(const Vec3& e, double eps_V, double E_D, double E_V) {
    return Vec3(E_D * e[0] + (E_V - E_D) * eps_V, E_D * e[1], E_D * e[2]);
}

Vec3 eigenstrain_H(const Mat3& sigma_avg, const Vec3& n_N, const Vec3& n_M, const Vec3& n_L,
                   double E, double nu) {
    if (!sigma_avg.allFinite()) throw NumericalError("eigenstrain: non-finite stress");
    const Mat3 m = sigma_avg.trace() * Mat3::Identity() - sigma_avg;
    const Vec3 mn = m * n_N;
    return -(nu / E) * Vec3(n_N.dot(mn), n_M.dot(mn), n_L.dot(mn));
}

namespace {

double branch1(double omega, double alpha) {
    const double s = std::sin(omega), c = std::cos(omega);
    return 16.0 / std::sqrt(s * s + alpha * c * c);
}

// omega >= omega0 branch in rationalized form (per f_t).
double branch2(double omega, double alpha) {
    const double s = std::sin(omega), c = std::cos(omega);
    return 9.0 / (kC1 * s + std::sqrt(kC2 * s * s + 9.0 * alpha * c * c));
}

}  // namespace

double solve_omega0(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ParameterError("omega0: alpha must lie in (0, 1]");
    // branch2 blows up at omega = -atan(5 sqrt(alpha)); bracket just above it.
    double lo = -std::atan(5.0 * std::sqrt(alpha)) + 1e-9;
    double hi = -1e-15;
    auto g = [&](double w) { return branch1(w, alpha) - branch2(w, alpha); };
    double glo = g(lo), ghi = g(hi);
    if (!(glo < 0.0 && ghi > 0.0))
        throw ParameterError("omega0: no sign change in bracket");
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (g(mid) < 0.0) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

DamageLaw DamageLaw::bind(double E0, double alpha, double f_t, double G_t, double l) {
    if (!(E0 > 0.0) || !(f_t > 0.0) || !(G_t > 0.0) || !(l > 0.0))
        throw ParameterError("damage law: E0, f_t, G_t, l must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ParameterError("damage law: alpha must lie in (0, 1]");
    const double snap = 2.0 * E0 * G_t / (f_t * f_t);
    if (!(l < snap)) {
        std::ostringstream msg;
        msg << "damage law: contact length " << l << " mm violates the snap-back bound l < "
            << snap << " mm (= 2 E0 G_t / f_t^2)";
        throw ParameterError(msg.str());
    }
    const double shear_bound = 32.0 * alpha * E0 * G_t / (9.0 * f_t * f_t);
    if (!(l < shear_bound)) {
        std::ostringstream msg;
        msg << "damage law: contact length " << l
            << " mm makes the pure-shear slope K_s nonpositive (need l < " << shear_bound
            << " mm = 32 alpha E0 G_t / (9 f_t^2))";
        throw ParameterError(msg.str());
    }
    DamageLaw law;
    law.E0 = E0;
    law.alpha = alpha;
    law.f_t = f_t;
    law.G_t = G_t;
    law.l = l;
    law.omega0 = solve_omega0(alpha);
    law.K_t = 2.0 * E0 * f_t * f_t * l / (2.0 * E0 * G_t - f_t * f_t * l);
    law.K_s = 18.0 * alpha * E0 * f_t * f_t * l / (32.0 * alpha * E0 * G_t - 9.0 * f_t * f_t * l);
    if (!(law.K_t > law.K_s))
        throw ParameterError("damage law: K_t <= K_s, exponent n_t undefined");
    law.n_t = std::log(law.K_t / (law.K_t - law.K_s)) / std::log(1.0 - 2.0 * law.omega0 / M_PI);
    return law;
}

double DamageLaw::f_eq(double omega) const {
    if (omega < omega0) return f_t * branch1(omega, alpha);
    return f_t * branch2(omega, alpha);
}

double DamageLaw::K_slope(double omega) const {
    if (omega < omega0) {
        const double r = (omega + kHalfPi) / (omega0 + kHalfPi);
        return 0.26 * E0 * (1.0 - r * r);
    }
    const double r = (omega - kHalfPi) / (omega0 - kHalfPi);
    return -K_t * (1.0 - std::pow(r, n_t));
}

DamageResult damage_update(const Vec3& e_total, const DamageLaw& law,
                           const ElementDamageState& committed, const Vec3& eigenstrain) {
    DamageResult out;
    out.state = committed;
    out.state.eigenstrain = eigenstrain;

    const Vec3 e = e_total - eigenstrain;
    const double e_N = e[0];
    const double e_T = std::sqrt(e[1] * e[1] + e[2] * e[2]);
    const double e_eq = std::sqrt(e_N * e_N + law.alpha * e_T * e_T);

    auto traction = [&](double d) {
        return Vec3((1.0 - d) * law.E0 * e[0], (1.0 - d) * law.E0 * law.alpha * e[1],
                    (1.0 - d) * law.E0 * law.alpha * e[2]);
    };

    if (e_eq < 1e-300) {  // elastic zero point, damage unchanged
        out.traction = traction(committed.d);
        return out;
    }

    const double omega = std::atan2(e_N, std::sqrt(law.alpha) * e_T);
    out.state.max_eN2 = std::max(committed.max_eN2, e_N * e_N);
    out.state.max_eT2 = std::max(committed.max_eT2, e_T * e_T);

    double chi;
    const double hist = std::sqrt(out.state.max_eN2 + law.alpha * out.state.max_eT2);
    if (omega < law.omega0) {
        chi = e_eq;
    } else if (omega < 0.0) {
        const double w = omega / law.omega0;
        chi = e_eq * w + hist * (1.0 - w);
    } else {
        chi = hist;
    }

    const double f = law.f_eq(omega);
    const double K = law.K_slope(omega);
    const double t_eq = f * std::exp((K / f) * std::max(0.0, chi - f / law.E0));
    const double d_trial = 1.0 - t_eq / (law.E0 * e_eq);
    out.state.d = std::max(committed.d, std::clamp(d_trial, 0.0, 1.0));
    out.traction = traction(out.state.d);
    return out;
}

}  // namespace rvelab
