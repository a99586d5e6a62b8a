#include "rvelab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rvelab {

// ---------------------------------------------------------------------------
// Materials factories
// ---------------------------------------------------------------------------

Materials Materials::make_S(const RveMesh& mesh, double E0, double alpha) {
    Materials m;
    m.variant = Variant::S;
    m.elems.resize(mesh.n_elements());
    for (auto& e : m.elems) {
        e.EN = E0;
        e.ET = alpha * E0;
    }
    return m;
}

Materials Materials::make_V(const RveMesh& mesh, double E_D, double E_V) {
    Materials m;
    m.variant = Variant::V;
    m.elems.resize(mesh.n_elements());
    for (auto& e : m.elems) {
        e.EN = E_D;
        e.ET = E_D;
        e.EV_minus_ED = E_V - E_D;
    }
    return m;
}

Materials Materials::make_H(const RveMesh& mesh, double E, double nu) {
    Materials m;
    m.variant = Variant::H;
    m.elems.resize(mesh.n_elements());
    for (auto& e : m.elems) {
        e.EN = E;
        e.ET = E;
        e.E = E;
        e.nu = nu;
    }
    return m;
}

Materials Materials::make_H_per_element(const std::vector<std::pair<double, double>>& e_nu) {
    Materials m;
    m.variant = Variant::H;
    m.elems.resize(e_nu.size());
    for (std::size_t k = 0; k < e_nu.size(); ++k) {
        m.elems[k].EN = e_nu[k].first;
        m.elems[k].ET = e_nu[k].first;
        m.elems[k].E = e_nu[k].first;
        m.elems[k].nu = e_nu[k].second;
    }
    return m;
}

Materials Materials::make_V_per_element(const std::vector<double>& e_d, double E_V) {
    Materials m;
    m.variant = Variant::V;
    m.elems.resize(e_d.size());
    for (std::size_t k = 0; k < e_d.size(); ++k) {
        m.elems[k].EN = e_d[k];
        m.elems[k].ET = e_d[k];
        m.elems[k].EV_minus_ED = E_V - e_d[k];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Linear solve
// ---------------------------------------------------------------------------

VecX solve_linear(const Eigen::SparseMatrix<double>& K, const VecX& f) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(K);
    if (chol.info() != Eigen::Success) {
        const auto& D = chol.vectorD();
        int bad = -1;
        for (Eigen::Index i = 0; i < D.size(); ++i)
            if (!(D[i] > 0.0)) {
                bad = static_cast<int>(i);
                break;
            }
        throw NumericalError("linear solve: factorization breakdown at pivot " +
                             std::to_string(bad));
    }
    VecX x = chol.solve(f);
    const double fn = f.norm();
    if (fn > 0.0) {
        const VecX r = f - K * x;
        if (r.norm() > 1e-12 * fn) {
            x += chol.solve(r);
            const VecX r2 = f - K * x;
            if (r2.norm() > 1e-12 * fn)
                throw NumericalError("linear solve: residual above 1e-12 after refinement");
        }
    }
    return x;
}

// ---------------------------------------------------------------------------
// ElasticSystem
// ---------------------------------------------------------------------------

ElasticSystem::ElasticSystem(const RveMesh& mesh, Materials materials, std::uint64_t pin_seed)
    : mesh_(mesh), materials_(std::move(materials)), dofs_(DofLayout::build(mesh, pin_seed)) {
    if (materials_.elems.size() != mesh.n_elements())
        throw ParameterError("materials: element count mismatch");
    stiff_diag_.resize(mesh.n_elements());
    for (std::size_t k = 0; k < mesh.n_elements(); ++k)
        stiff_diag_[k] = Vec3(materials_.elems[k].EN, materials_.elems[k].ET,
                              materials_.elems[k].ET);
    K_ = assemble_stiffness(mesh_, stiff_diag_, dofs_);
    chol_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(K_);
    if (chol_->info() != Eigen::Success)
        throw NumericalError("assembly: factorization failed (constrained system singular)");
    const auto& D = chol_->vectorD();
    int null_dim = 0;
    const double dmax = D.maxCoeff();
    for (Eigen::Index i = 0; i < D.size(); ++i)
        if (!(D[i] > 1e-14 * dmax)) ++null_dim;
    if (null_dim > 0)
        throw NumericalError("assembly: singular system after constraints, null-space dimension " +
                             std::to_string(null_dim));
}

VecX ElasticSystem::solve_reduced(const VecX& f_red) const { return chol_->solve(f_red); }

std::vector<Vec3> ElasticSystem::tractions(const std::vector<Vec3>& strains,
                                           const std::vector<double>& eps_v,
                                           const std::vector<Vec3>& eigenstrains) const {
    std::vector<Vec3> t(strains.size());
    switch (materials_.variant) {
        case Variant::S:
            for (std::size_t k = 0; k < strains.size(); ++k)
                t[k] = traction_S(strains[k], materials_.elems[k].EN,
                                  materials_.elems[k].ET / materials_.elems[k].EN);
            break;
        case Variant::V:
            for (std::size_t k = 0; k < strains.size(); ++k)
                t[k] = traction_V(strains[k], eps_v[k], materials_.elems[k].EN,
                                  materials_.elems[k].EN + materials_.elems[k].EV_minus_ED);
            break;
        case Variant::H:
            for (std::size_t k = 0; k < strains.size(); ++k) {
                const Vec3 em = strains[k] - eigenstrains[k];
                t[k] = materials_.elems[k].E * em;
            }
            break;
    }
    return t;
}

ElasticSolution ElasticSystem::solve(const Mat3& eps, const SolveSettings& settings) const {
    settings.validate();
    const std::size_t ne = mesh_.n_elements();
    ElasticSolution sol;
    sol.macro_strain = tensor_to_voigt(eps);
    sol.eigenstrains.assign(ne, Vec3::Zero());
    sol.eps_v.assign(ne, 0.0);

    // Reference force: elastic response to the pure constraint offsets.
    {
        const VecX q0 = VecX::Zero(static_cast<Eigen::Index>(6 * mesh_.n_nodes()));
        auto e0 = all_element_strains(mesh_, q0, eps);
        std::vector<Vec3> t0(ne);
        for (std::size_t k = 0; k < ne; ++k)
            t0[k] = Vec3(stiff_diag_[k][0] * e0[k][0], stiff_diag_[k][1] * e0[k][1],
                         stiff_diag_[k][2] * e0[k][2]);
        sol.residual = reduce(internal_forces(mesh_, t0), dofs_).norm();
    }
    const double f_scale = sol.residual;
    sol.q = affine_dofs(mesh_, eps, dofs_.pinned_node);

    if (f_scale == 0.0) {
        sol.q.setZero();
        sol.tractions.assign(ne, Vec3::Zero());
        sol.nodal = nodal_stress(mesh_, sol.tractions);
        sol.macro_sigma.setZero();
        sol.residual = 0.0;
        return sol;
    }

    const bool need_epsv = materials_.variant == Variant::V;
    const bool need_eig = materials_.variant == Variant::H;
    double d_eig_rel = 0.0;
    const int max_iter = std::max(settings.max_inner, settings.max_fixed_point);
    std::vector<double> history;
    for (int it = 0; it < max_iter; ++it) {
        auto strains = all_element_strains(mesh_, sol.q, eps);
        if (need_epsv) sol.eps_v = element_volumetric_strains(mesh_, sol.q, eps);
        sol.tractions = tractions(strains, sol.eps_v, sol.eigenstrains);
        const VecX r = -reduce(internal_forces(mesh_, sol.tractions), dofs_);
        sol.residual = r.norm() / f_scale;
        sol.iterations = it;
        history.push_back(sol.residual);
        const bool force_ok = sol.residual <= settings.tol_elastic;
        const bool eig_ok = !need_eig || (it > 0 && d_eig_rel <= settings.tol_elastic);
        if (force_ok && eig_ok) break;
        if (it + 1 == max_iter) {
            std::ostringstream msg;
            msg << "elastic fixed point did not converge; residuals:";
            for (std::size_t h = history.size() > 6 ? history.size() - 6 : 0;
                 h < history.size(); ++h)
                msg << " " << history[h];
            throw NumericalError(msg.str());
        }
        sol.q += expand(solve_reduced(r), dofs_);
        if (need_eig) {
            strains = all_element_strains(mesh_, sol.q, eps);
            sol.tractions = tractions(strains, sol.eps_v, sol.eigenstrains);
            const auto nodal = nodal_stress(mesh_, sol.tractions);
            double e_scale = 1e-30, diff = 0.0;
            for (const auto& s : strains) e_scale = std::max(e_scale, s.cwiseAbs().maxCoeff());
            for (std::size_t k = 0; k < ne; ++k) {
                const ContactElement& el = mesh_.elements[k];
                const Mat3 avg = 0.5 * (nodal.sigma[static_cast<std::size_t>(el.node_i)] +
                                        nodal.sigma[static_cast<std::size_t>(el.node_j)]);
                const Vec3 enew = eigenstrain_H(avg, el.n_N, el.n_M, el.n_L,
                                                materials_.elems[k].E, materials_.elems[k].nu);
                diff = std::max(diff, (enew - sol.eigenstrains[k]).cwiseAbs().maxCoeff());
                sol.eigenstrains[k] += settings.fp_damping * (enew - sol.eigenstrains[k]);
            }
            d_eig_rel = diff / e_scale;
        }
    }
    sol.nodal = nodal_stress(mesh_, sol.tractions);
    sol.macro_sigma = macro_stress(mesh_, sol.nodal);
    return sol;
}

ElasticSolution ElasticSystem::solve(const MacroLoad& load, const SolveSettings& settings,
                                     const Mat6* apparent) const {
    load.validate();
    Vec6 eps = load.strain;
    if (load.all_strain_controlled()) return solve(voigt_to_tensor(eps), settings);
    if (apparent == nullptr)
        throw ParameterError("mixed control requires the apparent stiffness Jacobian");

    std::vector<int> free_idx;
    for (int c = 0; c < 6; ++c)
        if (load.control[static_cast<std::size_t>(c)] == ControlMode::Stress)
            free_idx.push_back(c);
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    MatX J(nf, nf);
    for (Eigen::Index a = 0; a < nf; ++a)
        for (Eigen::Index b = 0; b < nf; ++b)
            J(a, b) = (*apparent)(free_idx[static_cast<std::size_t>(a)],
                                  free_idx[static_cast<std::size_t>(b)]);

    double e_ref = 0.0;
    for (const auto& m : materials_.elems) e_ref = std::max(e_ref, m.EN);
    const double tol_abs = settings.macro_tol_rel * e_ref;

    ElasticSolution sol;
    for (int it = 0; it < settings.max_macro_iter; ++it) {
        sol = solve(voigt_to_tensor(eps), settings);
        VecX r(nf);
        for (Eigen::Index a = 0; a < nf; ++a)
            r[a] = load.target_stress[free_idx[static_cast<std::size_t>(a)]] -
                   sol.macro_sigma[free_idx[static_cast<std::size_t>(a)]];
        if (r.cwiseAbs().maxCoeff() <= tol_abs) return sol;
        const VecX de = J.ldlt().solve(r);  // engineering components
        for (Eigen::Index a = 0; a < nf; ++a) {
            const int c = free_idx[static_cast<std::size_t>(a)];
            eps[c] += (c < 3) ? de[a] : 0.5 * de[a];
        }
    }
    throw NumericalError("mixed macro control did not converge");
}

// ---------------------------------------------------------------------------
// Inelastic path
// ---------------------------------------------------------------------------

InelasticMaterials InelasticMaterials::make_S(const RveMesh& mesh, double E0, double alpha,
                                              double f_t, double G_t) {
    InelasticMaterials m;
    m.variant = Variant::S;
    m.alpha = alpha;
    m.elems.resize(mesh.n_elements());
    m.laws.reserve(mesh.n_elements());
    for (std::size_t k = 0; k < mesh.n_elements(); ++k) {
        m.elems[k].EN = E0;
        m.elems[k].ET = alpha * E0;
        m.laws.push_back(DamageLaw::bind(E0, alpha, f_t, G_t, mesh.elements[k].length));
    }
    return m;
}

InelasticMaterials InelasticMaterials::make_H(const RveMesh& mesh, double E, double nu,
                                              double f_t, double G_t) {
    std::vector<std::pair<double, double>> e_nu(mesh.n_elements(), {E, nu});
    return make_H_per_element(mesh, e_nu, f_t, G_t);
}

InelasticMaterials InelasticMaterials::make_H_per_element(
    const RveMesh& mesh, const std::vector<std::pair<double, double>>& e_nu, double f_t,
    double G_t) {
    InelasticMaterials m;
    m.variant = Variant::H;
    m.alpha = 1.0;
    m.elems.resize(mesh.n_elements());
    m.laws.reserve(mesh.n_elements());
    for (std::size_t k = 0; k < mesh.n_elements(); ++k) {
        m.elems[k].EN = e_nu[k].first;
        m.elems[k].ET = e_nu[k].first;
        m.elems[k].E = e_nu[k].first;
        m.elems[k].nu = e_nu[k].second;
        m.laws.push_back(DamageLaw::bind(e_nu[k].first, 1.0, f_t, G_t,
                                         mesh.elements[k].length));
    }
    return m;
}

LoadProgram LoadProgram::uniaxial(double eps_xx_max, int steps) {
    LoadProgram p;
    p.strain_final = Vec6::Zero();
    p.strain_final[0] = eps_xx_max;
    p.control = {ControlMode::Strain, ControlMode::Stress, ControlMode::Stress,
                 ControlMode::Strain, ControlMode::Strain, ControlMode::Strain};
    p.steps = steps;
    return p;
}

namespace {

struct PathWorkspace {
    const RveMesh& mesh;
    const InelasticMaterials& mat;
    const SolveSettings& settings;
    const ElasticSystem& system;
    const MatX J;  // free-component Jacobian (engineering)
    const std::vector<int> free_idx;
    double tol_abs_sigma;

    std::vector<ElementDamageState> committed;
    std::vector<Vec3> committed_tractions;
    VecX q;
    RunRecord record;
};

double force_scale(const PathWorkspace& ws, const Mat3& eps) {
    const VecX q0 = VecX::Zero(static_cast<Eigen::Index>(6 * ws.mesh.n_nodes()));
    auto e0 = all_element_strains(ws.mesh, q0, eps);
    std::vector<Vec3> t0(e0.size());
    for (std::size_t k = 0; k < e0.size(); ++k)
        t0[k] = Vec3(ws.mat.elems[k].EN * e0[k][0], ws.mat.elems[k].ET * e0[k][1],
                     ws.mat.elems[k].ET * e0[k][2]);
    return reduce(internal_forces(ws.mesh, t0), ws.system.dofs()).norm();
}

struct StepResult {
    bool converged = false;
    std::vector<ElementDamageState> trial;
    std::vector<Vec3> tractions;
    Vec6 sigma = Vec6::Zero();
    Vec6 eps6 = Vec6::Zero();
    int iterations = 0;
};

// Solve equilibrium at a fixed full strain eps6 with modified (initial
// stiffness) Newton-Raphson; damage history is taken from ws.committed.
StepResult equilibrium_at(PathWorkspace& ws, const Vec6& eps6) {
    StepResult res;
    res.eps6 = eps6;
    const Mat3 eps = voigt_to_tensor(eps6);
    const std::size_t ne = ws.mesh.n_elements();
    const double f_scale = std::max(force_scale(ws, eps), 1e-300);
    const bool is_h = ws.mat.variant == Variant::H;

    res.trial = ws.committed;
    res.tractions = ws.committed_tractions;
    std::vector<Vec3> eig(ne, Vec3::Zero());
    if (is_h)
        for (std::size_t k = 0; k < ne; ++k) eig[k] = ws.committed[k].eigenstrain;
    double eig_rel = 0.0;
    for (int it = 0; it < ws.settings.max_inner; ++it) {
        const auto strains = all_element_strains(ws.mesh, ws.q, eps);
        if (is_h) {
            const auto nodal = nodal_stress(ws.mesh, res.tractions);
            double e_scale = 1e-30;
            for (const auto& s : strains) e_scale = std::max(e_scale, s.cwiseAbs().maxCoeff());
            double diff = 0.0;
            for (std::size_t k = 0; k < ne; ++k) {
                const ContactElement& el = ws.mesh.elements[k];
                const Mat3 avg = 0.5 * (nodal.sigma[static_cast<std::size_t>(el.node_i)] +
                                        nodal.sigma[static_cast<std::size_t>(el.node_j)]);
                const double secant = std::max(1.0 - res.trial[k].d, 1e-9) * ws.mat.elems[k].E;
                const Vec3 enew = eigenstrain_H(avg, el.n_N, el.n_M, el.n_L, secant,
                                                ws.mat.elems[k].nu);
                diff = std::max(diff, (enew - eig[k]).cwiseAbs().maxCoeff());
                eig[k] += ws.settings.fp_damping * (enew - eig[k]);
            }
            eig_rel = diff / e_scale;
        }
        for (std::size_t k = 0; k < ne; ++k) {
            const auto r = damage_update(strains[k], ws.mat.laws[k], ws.committed[k], eig[k]);
            res.trial[k] = r.state;
            res.tractions[k] = r.traction;
        }
        const VecX r = -reduce(internal_forces(ws.mesh, res.tractions), ws.system.dofs());
        const double rel = r.norm() / f_scale;
        res.iterations = it + 1;
        if (rel <= ws.settings.tol_inelastic &&
            (!is_h || eig_rel <= 10.0 * ws.settings.tol_inelastic)) {
            res.converged = true;
            break;
        }
        ws.q += expand(ws.system.solve_reduced(r), ws.system.dofs());
    }
    if (res.converged) {
        const auto nodal = nodal_stress(ws.mesh, res.tractions);
        res.sigma = macro_stress(ws.mesh, nodal);
    }
    return res;
}

// One macro step with nested stress control; returns false on NR divergence.
bool try_step(PathWorkspace& ws, Vec6& eps6, const Vec6& strain_target) {
    // Strain-controlled components follow the program; free ones warm-start.
    for (std::size_t a = 0; a < 6; ++a)
        if (std::find(ws.free_idx.begin(), ws.free_idx.end(), static_cast<int>(a)) ==
            ws.free_idx.end())
            eps6[static_cast<Eigen::Index>(a)] = strain_target[static_cast<Eigen::Index>(a)];

    const VecX q_backup = ws.q;
    StepResult res;
    for (int m = 0; m < ws.settings.max_macro_iter; ++m) {
        res = equilibrium_at(ws, eps6);
        ws.record.total_iterations += res.iterations;
        if (!res.converged) {
            ws.q = q_backup;
            return false;
        }
        if (ws.free_idx.empty()) break;
        VecX r(static_cast<Eigen::Index>(ws.free_idx.size()));
        for (std::size_t a = 0; a < ws.free_idx.size(); ++a)
            r[static_cast<Eigen::Index>(a)] = -res.sigma[ws.free_idx[a]];
        if (r.cwiseAbs().maxCoeff() <= ws.tol_abs_sigma) break;
        if (m + 1 == ws.settings.max_macro_iter) {
            ws.q = q_backup;
            return false;
        }
        const VecX de = ws.J.ldlt().solve(r);
        for (std::size_t a = 0; a < ws.free_idx.size(); ++a) {
            const int c = ws.free_idx[a];
            eps6[c] += (c < 3) ? de[static_cast<Eigen::Index>(a)]
                               : 0.5 * de[static_cast<Eigen::Index>(a)];
        }
    }

    // Commit.
    ws.committed = std::move(res.trial);
    ws.committed_tractions = std::move(res.tractions);
    StepRecord rec;
    rec.strain = eps6;
    rec.stress = res.sigma;
    const StepRecord& prev = ws.record.steps.back();
    rec.e_dis = prev.e_dis +
                1e6 * 0.5 * voigt_ddot(prev.stress + rec.stress, rec.strain - prev.strain);
    ws.record.steps.push_back(rec);
    if (rec.stress[0] > ws.record.peak_stress) {
        ws.record.peak_stress = rec.stress[0];
        ws.record.peak_step = static_cast<int>(ws.record.steps.size()) - 1;
        ws.record.damage_peak.resize(ws.committed.size());
        for (std::size_t k = 0; k < ws.committed.size(); ++k)
            ws.record.damage_peak[k] = ws.committed[k].d;
    }
    return true;
}

// Advance between two program fractions with bisection on divergence.
void advance(PathWorkspace& ws, Vec6& eps6, const Vec6& from_target, const Vec6& to_target,
             int depth) {
    Vec6 eps_try = eps6;
    if (try_step(ws, eps_try, to_target)) {
        eps6 = eps_try;
        return;
    }
    if (depth >= ws.settings.max_bisect)
        throw NumericalError("inelastic step failed to converge after " +
                             std::to_string(depth) + " halvings");
    const Vec6 mid = 0.5 * (from_target + to_target);
    advance(ws, eps6, from_target, mid, depth + 1);
    advance(ws, eps6, mid, to_target, depth + 1);
}

}  // namespace

RunRecord solve_inelastic_path(const RveMesh& mesh, const InelasticMaterials& materials,
                               const LoadProgram& program, const SolveSettings& settings,
                               std::uint64_t pin_seed, const Mat6& apparent_elastic) {
    settings.validate();
    if (materials.variant == Variant::V)
        throw ParameterError("inelastic path: damage laws are defined for variants S and H");
    Materials elastic;
    elastic.variant = materials.variant;
    elastic.elems = materials.elems;
    ElasticSystem system(mesh, std::move(elastic), pin_seed);

    std::vector<int> free_idx;
    for (int c = 0; c < 6; ++c)
        if (program.control[static_cast<std::size_t>(c)] == ControlMode::Stress)
            free_idx.push_back(c);
    MatX J(free_idx.size(), free_idx.size());
    for (std::size_t a = 0; a < free_idx.size(); ++a)
        for (std::size_t b = 0; b < free_idx.size(); ++b)
            J(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                apparent_elastic(free_idx[a], free_idx[b]);

    double e_ref = 0.0;
    for (const auto& m : materials.elems) e_ref = std::max(e_ref, m.EN);

    PathWorkspace ws{mesh,
                     materials,
                     settings,
                     system,
                     J,
                     free_idx,
                     settings.macro_tol_rel * e_ref,
                     std::vector<ElementDamageState>(mesh.n_elements()),
                     std::vector<Vec3>(mesh.n_elements(), Vec3::Zero()),
                     VecX::Zero(static_cast<Eigen::Index>(6 * mesh.n_nodes())),
                     RunRecord{}};
    ws.record.steps.push_back(StepRecord{});

    Vec6 eps6 = Vec6::Zero();
    for (int s = 1; s <= program.steps; ++s) {
        const Vec6 from = program.strain_final * (static_cast<double>(s - 1) / program.steps);
        const Vec6 to = program.strain_final * (static_cast<double>(s) / program.steps);
        advance(ws, eps6, from, to, 0);
    }

    ws.record.damage_final.resize(ws.committed.size());
    for (std::size_t k = 0; k < ws.committed.size(); ++k)
        ws.record.damage_final[k] = ws.committed[k].d;
    ws.record.dissipated_energy = ws.record.steps.back().e_dis;
    if (ws.record.damage_peak.empty())
        ws.record.damage_peak.assign(mesh.n_elements(), 0.0);
    return ws.record;
}

}  // namespace rvelab
