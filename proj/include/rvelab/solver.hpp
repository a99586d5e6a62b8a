#pragma once

#include <Eigen/SparseCholesky>
#include <memory>
#include <optional>
#include <vector>

#include "rvelab/constitutive.hpp"
#include "rvelab/geometry.hpp"
#include "rvelab/model.hpp"

namespace rvelab {

struct SolveSettings {
    double tol_elastic = 1e-8;     // relative force residual, elastic solves
    double tol_inelastic = 1e-6;   // relative force residual, damage steps
    int max_inner = 200;           // iterations of the modified NR / fixed point
    int max_fixed_point = 100;     // eigenstrain / volumetric fixed-point cycles
    double macro_tol_rel = 1e-6;   // stress-control tolerance, * E_ref -> MPa
    double fp_damping = 1.0;       // under-relaxation of eigenstrain updates
    int max_macro_iter = 60;
    int max_bisect = 4;            // step halvings on NR divergence

    void validate() const {
        if (!(tol_elastic > 0.0) || !(tol_inelastic > 0.0) || !(macro_tol_rel > 0.0))
            throw ParameterError("solver settings: tolerances must be positive");
    }
};

struct ElementMaterial {
    double EN = 0.0;           // normal stiffness entering K
    double ET = 0.0;           // tangential stiffness entering K
    double EV_minus_ED = 0.0;  // variant V volumetric load coupling
    double E = 0.0;            // variant H projection modulus
    double nu = 0.0;           // variant H projection Poisson ratio
};

struct Materials {
    Variant variant = Variant::S;
    std::vector<ElementMaterial> elems;

    static Materials make_S(const RveMesh& mesh, double E0, double alpha);
    static Materials make_V(const RveMesh& mesh, double E_D, double E_V);
    static Materials make_H(const RveMesh& mesh, double E, double nu);
    static Materials make_H_per_element(const std::vector<std::pair<double, double>>& e_nu);
    static Materials make_V_per_element(const std::vector<double>& e_d, double E_V);
};

struct ElasticSolution {
    VecX q;                         // full dof vector (6 per node)
    std::vector<Vec3> tractions;    // per element, local frame, MPa
    std::vector<Vec3> eigenstrains; // per element (variant H)
    std::vector<double> eps_v;      // per element (variant V)
    NodalStressField nodal;
    Vec6 macro_strain = Vec6::Zero();
    Vec6 macro_sigma = Vec6::Zero();
    int iterations = 0;
    double residual = 0.0;
};

// Direct sparse SPD solve; relative residual <= 1e-12 enforced by one step of
// iterative refinement.
VecX solve_linear(const Eigen::SparseMatrix<double>& K, const VecX& f);

// Elastic RVE system with a cached Cholesky factorization. All loads are
// applied through the periodic constraints.
class ElasticSystem {
public:
    ElasticSystem(const RveMesh& mesh, Materials materials, std::uint64_t pin_seed);

    ElasticSolution solve(const Mat3& eps, const SolveSettings& settings) const;
    ElasticSolution solve(const MacroLoad& load, const SolveSettings& settings,
                          const Mat6* apparent = nullptr) const;

    const RveMesh& mesh() const { return mesh_; }
    const Materials& materials() const { return materials_; }
    const DofLayout& dofs() const { return dofs_; }

    // Tractions for the current variant at the given kinematic state.
    std::vector<Vec3> tractions(const std::vector<Vec3>& strains,
                                const std::vector<double>& eps_v,
                                const std::vector<Vec3>& eigenstrains) const;

    // Back-substitution against the cached factorization (reduced dofs).
    VecX solve_reduced(const VecX& f_red) const;

private:
    const RveMesh& mesh_;
    Materials materials_;
    DofLayout dofs_;
    std::vector<Vec3> stiff_diag_;
    Eigen::SparseMatrix<double> K_;
    std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> chol_;
    double f_ref_unit_ = 0.0;
};

// --- inelastic path -------------------------------------------------------

struct InelasticMaterials {
    Variant variant = Variant::S;  // S or H
    double alpha = 1.0;
    std::vector<ElementMaterial> elems;
    std::vector<DamageLaw> laws;

    static InelasticMaterials make_S(const RveMesh& mesh, double E0, double alpha, double f_t,
                                     double G_t);
    static InelasticMaterials make_H(const RveMesh& mesh, double E, double nu, double f_t,
                                     double G_t);
    static InelasticMaterials make_H_per_element(const RveMesh& mesh,
                                                 const std::vector<std::pair<double, double>>& e_nu,
                                                 double f_t, double G_t);
};

struct LoadProgram {
    Vec6 strain_final = Vec6::Zero();  // ramped strain-controlled components
    std::array<ControlMode, 6> control{ControlMode::Strain, ControlMode::Strain,
                                       ControlMode::Strain, ControlMode::Strain,
                                       ControlMode::Strain, ControlMode::Strain};
    Vec6 target_stress = Vec6::Zero();
    int steps = 100;

    // Uniaxial extension with free transverse normal stresses (Load 5).
    static LoadProgram uniaxial(double eps_xx_max, int steps);
};

struct StepRecord {
    Vec6 strain = Vec6::Zero();
    Vec6 stress = Vec6::Zero();
    double e_dis = 0.0;  // running external work, J/m^3
};

struct RunRecord {
    std::vector<StepRecord> steps;
    std::vector<double> damage_peak;   // per element at the peak-stress step
    std::vector<double> damage_final;  // per element at the last step
    int peak_step = -1;
    double peak_stress = 0.0;          // max sigma_xx along the path
    double dissipated_energy = 0.0;    // final e_dis
    int total_iterations = 0;
};

RunRecord solve_inelastic_path(const RveMesh& mesh, const InelasticMaterials& materials,
                               const LoadProgram& program, const SolveSettings& settings,
                               std::uint64_t pin_seed, const Mat6& apparent_elastic);

}  // namespace rvelab
