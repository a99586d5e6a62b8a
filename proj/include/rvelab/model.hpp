#pragma once

#include <Eigen/Sparse>
#include <array>
#include <cstdint>
#include <vector>

#include "rvelab/geometry.hpp"
#include "rvelab/types.hpp"

namespace rvelab {

enum class ControlMode { Strain, Stress };

// Macroscopic load: 6-component strain in Voigt order {xx, yy, zz, yz, xz, xy}
// with tensorial shear entries, plus per-component control flags.
struct MacroLoad {
    Vec6 strain = Vec6::Zero();
    std::array<ControlMode, 6> control{ControlMode::Strain, ControlMode::Strain,
                                       ControlMode::Strain, ControlMode::Strain,
                                       ControlMode::Strain, ControlMode::Strain};
    Vec6 target_stress = Vec6::Zero();  // MPa, stress-controlled components

    bool all_strain_controlled() const {
        for (auto c : control)
            if (c == ControlMode::Stress) return false;
        return true;
    }
    void validate() const {
        bool any = false;
        for (auto c : control) any = any || (c == ControlMode::Strain);
        if (!any) throw ParameterError("macro load: at least one strain-controlled component");
    }
};

// Reduced dof numbering: 6 dofs per node, the pinned node's displacements
// eliminated to fix rigid translation.
struct DofLayout {
    int n_nodes = 0;
    int pinned_node = 0;
    std::vector<int> reduced;  // size 6*n_nodes, -1 for eliminated dofs
    int n_reduced = 0;

    static DofLayout build(const RveMesh& mesh, std::uint64_t seed);
};

int select_pinned_node(std::size_t n_nodes, std::uint64_t seed);

// Displacement offset of the periodic image of node_j: eps * (shift * l_rve).
Vec3 macro_offset_displacement(const ContactElement& e, double l_rve, const Mat3& eps);

// Kinematic matrix: strain = B * [u_i, th_i, u_j, th_j] + offset_strain.
Eigen::Matrix<double, 3, 12> element_B(const ContactElement& e);

// Strain contribution of the periodic constraint offset, (1/l) P (eps * shift * L).
Vec3 element_offset_strain(const ContactElement& e, double l_rve, const Mat3& eps);

// Kinematic equation; u_j_eff must already include the periodic offset.
Vec3 element_strain(const ContactElement& e, const Vec3& u_i, const Vec3& th_i,
                    const Vec3& u_j_eff, const Vec3& th_j);

// Strains of all elements given the full dof vector (6 per node) and the
// macroscopic strain driving the periodic constraints.
std::vector<Vec3> all_element_strains(const RveMesh& mesh, const VecX& q, const Mat3& eps);

// Per-simplex volumetric strain (V(u)-V0)/(3 V0), linearized.
std::vector<double> simplex_volumetric_strains(const RveMesh& mesh, const VecX& q,
                                               const Mat3& eps);

// Element volumetric strain: unweighted mean over attached simplices.
std::vector<double> element_volumetric_strains(const RveMesh& mesh, const VecX& q,
                                               const Mat3& eps);
double element_volumetric_strain(const ContactElement& e,
                                 const std::vector<double>& simplex_eps_v);

// Assemble the reduced stiffness from per-element stiffness diagonals
// (E_N, E_T, E_T). Symmetric positive definite after the translation fix.
Eigen::SparseMatrix<double> assemble_stiffness(const RveMesh& mesh,
                                               const std::vector<Vec3>& stiffness_diag,
                                               const DofLayout& dofs);

// Internal force vector (full length 6*n_nodes) from element tractions.
VecX internal_forces(const RveMesh& mesh, const std::vector<Vec3>& tractions);

VecX reduce(const VecX& full, const DofLayout& dofs);
VecX expand(const VecX& red, const DofLayout& dofs);

// Affine displacement field u = eps * (x - x_pin), rotations zero.
VecX affine_dofs(const RveMesh& mesh, const Mat3& eps, int pinned_node);

struct NodalStressField {
    std::vector<Mat3> sigma;   // symmetric, MPa
    double max_asymmetry = 0;  // ||sig - sig^T|| / ||sig|| before symmetrization
};

// Love-Weber nodal stress recovery from converged tractions.
NodalStressField nodal_stress(const RveMesh& mesh, const std::vector<Vec3>& tractions);

// Volume average of the nodal stresses (Voigt, tensorial shear).
Vec6 macro_stress(const RveMesh& mesh, const NodalStressField& ns);

}  // namespace rvelab
