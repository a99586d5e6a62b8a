#include "rvelab/model.hpp"

#include <cmath>

namespace rvelab {

int select_pinned_node(std::size_t n_nodes, std::uint64_t seed) {
    std::uint64_t s = split_seed(seed, 0x9015u);
    return static_cast<int>(splitmix64(s) % n_nodes);
}

DofLayout DofLayout::build(const RveMesh& mesh, std::uint64_t seed) {
    DofLayout d;
    d.n_nodes = static_cast<int>(mesh.n_nodes());
    d.pinned_node = select_pinned_node(mesh.n_nodes(), seed);
    d.reduced.assign(static_cast<std::size_t>(6 * d.n_nodes), -1);
    int idx = 0;
    for (int n = 0; n < d.n_nodes; ++n)
        for (int c = 0; c < 6; ++c) {
            if (n == d.pinned_node && c < 3) continue;
            d.reduced[static_cast<std::size_t>(6 * n + c)] = idx++;
        }
    d.n_reduced = idx;
    return d;
}

Vec3 macro_offset_displacement(const ContactElement& e, double l_rve, const Mat3& eps) {
    return eps * (l_rve * e.image_shift.cast<double>());
}

Eigen::Matrix<double, 3, 12> element_B(const ContactElement& e) {
    Eigen::Matrix<double, 3, 12> B;
    Mat3 P;
    P.row(0) = e.n_N.transpose();
    P.row(1) = e.n_M.transpose();
    P.row(2) = e.n_L.transpose();
    const double inv_l = 1.0 / e.length;
    B.block<3, 3>(0, 0) = -inv_l * P;
    B.block<3, 3>(0, 3) = inv_l * P * skew(e.c_i);
    B.block<3, 3>(0, 6) = inv_l * P;
    B.block<3, 3>(0, 9) = -inv_l * P * skew(e.c_j);
    return B;
}

Vec3 element_offset_strain(const ContactElement& e, double l_rve, const Mat3& eps) {
    const Vec3 du = macro_offset_displacement(e, l_rve, eps);
    return Vec3(e.n_N.dot(du), e.n_M.dot(du), e.n_L.dot(du)) / e.length;
}

Vec3 element_strain(const ContactElement& e, const Vec3& u_i, const Vec3& th_i,
                    const Vec3& u_j_eff, const Vec3& th_j) {
    const Vec3 delta = u_j_eff + th_j.cross(e.c_j) - u_i - th_i.cross(e.c_i);
    return Vec3(e.n_N.dot(delta), e.n_M.dot(delta), e.n_L.dot(delta)) / e.length;
}

std::vector<Vec3> all_element_strains(const RveMesh& mesh, const VecX& q, const Mat3& eps) {
    std::vector<Vec3> out(mesh.n_elements());
    for (std::size_t k = 0; k < mesh.n_elements(); ++k) {
        const ContactElement& e = mesh.elements[k];
        const auto i = static_cast<std::size_t>(e.node_i);
        const auto j = static_cast<std::size_t>(e.node_j);
        const Vec3 u_i = q.segment<3>(static_cast<Eigen::Index>(6 * i));
        const Vec3 th_i = q.segment<3>(static_cast<Eigen::Index>(6 * i + 3));
        const Vec3 u_j = q.segment<3>(static_cast<Eigen::Index>(6 * j)) +
                         macro_offset_displacement(e, mesh.l_rve, eps);
        const Vec3 th_j = q.segment<3>(static_cast<Eigen::Index>(6 * j + 3));
        out[k] = element_strain(e, u_i, th_i, u_j, th_j);
    }
    return out;
}

std::vector<double> simplex_volumetric_strains(const RveMesh& mesh, const VecX& q,
                                               const Mat3& eps) {
    std::vector<double> out(mesh.simplices.size(), 0.0);
    for (std::size_t s = 0; s < mesh.simplices.size(); ++s) {
        const Simplex& sx = mesh.simplices[s];
        Vec3 p[4], u[4];
        for (int k = 0; k < 4; ++k) {
            const auto nk = static_cast<std::size_t>(sx.nodes[static_cast<std::size_t>(k)]);
            const Vec3 shift = mesh.l_rve * sx.shifts[static_cast<std::size_t>(k)].cast<double>();
            p[k] = mesh.particles[nk].center + shift;
            u[k] = q.segment<3>(static_cast<Eigen::Index>(6 * nk)) + eps * shift;
        }
        // Linearized volume change: dV = sum_k grad_k(V) . u_k
        const Vec3 g1 = (p[2] - p[0]).cross(p[3] - p[0]) / 6.0;
        const Vec3 g2 = (p[3] - p[0]).cross(p[1] - p[0]) / 6.0;
        const Vec3 g3 = (p[1] - p[0]).cross(p[2] - p[0]) / 6.0;
        const Vec3 g0 = -(g1 + g2 + g3);
        const double dv = g0.dot(u[0]) + g1.dot(u[1]) + g2.dot(u[2]) + g3.dot(u[3]);
        out[s] = dv / (3.0 * sx.reference_volume);
    }
    return out;
}

double element_volumetric_strain(const ContactElement& e,
                                 const std::vector<double>& simplex_eps_v) {
    if (e.attached_simplices.empty())
        throw GeometryError("element volumetric strain: missing simplex linkage");
    double s = 0.0;
    for (int id : e.attached_simplices) s += simplex_eps_v[static_cast<std::size_t>(id)];
    return s / static_cast<double>(e.attached_simplices.size());
}

std::vector<double> element_volumetric_strains(const RveMesh& mesh, const VecX& q,
                                               const Mat3& eps) {
    const auto sv = simplex_volumetric_strains(mesh, q, eps);
    std::vector<double> out(mesh.n_elements());
    for (std::size_t k = 0; k < mesh.n_elements(); ++k)
        out[k] = element_volumetric_strain(mesh.elements[k], sv);
    return out;
}

Eigen::SparseMatrix<double> assemble_stiffness(const RveMesh& mesh,
                                               const std::vector<Vec3>& stiffness_diag,
                                               const DofLayout& dofs) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(mesh.n_elements() * 144);
    for (std::size_t k = 0; k < mesh.n_elements(); ++k) {
        const ContactElement& e = mesh.elements[k];
        const auto B = element_B(e);
        const Vec3 d = stiffness_diag[k];
        Eigen::Matrix<double, 12, 12> Ke =
            e.area * e.length * B.transpose() * d.asDiagonal() * B;
        int map[12];
        for (int c = 0; c < 6; ++c) {
            map[c] = dofs.reduced[static_cast<std::size_t>(6 * e.node_i + c)];
            map[6 + c] = dofs.reduced[static_cast<std::size_t>(6 * e.node_j + c)];
        }
        for (int a = 0; a < 12; ++a) {
            if (map[a] < 0) continue;
            for (int b = 0; b < 12; ++b) {
                if (map[b] < 0) continue;
                trip.emplace_back(map[a], map[b], Ke(a, b));
            }
        }
    }
    Eigen::SparseMatrix<double> K(dofs.n_reduced, dofs.n_reduced);
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

VecX internal_forces(const RveMesh& mesh, const std::vector<Vec3>& tractions) {
    VecX f = VecX::Zero(static_cast<Eigen::Index>(6 * mesh.n_nodes()));
    for (std::size_t k = 0; k < mesh.n_elements(); ++k) {
        const ContactElement& e = mesh.elements[k];
        const auto B = element_B(e);
        const Eigen::Matrix<double, 12, 1> fe =
            e.area * e.length * B.transpose() * tractions[k];
        f.segment<6>(static_cast<Eigen::Index>(6 * e.node_i)) += fe.head<6>();
        f.segment<6>(static_cast<Eigen::Index>(6 * e.node_j)) += fe.tail<6>();
    }
    return f;
}

VecX reduce(const VecX& full, const DofLayout& dofs) {
    VecX r(dofs.n_reduced);
    for (std::size_t k = 0; k < dofs.reduced.size(); ++k)
        if (dofs.reduced[k] >= 0) r[dofs.reduced[k]] = full[static_cast<Eigen::Index>(k)];
    return r;
}

VecX expand(const VecX& red, const DofLayout& dofs) {
    VecX f = VecX::Zero(static_cast<Eigen::Index>(dofs.reduced.size()));
    for (std::size_t k = 0; k < dofs.reduced.size(); ++k)
        if (dofs.reduced[k] >= 0) f[static_cast<Eigen::Index>(k)] = red[dofs.reduced[k]];
    return f;
}

VecX affine_dofs(const RveMesh& mesh, const Mat3& eps, int pinned_node) {
    VecX q = VecX::Zero(static_cast<Eigen::Index>(6 * mesh.n_nodes()));
    const Vec3 x0 = mesh.node_position(pinned_node);
    for (std::size_t n = 0; n < mesh.n_nodes(); ++n)
        q.segment<3>(static_cast<Eigen::Index>(6 * n)) =
            eps * (mesh.particles[n].center - x0);
    return q;
}

NodalStressField nodal_stress(const RveMesh& mesh, const std::vector<Vec3>& tractions) {
    NodalStressField out;
    std::vector<Mat3> raw(mesh.n_nodes(), Mat3::Zero());
    for (std::size_t k = 0; k < mesh.n_elements(); ++k) {
        const ContactElement& e = mesh.elements[k];
        const Vec3 t_glob =
            tractions[k][0] * e.n_N + tractions[k][1] * e.n_M + tractions[k][2] * e.n_L;
        raw[static_cast<std::size_t>(e.node_i)] += e.area * e.c_i * t_glob.transpose();
        raw[static_cast<std::size_t>(e.node_j)] -= e.area * e.c_j * t_glob.transpose();
    }
    out.sigma.resize(mesh.n_nodes());
    double max_asym = 0.0;
    for (std::size_t n = 0; n < mesh.n_nodes(); ++n) {
        if (!(mesh.cell_volumes[n] > 0.0))
            throw GeometryError("nodal stress: zero cell volume at node " + std::to_string(n));
        const Mat3 s = raw[n] / mesh.cell_volumes[n];
        const double nrm = s.norm();
        if (nrm > 0.0) max_asym = std::max(max_asym, (s - s.transpose()).norm() / nrm);
        out.sigma[n] = 0.5 * (s + s.transpose());
    }
    out.max_asymmetry = max_asym;
    return out;
}

Vec6 macro_stress(const RveMesh& mesh, const NodalStressField& ns) {
    Mat3 acc = Mat3::Zero();
    for (std::size_t n = 0; n < mesh.n_nodes(); ++n) acc += mesh.cell_volumes[n] * ns.sigma[n];
    return tensor_to_voigt(acc / (mesh.l_rve * mesh.l_rve * mesh.l_rve));
}

}  // namespace rvelab
