#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rvelab/rng.hpp"
#include "rvelab/types.hpp"

namespace rvelab {

struct Particle {
    int id = -1;
    Vec3 center = Vec3::Zero();  // mm, components in [0, l_rve)
    double radius = 0.0;         // mm
    double weight() const { return radius * radius; }  // power weight, mm^2
};

// Contact facet between the rigid cells of node_i and (possibly a periodic
// image of) node_j. n_N points from node_i to the image of node_j; c_i / c_j
// run from the node to the facet centroid.
struct ContactElement {
    int node_i = -1;
    int node_j = -1;
    Vec3i image_shift = Vec3i::Zero();  // integer periodic wrap of node_j
    double area = 0.0;                  // mm^2
    double length = 0.0;                // mm
    Vec3 n_N = Vec3::Zero();
    Vec3 n_M = Vec3::Zero();
    Vec3 n_L = Vec3::Zero();
    Vec3 c_i = Vec3::Zero();
    Vec3 c_j = Vec3::Zero();
    Vec3 centroid = Vec3::Zero();       // facet centroid, global frame of node_i
    std::vector<int> attached_simplices;
};

// Dual tetrahedron of the power diagram; vertices are particle nodes plus
// integer image shifts. Vertex order gives positive signed volume.
struct Simplex {
    std::array<int, 4> nodes{};
    std::array<Vec3i, 4> shifts{};
    double reference_volume = 0.0;  // mm^3
};

struct MeshValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

struct RveMesh {
    double l_rve = 0.0;
    std::vector<Particle> particles;
    std::vector<ContactElement> elements;
    std::vector<Simplex> simplices;
    std::vector<double> cell_volumes;  // per particle, mm^3
    // primary node -> (dependent node, image shift) for every wrapped contact
    std::vector<std::array<int, 5>> periodic_pairs;  // {node_i, node_j, sx, sy, sz}

    std::size_t n_nodes() const { return particles.size(); }
    std::size_t n_elements() const { return elements.size(); }
    Vec3 node_position(int i) const { return particles[static_cast<std::size_t>(i)].center; }
};

// Cumulative volume passing fraction of the Fuller-type sieve curve,
// F(d) = (d / d_max)^exponent.
double fuller_passing(double d, double d_max, double exponent = 0.5);

// Sample sphere diameters so that the generated set's sieve curve follows the
// Fuller curve restricted to [d_min, d_max]; stops at the first diameter that
// pushes the total sphere volume past target_fraction * domain_volume.
// Returned sorted descending.
std::vector<double> sample_fuller_diameters(double d_min, double d_max, double target_fraction,
                                            double domain_volume, Rng& rng,
                                            double exponent = 0.5);

// Per-axis periodic distance component min(|d|, L - |d|).
double periodic_axis_distance(double a, double b, double l);
double periodic_distance(const Vec3& a, const Vec3& b, double l);

std::vector<Particle> place_spheres_periodic(const std::vector<double>& diameters, double l_rve,
                                             Rng& rng, int max_attempts_per_sphere = 20000);

struct TessellationOptions {
    double margin_factor = 2.0;   // ghost margin = margin_factor * d_max
    double area_tol_rel = 1e-12;  // facets below area_tol_rel * l_rve^2 are dropped
    int degeneracy_retries = 3;
    double jitter_rel = 1e-9;     // deterministic jitter on retry, relative to l_rve
};

RveMesh periodic_power_tessellation(const std::vector<Particle>& particles, double l_rve,
                                    const TessellationOptions& opts = {});

MeshValidationReport validate_mesh(const RveMesh& mesh);

// Convenience: full pipeline diameters -> packing -> tessellation with a single seed.
struct GeometrySpec {
    double l_rve = 50.0;
    double d_min = 4.0;
    double d_max = 10.0;
    double fraction = 0.45;
    double fuller_exponent = 0.5;
    int max_attempts = 20000;
    TessellationOptions tess{};
};

RveMesh generate_mesh(const GeometrySpec& spec, std::uint64_t seed);

// Mesh cache file, JSON with versioned schema; round-trips bit-faithfully.
void save_mesh_json(const RveMesh& mesh, const std::string& path);
RveMesh load_mesh_json(const std::string& path);
std::string mesh_to_json(const RveMesh& mesh);

}  // namespace rvelab
