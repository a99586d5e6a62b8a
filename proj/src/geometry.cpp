#include "rvelab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rvelab {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sphere_volume(double d) { return kPi * d * d * d / 6.0; }

// Thrown on internal tessellation inconsistencies; triggers a jitter retry.
struct DegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace

double fuller_passing(double d, double d_max, double exponent) {
    return std::pow(d / d_max, exponent);
}

std::vector<double> sample_fuller_diameters(double d_min, double d_max, double target_fraction,
                                            double domain_volume, Rng& rng, double exponent) {
    if (!(d_min > 0.0) || !(d_min < d_max))
        throw ParameterError("fuller: require 0 < d_min < d_max");
    if (target_fraction < 0.0 || target_fraction >= 0.74)
        throw ParameterError("fuller: target_fraction must lie in [0, 0.74)");
    if (!(exponent > 0.0) || exponent >= 3.0)
        throw ParameterError("fuller: exponent must lie in (0, 3)");

    std::vector<double> out;
    if (target_fraction == 0.0) return out;

    // Number density of diameters is d^(exponent-4); inverting its CDF makes the
    // sampled set's cumulative volume passing fraction follow F(d) = (d/d_max)^exponent.
    const double beta = exponent - 3.0;
    const double lo = std::pow(d_min, beta);
    const double hi = std::pow(d_max, beta);
    const double target_volume = target_fraction * domain_volume;

    double volume = 0.0;
    while (volume < target_volume) {
        const double u = rng.uniform01();
        const double d = std::pow(lo + u * (hi - lo), 1.0 / beta);
        out.push_back(d);
        volume += sphere_volume(d);
    }
    std::sort(out.begin(), out.end(), std::greater<double>());
    return out;
}

double periodic_axis_distance(double a, double b, double l) {
    const double d = std::fabs(a - b);
    return std::min(d, l - d);
}

double periodic_distance(const Vec3& a, const Vec3& b, double l) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double d = periodic_axis_distance(a[k], b[k], l);
        s += d * d;
    }
    return std::sqrt(s);
}

std::vector<Particle> place_spheres_periodic(const std::vector<double>& diameters, double l_rve,
                                             Rng& rng, int max_attempts_per_sphere) {
    for (std::size_t k = 1; k < diameters.size(); ++k)
        if (diameters[k] > diameters[k - 1])
            throw ParameterError("placement: diameters must be sorted descending");

    std::vector<Particle> placed;
    placed.reserve(diameters.size());

    // Bucket grid for neighbor queries; bucket edge >= d_max so overlaps are
    // confined to the 27 surrounding buckets (periodic wrap).
    const double d_max = diameters.empty() ? l_rve : diameters.front();
    const int nb = std::max(1, static_cast<int>(std::floor(l_rve / std::max(d_max, 1e-12))));
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(nb) * nb * nb);
    auto bucket_of = [&](const Vec3& p) {
        int ix = std::min(nb - 1, static_cast<int>(p[0] / l_rve * nb));
        int iy = std::min(nb - 1, static_cast<int>(p[1] / l_rve * nb));
        int iz = std::min(nb - 1, static_cast<int>(p[2] / l_rve * nb));
        return (ix * nb + iy) * nb + iz;
    };

    double placed_volume = 0.0;
    for (std::size_t k = 0; k < diameters.size(); ++k) {
        const double r = 0.5 * diameters[k];
        bool ok = false;
        for (int attempt = 0; attempt < max_attempts_per_sphere && !ok; ++attempt) {
            Vec3 p(rng.uniform01() * l_rve, rng.uniform01() * l_rve, rng.uniform01() * l_rve);
            bool overlap = false;
            int ix = std::min(nb - 1, static_cast<int>(p[0] / l_rve * nb));
            int iy = std::min(nb - 1, static_cast<int>(p[1] / l_rve * nb));
            int iz = std::min(nb - 1, static_cast<int>(p[2] / l_rve * nb));
            for (int dx = -1; dx <= 1 && !overlap; ++dx)
                for (int dy = -1; dy <= 1 && !overlap; ++dy)
                    for (int dz = -1; dz <= 1 && !overlap; ++dz) {
                        int bx = (ix + dx + nb) % nb, by = (iy + dy + nb) % nb,
                            bz = (iz + dz + nb) % nb;
                        for (int q : buckets[static_cast<std::size_t>((bx * nb + by) * nb + bz)]) {
                            const Particle& other = placed[static_cast<std::size_t>(q)];
                            if (periodic_distance(p, other.center, l_rve) < r + other.radius) {
                                overlap = true;
                                break;
                            }
                        }
                    }
            if (!overlap) {
                Particle part;
                part.id = static_cast<int>(placed.size());
                part.center = p;
                part.radius = r;
                placed.push_back(part);
                buckets[static_cast<std::size_t>(bucket_of(p))].push_back(part.id);
                placed_volume += sphere_volume(diameters[k]);
                ok = true;
            }
        }
        if (!ok) {
            std::ostringstream msg;
            msg << "placement failed for sphere " << k << " (d=" << diameters[k]
                << " mm) after " << max_attempts_per_sphere
                << " attempts; achieved fraction "
                << placed_volume / (l_rve * l_rve * l_rve);
            throw GeometryError(msg.str());
        }
    }
    return placed;
}

// ---------------------------------------------------------------------------
// Periodic power tessellation by per-cell radical-plane clipping.
// ---------------------------------------------------------------------------

namespace {

// Wall labels of the initial cube are -1..-6; neighbor labels are candidate
// indices (>= 0).
struct PoolVertex {
    Vec3 p;                     // cell-local coordinates (origin at generator)
    std::array<int, 3> labels;  // sorted defining plane labels
};

struct Face {
    int label;
    std::vector<int> loop;  // pool vertex indices, outward-oriented
};

struct Poly {
    std::vector<PoolVertex> verts;
    std::vector<Face> faces;
};

Poly make_cube(double h) {
    Poly poly;
    // wall ids: 0:x- 1:x+ 2:y- 3:y+ 4:z- 5:z+  -> labels -(1+id)
    auto wall = [](int id) { return -(1 + id); };
    const double c[8][3] = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
                            {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1}};
    const int corner_walls[8][3] = {{0, 2, 4}, {1, 2, 4}, {1, 3, 4}, {0, 3, 4},
                                    {0, 2, 5}, {1, 2, 5}, {1, 3, 5}, {0, 3, 5}};
    for (int k = 0; k < 8; ++k) {
        PoolVertex v;
        v.p = h * Vec3(c[k][0], c[k][1], c[k][2]);
        v.labels = {wall(corner_walls[k][0]), wall(corner_walls[k][1]), wall(corner_walls[k][2])};
        std::sort(v.labels.begin(), v.labels.end());
        poly.verts.push_back(v);
    }
    auto add_face = [&](int wall_id, std::initializer_list<int> loop) {
        Face f;
        f.label = wall(wall_id);
        f.loop = loop;
        poly.faces.push_back(f);
    };
    add_face(4, {0, 3, 2, 1});  // z-
    add_face(5, {4, 5, 6, 7});  // z+
    add_face(0, {0, 4, 7, 3});  // x-
    add_face(1, {1, 2, 6, 5});  // x+
    add_face(2, {0, 1, 5, 4});  // y-
    add_face(3, {3, 7, 6, 2});  // y+
    return poly;
}

Vec3 face_vector_area(const Poly& poly, const Face& f) {
    Vec3 a = Vec3::Zero();
    const std::size_t m = f.loop.size();
    for (std::size_t k = 0; k < m; ++k) {
        const Vec3& p = poly.verts[static_cast<std::size_t>(f.loop[k])].p;
        const Vec3& q = poly.verts[static_cast<std::size_t>(f.loop[(k + 1) % m])].p;
        a += p.cross(q);
    }
    return 0.5 * a;
}

Vec3 face_centroid(const Poly& poly, const Face& f, const Vec3& unit_normal) {
    const Vec3& p0 = poly.verts[static_cast<std::size_t>(f.loop[0])].p;
    double total = 0.0;
    Vec3 c = Vec3::Zero();
    for (std::size_t k = 1; k + 1 < f.loop.size(); ++k) {
        const Vec3& p1 = poly.verts[static_cast<std::size_t>(f.loop[k])].p;
        const Vec3& p2 = poly.verts[static_cast<std::size_t>(f.loop[k + 1])].p;
        const double w = 0.5 * (p1 - p0).cross(p2 - p0).dot(unit_normal);
        c += w * (p0 + p1 + p2) / 3.0;
        total += w;
    }
    if (std::fabs(total) < 1e-300) return p0;
    return c / total;
}

// Clip poly by half-space u.y <= t, tagging the new face with `label`.
// Returns false if the plane does not cut.
bool clip_poly(Poly& poly, const Vec3& u, double t, int label, double eps) {
    std::vector<double> dist(poly.verts.size());
    bool any_out = false;
    for (std::size_t k = 0; k < poly.verts.size(); ++k) {
        dist[k] = u.dot(poly.verts[k].p) - t;
        if (dist[k] > eps) any_out = true;
    }
    if (!any_out) return false;

    auto inside = [&](int v) { return dist[static_cast<std::size_t>(v)] <= eps; };

    std::map<std::pair<int, int>, int> edge_cross;
    auto crossing = [&](int a, int b) {
        auto key = std::minmax(a, b);
        auto it = edge_cross.find(key);
        if (it != edge_cross.end()) return it->second;
        const double da = dist[static_cast<std::size_t>(a)];
        const double db = dist[static_cast<std::size_t>(b)];
        const double s = da / (da - db);
        PoolVertex v;
        v.p = poly.verts[static_cast<std::size_t>(a)].p +
              s * (poly.verts[static_cast<std::size_t>(b)].p -
                   poly.verts[static_cast<std::size_t>(a)].p);
        // The cut vertex lies on the two faces common to the edge plus the new plane.
        const auto& la = poly.verts[static_cast<std::size_t>(a)].labels;
        const auto& lb = poly.verts[static_cast<std::size_t>(b)].labels;
        std::array<int, 3> labs{label, 0, 0};
        int n = 1;
        for (int x : la)
            for (int y : lb)
                if (x == y && n < 3) {
                    labs[static_cast<std::size_t>(n++)] = x;
                    break;
                }
        if (n != 3) throw DegeneracyError("edge with ambiguous face incidence");
        std::sort(labs.begin(), labs.end());
        v.labels = labs;
        const int idx = static_cast<int>(poly.verts.size());
        poly.verts.push_back(v);
        edge_cross.emplace(key, idx);
        return idx;
    };

    std::map<int, int> next_on_cut;  // entry vertex -> exit vertex across each face
    std::vector<Face> kept;
    kept.reserve(poly.faces.size() + 1);
    for (Face& f : poly.faces) {
        bool all_in = true, all_out = true;
        for (int v : f.loop) {
            if (inside(v)) all_out = false;
            else all_in = false;
        }
        if (all_in) {
            kept.push_back(std::move(f));
            continue;
        }
        if (all_out) continue;
        std::vector<int> loop;
        loop.reserve(f.loop.size() + 2);
        int exit_v = -1, entry_v = -1;
        const std::size_t m = f.loop.size();
        for (std::size_t k = 0; k < m; ++k) {
            const int a = f.loop[k];
            const int b = f.loop[(k + 1) % m];
            if (inside(a)) loop.push_back(a);
            if (inside(a) != inside(b)) {
                const int v = crossing(a, b);
                loop.push_back(v);
                if (inside(a)) exit_v = v;
                else entry_v = v;
            }
        }
        if (exit_v < 0 || entry_v < 0 || exit_v == entry_v)
            throw DegeneracyError("tangent cut");
        next_on_cut[entry_v] = exit_v;
        if (loop.size() >= 3) {
            Face nf;
            nf.label = f.label;
            nf.loop = std::move(loop);
            kept.push_back(std::move(nf));
        }
    }

    // Chain the crossing segments into the cut face (traversal opposite to the
    // clipped faces keeps the orientation outward).
    if (!next_on_cut.empty()) {
        Face nf;
        nf.label = label;
        const int start = next_on_cut.begin()->first;
        int v = start;
        do {
            nf.loop.push_back(v);
            auto it = next_on_cut.find(v);
            if (it == next_on_cut.end()) throw DegeneracyError("open cut chain");
            v = it->second;
            if (nf.loop.size() > next_on_cut.size() + 1)
                throw DegeneracyError("cut chain does not close");
        } while (v != start);
        if (nf.loop.size() >= 3) kept.push_back(std::move(nf));
    }
    poly.faces = std::move(kept);
    if (poly.faces.size() < 4) throw DegeneracyError("cell vanished");
    return true;
}

struct Candidate {
    int pid;
    Vec3i shift;
    Vec3 pos;  // image position
    double dist;
};

struct ElementDraft {
    ContactElement elem;
    std::vector<std::array<int, 16>> tet_keys;
    bool dust = false;
};

using PairKey = std::array<int, 5>;  // i, j, sx, sy, sz (canonical)

PairKey canonical_pair(int i, const Vec3i& si, int j, const Vec3i& sj) {
    // Normalize so the first node carries shift zero and the smaller
    // (id, shift) tuple comes first.
    auto mk = [](int a, const Vec3i& sa, int b, const Vec3i& sb) {
        return PairKey{a, b, sb[0] - sa[0], sb[1] - sa[1], sb[2] - sa[2]};
    };
    PairKey k1 = mk(i, si, j, sj);
    PairKey k2 = mk(j, sj, i, si);
    return std::min(k1, k2);
}

using TetKey = std::array<int, 16>;

TetKey canonical_tet(const std::array<std::pair<int, Vec3i>, 4>& nodes) {
    TetKey best{};
    bool first = true;
    for (int t = 0; t < 4; ++t) {
        std::array<std::array<int, 4>, 4> rows;
        for (int k = 0; k < 4; ++k) {
            const Vec3i s = nodes[static_cast<std::size_t>(k)].second -
                            nodes[static_cast<std::size_t>(t)].second;
            rows[static_cast<std::size_t>(k)] = {nodes[static_cast<std::size_t>(k)].first, s[0],
                                                 s[1], s[2]};
        }
        std::sort(rows.begin(), rows.end());
        TetKey key{};
        for (int k = 0; k < 4; ++k)
            for (int c = 0; c < 4; ++c)
                key[static_cast<std::size_t>(4 * k + c)] = rows[static_cast<std::size_t>(k)][
                    static_cast<std::size_t>(c)];
        if (first || key < best) {
            best = key;
            first = false;
        }
    }
    return best;
}

RveMesh build_tessellation(const std::vector<Particle>& particles, double l_rve,
                           const TessellationOptions& opts) {
    const auto n = particles.size();
    if (n == 0) throw ParameterError("tessellation: no particles");
    double d_max = 0.0;
    for (const auto& p : particles) {
        d_max = std::max(d_max, 2.0 * p.radius);
        for (int k = 0; k < 3; ++k)
            if (p.center[k] < 0.0 || p.center[k] >= l_rve)
                throw ParameterError("tessellation: particle centers must lie in [0, l_rve)");
    }
    const double h0 = opts.margin_factor * d_max;
    if (!(h0 > 0.0)) throw ParameterError("tessellation: nonpositive margin");
    const double w_max = 0.25 * d_max * d_max;
    // Radical planes farther than the start cube circumradius cannot cut.
    const double reach = std::sqrt(3.0) * h0;
    const double cand_radius = reach + std::sqrt(reach * reach + 2.0 * w_max) + 1e-9;
    const double eps_plane = 1e-12 * std::max(l_rve, h0);
    const double area_tol = opts.area_tol_rel * l_rve * l_rve;
    const double vol_tol = 1e-10 * l_rve * l_rve * l_rve / static_cast<double>(n);

    RveMesh mesh;
    mesh.l_rve = l_rve;
    mesh.particles = particles;
    mesh.cell_volumes.assign(n, 0.0);

    std::map<PairKey, int> element_of;           // canonical pair -> element index
    std::vector<ElementDraft> drafts;
    std::map<TetKey, int> tet_index;             // canonical tet -> simplex index (-1 degenerate)
    std::vector<Simplex> simplices;

    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 xi = particles[i].center;
        const double wi = particles[i].weight();

        cands.clear();
        for (std::size_t j = 0; j < n; ++j) {
            const Vec3 xj = particles[j].center;
            int slo[3], shi[3];
            for (int k = 0; k < 3; ++k) {
                slo[k] = static_cast<int>(std::ceil((xi[k] - cand_radius - xj[k]) / l_rve));
                shi[k] = static_cast<int>(std::floor((xi[k] + cand_radius - xj[k]) / l_rve));
            }
            for (int sx = slo[0]; sx <= shi[0]; ++sx)
                for (int sy = slo[1]; sy <= shi[1]; ++sy)
                    for (int sz = slo[2]; sz <= shi[2]; ++sz) {
                        const Vec3i s(sx, sy, sz);
                        if (j == i && s == Vec3i::Zero()) continue;
                        const Vec3 pos = xj + l_rve * Vec3(sx, sy, sz);
                        const double dist = (pos - xi).norm();
                        if (dist <= cand_radius)
                            cands.push_back({static_cast<int>(j), s, pos, dist});
                    }
        }
        std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            if (a.dist != b.dist) return a.dist < b.dist;
            if (a.pid != b.pid) return a.pid < b.pid;
            return std::lexicographical_compare(a.shift.data(), a.shift.data() + 3,
                                                b.shift.data(), b.shift.data() + 3);
        });

        Poly poly = make_cube(h0);
        double r_max2 = 3.0 * h0 * h0;
        auto update_rmax = [&]() {
            double m = 0.0;
            for (const Face& f : poly.faces)
                for (int v : f.loop)
                    m = std::max(m, poly.verts[static_cast<std::size_t>(v)].p.squaredNorm());
            r_max2 = m;
        };
        for (std::size_t c = 0; c < cands.size(); ++c) {
            const Candidate& cd = cands[c];
            const double D = cd.dist;
            if (D <= 1e-12) throw DegeneracyError("coincident generators");
            const double t_min = (D * D - 2.0 * w_max) / (2.0 * D);
            if (t_min > 0.0 && t_min * t_min > r_max2) break;  // sorted: nothing further cuts
            const double wj = particles[static_cast<std::size_t>(cd.pid)].weight();
            const double t = (D * D + wi - wj) / (2.0 * D);
            if (t > 0.0 && t * t > r_max2) continue;
            const Vec3 u = (cd.pos - xi) / D;
            if (clip_poly(poly, u, t, static_cast<int>(c), eps_plane)) update_rmax();
        }

        // Cell volume (divergence theorem over outward-oriented faces).
        double vol = 0.0;
        for (const Face& f : poly.faces) {
            const Vec3 av = face_vector_area(poly, f);
            const Vec3 p0 = poly.verts[static_cast<std::size_t>(f.loop[0])].p;
            vol += av.dot(p0) / 3.0;
            if (f.label < 0 && av.norm() > area_tol)
                throw GeometryError("ghost margin insufficient: cell reaches the bounding cube");
        }
        mesh.cell_volumes[i] = vol;

        // First pass: owner faces become elements.
        for (const Face& f : poly.faces) {
            if (f.label < 0) continue;
            const Candidate& cd = cands[static_cast<std::size_t>(f.label)];
            const PairKey key =
                canonical_pair(static_cast<int>(i), Vec3i::Zero(), cd.pid, cd.shift);
            const bool owner = (key[0] == static_cast<int>(i) && key[1] == cd.pid &&
                                key[2] == cd.shift[0] && key[3] == cd.shift[1] &&
                                key[4] == cd.shift[2]);
            if (!owner) continue;
            if (element_of.count(key)) throw DegeneracyError("duplicate owner facet");

            const Vec3 av = face_vector_area(poly, f);
            const double area = av.norm();
            ElementDraft d;
            d.dust = area <= area_tol;
            ContactElement& e = d.elem;
            e.node_i = static_cast<int>(i);
            e.node_j = cd.pid;
            e.image_shift = cd.shift;
            e.area = area;
            const Vec3 branch = cd.pos - xi;
            e.length = branch.norm();
            e.n_N = branch / e.length;
            int axis = 0;
            for (int k = 1; k < 3; ++k)
                if (std::fabs(e.n_N[k]) < std::fabs(e.n_N[axis])) axis = k;
            e.n_M = e.n_N.cross(Vec3::Unit(axis)).normalized();
            e.n_L = e.n_N.cross(e.n_M);
            const Vec3 cen_local = face_centroid(poly, f, av.normalized());
            e.centroid = cen_local + xi;
            e.c_i = e.centroid - xi;
            e.c_j = e.centroid - cd.pos;
            for (int v : f.loop) {
                const auto& labs = poly.verts[static_cast<std::size_t>(v)].labels;
                std::array<std::pair<int, Vec3i>, 4> tn;
                tn[0] = {static_cast<int>(i), Vec3i::Zero()};
                for (int k = 0; k < 3; ++k) {
                    const int lab = labs[static_cast<std::size_t>(k)];
                    if (lab < 0) throw DegeneracyError("power vertex touches bounding cube");
                    const Candidate& cv = cands[static_cast<std::size_t>(lab)];
                    tn[static_cast<std::size_t>(k + 1)] = {cv.pid, cv.shift};
                }
                d.tet_keys.push_back(canonical_tet(tn));
            }
            element_of.emplace(key, static_cast<int>(drafts.size()));
            drafts.push_back(std::move(d));
        }

        // Second pass: mirror faces must agree with their owner.
        for (const Face& f : poly.faces) {
            if (f.label < 0) continue;
            const Candidate& cd = cands[static_cast<std::size_t>(f.label)];
            const PairKey key =
                canonical_pair(static_cast<int>(i), Vec3i::Zero(), cd.pid, cd.shift);
            const bool owner = (key[0] == static_cast<int>(i) && key[1] == cd.pid &&
                                key[2] == cd.shift[0] && key[3] == cd.shift[1] &&
                                key[4] == cd.shift[2]);
            if (owner) continue;
            auto it = element_of.find(key);
            const Vec3 av = face_vector_area(poly, f);
            const double area = av.norm();
            if (it == element_of.end()) {
                if (area > area_tol) throw DegeneracyError("facet without mirror");
                continue;
            }
            const ElementDraft& d = drafts[static_cast<std::size_t>(it->second)];
            if (d.dust && area <= area_tol) continue;
            const double ref = std::max(d.elem.area, area_tol);
            if (std::fabs(area - d.elem.area) > 1e-8 * ref + area_tol)
                throw DegeneracyError("mirror facet area mismatch");
        }

        // Harvest dual tetrahedra from the power vertices of this cell.
        for (const Face& f : poly.faces) {
            if (f.label < 0) continue;
            for (int v : f.loop) {
                const auto& labs = poly.verts[static_cast<std::size_t>(v)].labels;
                if (labs[0] < 0) throw DegeneracyError("power vertex touches bounding cube");
                std::array<std::pair<int, Vec3i>, 4> tn;
                tn[0] = {static_cast<int>(i), Vec3i::Zero()};
                for (int k = 0; k < 3; ++k) {
                    const Candidate& cv = cands[static_cast<std::size_t>(labs[
                        static_cast<std::size_t>(k)])];
                    tn[static_cast<std::size_t>(k + 1)] = {cv.pid, cv.shift};
                }
                const TetKey key = canonical_tet(tn);
                if (tet_index.count(key)) continue;
                Simplex s;
                for (int k = 0; k < 4; ++k) {
                    s.nodes[static_cast<std::size_t>(k)] = key[static_cast<std::size_t>(4 * k)];
                    s.shifts[static_cast<std::size_t>(k)] =
                        Vec3i(key[static_cast<std::size_t>(4 * k + 1)],
                              key[static_cast<std::size_t>(4 * k + 2)],
                              key[static_cast<std::size_t>(4 * k + 3)]);
                }
                auto pos = [&](int k) {
                    return particles[static_cast<std::size_t>(
                               s.nodes[static_cast<std::size_t>(k)])].center +
                           l_rve * s.shifts[static_cast<std::size_t>(k)].cast<double>();
                };
                const Vec3 p0 = pos(0);
                double vol6 = (pos(1) - p0).dot((pos(2) - p0).cross(pos(3) - p0));
                if (std::fabs(vol6) / 6.0 < vol_tol) {
                    tet_index.emplace(key, -1);
                    continue;
                }
                if (vol6 < 0.0) {
                    std::swap(s.nodes[2], s.nodes[3]);
                    std::swap(s.shifts[2], s.shifts[3]);
                    vol6 = -vol6;
                }
                s.reference_volume = vol6 / 6.0;
                tet_index.emplace(key, static_cast<int>(simplices.size()));
                simplices.push_back(s);
            }
        }
    }

    // Resolve attachments, drop dust facets.
    mesh.simplices = std::move(simplices);
    mesh.elements.reserve(drafts.size());
    for (auto& d : drafts) {
        if (d.dust) continue;
        ContactElement e = std::move(d.elem);
        e.attached_simplices.clear();
        for (const TetKey& key : d.tet_keys) {
            auto it = tet_index.find(key);
            if (it == tet_index.end()) throw DegeneracyError("unresolved simplex attachment");
            if (it->second >= 0) e.attached_simplices.push_back(it->second);
        }
        std::sort(e.attached_simplices.begin(), e.attached_simplices.end());
        e.attached_simplices.erase(
            std::unique(e.attached_simplices.begin(), e.attached_simplices.end()),
            e.attached_simplices.end());
        if (e.attached_simplices.empty())
            throw DegeneracyError("facet without attached simplices");
        if (e.image_shift != Vec3i::Zero())
            mesh.periodic_pairs.push_back(
                {e.node_i, e.node_j, e.image_shift[0], e.image_shift[1], e.image_shift[2]});
        mesh.elements.push_back(std::move(e));
    }

    const double vtotal = std::accumulate(mesh.cell_volumes.begin(), mesh.cell_volumes.end(), 0.0);
    const double vbox = l_rve * l_rve * l_rve;
    if (std::fabs(vtotal - vbox) > 1e-6 * vbox)
        throw DegeneracyError("cell volumes do not partition the box");
    return mesh;
}

}  // namespace

RveMesh periodic_power_tessellation(const std::vector<Particle>& particles, double l_rve,
                                    const TessellationOptions& opts) {
    std::vector<Particle> pts = particles;
    std::string last_error;
    for (int attempt = 0; attempt <= opts.degeneracy_retries; ++attempt) {
        try {
            return build_tessellation(pts, l_rve, opts);
        } catch (const DegeneracyError& err) {
            last_error = err.what();
            Rng jit(0xD15EA5Eull + static_cast<std::uint64_t>(attempt));
            const double a = opts.jitter_rel * l_rve * static_cast<double>(attempt + 1);
            for (auto& p : pts) {
                for (int k = 0; k < 3; ++k) {
                    p.center[k] += a * (2.0 * jit.uniform01() - 1.0);
                    p.center[k] -= l_rve * std::floor(p.center[k] / l_rve);
                }
            }
        }
    }
    throw GeometryError("tessellation degenerate after retries: " + last_error);
}

MeshValidationReport validate_mesh(const RveMesh& mesh) {
    MeshValidationReport rep;
    auto fail = [&](const std::string& s) { rep.violations.push_back(s); };
    const double L = mesh.l_rve;

    double vtotal = std::accumulate(mesh.cell_volumes.begin(), mesh.cell_volumes.end(), 0.0);
    if (std::fabs(vtotal - L * L * L) > 1e-6 * L * L * L)
        fail("cell volume sum " + std::to_string(vtotal) + " != l_rve^3");
    for (std::size_t i = 0; i < mesh.cell_volumes.size(); ++i)
        if (!(mesh.cell_volumes[i] > 0.0))
            fail("cell " + std::to_string(i) + " has nonpositive volume");

    std::map<std::array<int, 5>, int> seen;
    for (std::size_t k = 0; k < mesh.elements.size(); ++k) {
        const ContactElement& e = mesh.elements[k];
        const std::string id = "element " + std::to_string(k);
        if (!(e.area > 0.0)) fail(id + ": area <= 0");
        if (!(e.length > 0.0)) fail(id + ": length <= 0");
        const Vec3 branch = mesh.node_position(e.node_j) +
                            L * e.image_shift.cast<double>() - mesh.node_position(e.node_i);
        if ((e.n_N - branch / branch.norm()).norm() > 1e-9)
            fail(id + ": normal not parallel to branch vector");
        if (std::fabs(e.n_N.dot(branch) - e.length) > 1e-9 * e.length)
            fail(id + ": duality n.(x_J - x_I) != length");
        const double ortho = std::fabs(e.n_N.dot(e.n_M)) + std::fabs(e.n_N.dot(e.n_L)) +
                             std::fabs(e.n_M.dot(e.n_L)) + std::fabs(e.n_N.norm() - 1.0) +
                             std::fabs(e.n_M.norm() - 1.0) + std::fabs(e.n_L.norm() - 1.0);
        if (ortho > 1e-12) fail(id + ": frame not orthonormal");
        if (e.attached_simplices.empty()) fail(id + ": no attached simplices");
        std::array<int, 5> key{e.node_i, e.node_j, e.image_shift[0], e.image_shift[1],
                               e.image_shift[2]};
        if (seen.count(key)) fail(id + ": duplicate contact");
        seen.emplace(key, static_cast<int>(k));
    }
    for (std::size_t k = 0; k < mesh.simplices.size(); ++k)
        if (!(mesh.simplices[k].reference_volume > 0.0))
            fail("simplex " + std::to_string(k) + " has nonpositive volume");
    return rep;
}

RveMesh generate_mesh(const GeometrySpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    const double volume = spec.l_rve * spec.l_rve * spec.l_rve;
    auto diameters = sample_fuller_diameters(spec.d_min, spec.d_max, spec.fraction, volume, rng,
                                             spec.fuller_exponent);
    auto particles = place_spheres_periodic(diameters, spec.l_rve, rng, spec.max_attempts);
    return periodic_power_tessellation(particles, spec.l_rve, spec.tess);
}

// ---------------------------------------------------------------------------
// Mesh cache (JSON, versioned schema, round-trip exact doubles)
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kMeshSchema = "rvelab-mesh/1";
}

std::string mesh_to_json(const RveMesh& mesh) {
    nlohmann::json j;
    j["schema"] = kMeshSchema;
    j["l_rve"] = mesh.l_rve;
    auto& jp = j["particles"] = nlohmann::json::array();
    for (const auto& p : mesh.particles)
        jp.push_back({p.id, p.center[0], p.center[1], p.center[2], p.radius});
    auto& je = j["elements"] = nlohmann::json::array();
    for (const auto& e : mesh.elements) {
        nlohmann::json rec = nlohmann::json::array();
        rec.push_back(e.node_i);
        rec.push_back(e.node_j);
        for (int k = 0; k < 3; ++k) rec.push_back(e.image_shift[k]);
        rec.push_back(e.area);
        rec.push_back(e.length);
        for (const Vec3* v : {&e.n_N, &e.n_M, &e.n_L, &e.c_i, &e.c_j, &e.centroid})
            for (int k = 0; k < 3; ++k) rec.push_back((*v)[k]);
        rec.push_back(e.attached_simplices);
        je.push_back(std::move(rec));
    }
    auto& js = j["simplices"] = nlohmann::json::array();
    for (const auto& s : mesh.simplices) {
        nlohmann::json rec = nlohmann::json::array();
        for (int k = 0; k < 4; ++k) {
            rec.push_back(s.nodes[static_cast<std::size_t>(k)]);
            for (int c = 0; c < 3; ++c) rec.push_back(s.shifts[static_cast<std::size_t>(k)][c]);
        }
        rec.push_back(s.reference_volume);
        js.push_back(std::move(rec));
    }
    j["cell_volumes"] = mesh.cell_volumes;
    auto& jq = j["pairs"] = nlohmann::json::array();
    for (const auto& pr : mesh.periodic_pairs) jq.push_back(pr);
    return j.dump();
}

void save_mesh_json(const RveMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw GeometryError("cannot open mesh cache for writing: " + path);
    out << mesh_to_json(mesh);
}

RveMesh load_mesh_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GeometryError("cannot open mesh cache: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("schema", "") != kMeshSchema)
        throw GeometryError("mesh cache schema mismatch in " + path);
    RveMesh mesh;
    mesh.l_rve = j["l_rve"].get<double>();
    for (const auto& rec : j["particles"]) {
        Particle p;
        p.id = rec[0].get<int>();
        p.center = Vec3(rec[1].get<double>(), rec[2].get<double>(), rec[3].get<double>());
        p.radius = rec[4].get<double>();
        mesh.particles.push_back(p);
    }
    for (const auto& rec : j["elements"]) {
        ContactElement e;
        std::size_t k = 0;
        e.node_i = rec[k++].get<int>();
        e.node_j = rec[k++].get<int>();
        for (int c = 0; c < 3; ++c) e.image_shift[c] = rec[k++].get<int>();
        e.area = rec[k++].get<double>();
        e.length = rec[k++].get<double>();
        for (Vec3* v : {&e.n_N, &e.n_M, &e.n_L, &e.c_i, &e.c_j, &e.centroid})
            for (int c = 0; c < 3; ++c) (*v)[c] = rec[k++].get<double>();
        e.attached_simplices = rec[k++].get<std::vector<int>>();
        mesh.elements.push_back(std::move(e));
    }
    for (const auto& rec : j["simplices"]) {
        Simplex s;
        std::size_t k = 0;
        for (int q = 0; q < 4; ++q) {
            s.nodes[static_cast<std::size_t>(q)] = rec[k++].get<int>();
            for (int c = 0; c < 3; ++c)
                s.shifts[static_cast<std::size_t>(q)][c] = rec[k++].get<int>();
        }
        s.reference_volume = rec[k++].get<double>();
        mesh.simplices.push_back(s);
    }
    mesh.cell_volumes = j["cell_volumes"].get<std::vector<double>>();
    for (const auto& rec : j["pairs"])
        mesh.periodic_pairs.push_back(rec.get<std::array<int, 5>>());
    return mesh;
}

}  // namespace rvelab
