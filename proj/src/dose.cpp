#include "arclat/dose.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "arclat/common.hpp"

namespace arclat {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'A', 'R', 'C', 'D'};
constexpr unsigned char kVersion = 1;
constexpr double kPi = 3.14159265358979323846;
constexpr double kDropFraction = 1e-6;  // of the per-beamlet maximum

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Clipped ray-box intersection; t0/t1 are distances from the origin along a
// unit direction. False when the ray misses or only grazes the box.
bool ray_box(const Vec3& o, const Vec3& dir, const Vec3& hi, double& t0, double& t1) {
    t0 = 0.0;
    t1 = std::numeric_limits<double>::infinity();
    const double ov[3] = {o.x, o.y, o.z};
    const double dv[3] = {dir.x, dir.y, dir.z};
    const double hv[3] = {hi.x, hi.y, hi.z};
    for (int a = 0; a < 3; ++a) {
        if (std::fabs(dv[a]) < 1e-12) {
            if (ov[a] < 0.0 || ov[a] > hv[a]) return false;
            continue;
        }
        double ta = (0.0 - ov[a]) / dv[a];
        double tb = (hv[a] - ov[a]) / dv[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t1 > t0;
}

}  // namespace

void validate(const Phantom& ph) {
    if (ph.nx == 0 || ph.ny == 0 || ph.nz == 0)
        throw EmptyGrid("phantom has a zero voxel extent");
    ARCLAT_CHECK(std::isfinite(ph.voxel_mm) && ph.voxel_mm > 0.0, "voxel size must be positive");
    ARCLAT_CHECK(std::isfinite(ph.mu) && ph.mu >= 0.0, "attenuation must be nonnegative");
}

void validate(const BeamGeometry& g) {
    ARCLAT_CHECK(!g.angles_deg.empty(), "beam geometry needs at least one control point");
    for (std::size_t i = 0; i < g.angles_deg.size(); ++i) {
        ARCLAT_CHECK(std::isfinite(g.angles_deg[i]), "gantry angle must be finite");
        if (i > 0)
            ARCLAT_CHECK(g.angles_deg[i] > g.angles_deg[i - 1],
                         "gantry angles must be strictly increasing");
    }
    ARCLAT_CHECK(std::isfinite(g.sad_mm) && g.sad_mm > 0.0, "SAD must be positive");
    ARCLAT_CHECK(g.n_leaves >= 1 && g.n_columns >= 1, "beamlet grid must be nonempty");
    ARCLAT_CHECK(std::isfinite(g.beamlet_mm) && g.beamlet_mm > 0.0,
                 "beamlet width must be positive");
    if (g.lateral_spread)
        ARCLAT_CHECK(std::isfinite(g.sigma_mm) && g.sigma_mm > 0.0,
                     "lateral spread sigma must be positive");
}

BeamGeometry make_arc_geometry(std::size_t n_control_points, double span_deg, double start_deg) {
    ARCLAT_CHECK(n_control_points >= 1, "arc needs at least one control point");
    ARCLAT_CHECK(std::isfinite(span_deg) && span_deg >= 300.0,
                 "arc span must cover at least 300 degrees");
    BeamGeometry g;
    g.angles_deg.resize(n_control_points);
    for (std::size_t i = 0; i < n_control_points; ++i)
        g.angles_deg[i] =
            start_deg + span_deg * static_cast<double>(i) / static_cast<double>(n_control_points);
    validate(g);
    return g;
}

DoseInfluence build_influence(const Phantom& ph, const BeamGeometry& g) {
    validate(ph);
    validate(g);

    DoseInfluence D;
    D.phantom = ph;
    D.geometry = g;
    D.per_cp.resize(g.n_control_points());

    const double v = ph.voxel_mm;
    const auto isoc = ph.isocenter();
    const Vec3 iso{isoc[0], isoc[1], isoc[2]};
    const Vec3 hi{ph.extent_x(), ph.extent_y(), ph.extent_z()};
    const double kernel_radius = g.lateral_spread ? 3.0 * g.sigma_mm : 0.5 * v;
    const double kr2 = kernel_radius * kernel_radius;
    const auto reach = static_cast<std::ptrdiff_t>(std::ceil(kernel_radius / v)) + 2;
    const double inv_two_sigma2 =
        g.lateral_spread ? 1.0 / (2.0 * g.sigma_mm * g.sigma_mm) : 0.0;

    // Per-ray visited stamps so each voxel deposits exactly once; the kernel
    // is evaluated at the voxel center's projection onto the ray, which
    // keeps deposits independent of the candidate-walk step.
    std::vector<std::uint32_t> stamp(ph.n_voxels(), 0);
    std::uint32_t cur_stamp = 0;
    std::vector<std::uint32_t> candidates;
    std::vector<std::pair<std::uint32_t, double>> deposits;

    for (std::size_t cp = 0; cp < g.n_control_points(); ++cp) {
        const double phi = g.angles_deg[cp] * kPi / 180.0;
        const Vec3 to_source{std::sin(phi), std::cos(phi), 0.0};
        const Vec3 source = iso + g.sad_mm * to_source;
        const Vec3 u{std::cos(phi), -std::sin(phi), 0.0};

        auto& entries = D.per_cp[cp];
        for (std::size_t leaf = 0; leaf < g.n_leaves; ++leaf) {
            for (std::size_t col = 0; col < g.n_columns; ++col) {
                const double off_u =
                    (static_cast<double>(col) + 0.5 - 0.5 * static_cast<double>(g.n_columns)) *
                    g.beamlet_mm;
                const double off_z =
                    (static_cast<double>(leaf) + 0.5 - 0.5 * static_cast<double>(g.n_leaves)) *
                    g.beamlet_mm;
                const Vec3 aim = iso + off_u * u + Vec3{0.0, 0.0, off_z};
                const Vec3 span = aim - source;
                const double t_iso = norm(span);
                const Vec3 dir = (1.0 / t_iso) * span;

                double t_in = 0.0, t_out = 0.0;
                if (!ray_box(source, dir, hi, t_in, t_out)) continue;
                const double depth_iso = t_iso - t_in;

                ++cur_stamp;
                candidates.clear();
                const double step = 0.5 * v;
                const auto n_steps =
                    static_cast<std::size_t>(std::ceil((t_out - t_in + 2.0 * v) / step)) + 1;
                for (std::size_t s = 0; s < n_steps; ++s) {
                    const double t = t_in - v + static_cast<double>(s) * step;
                    const Vec3 p = source + t * dir;
                    const auto cx = static_cast<std::ptrdiff_t>(std::floor(p.x / v));
                    const auto cy = static_cast<std::ptrdiff_t>(std::floor(p.y / v));
                    const auto cz = static_cast<std::ptrdiff_t>(std::floor(p.z / v));
                    for (std::ptrdiff_t dz = -reach; dz <= reach; ++dz) {
                        const std::ptrdiff_t iz = cz + dz;
                        if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(ph.nz)) continue;
                        for (std::ptrdiff_t dy = -reach; dy <= reach; ++dy) {
                            const std::ptrdiff_t iy = cy + dy;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ph.ny)) continue;
                            for (std::ptrdiff_t dx = -reach; dx <= reach; ++dx) {
                                const std::ptrdiff_t ix = cx + dx;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(ph.nx)) continue;
                                const std::size_t k = ph.voxel_index(
                                    static_cast<std::size_t>(ix), static_cast<std::size_t>(iy),
                                    static_cast<std::size_t>(iz));
                                if (stamp[k] == cur_stamp) continue;
                                stamp[k] = cur_stamp;
                                candidates.push_back(static_cast<std::uint32_t>(k));
                            }
                        }
                    }
                }

                deposits.clear();
                double vmax = 0.0;
                for (const std::uint32_t k : candidates) {
                    const std::size_t ix = k % ph.nx;
                    const std::size_t iy = (k / ph.nx) % ph.ny;
                    const std::size_t iz = k / (ph.nx * ph.ny);
                    const auto cc = ph.voxel_center(ix, iy, iz);
                    const Vec3 rel = Vec3{cc[0], cc[1], cc[2]} - source;
                    const double tc = dot(rel, dir);
                    if (tc < t_in || tc > t_out) continue;
                    const Vec3 perp = rel - tc * dir;
                    const double r2 = dot(perp, perp);
                    if (r2 > kr2) continue;
                    const double depth = tc - t_in;
                    double val = std::exp(-ph.mu * depth);
                    if (g.inverse_square)
                        val *= sq(g.sad_mm / (g.sad_mm + depth - depth_iso));
                    if (g.lateral_spread) val *= std::exp(-r2 * inv_two_sigma2);
                    deposits.emplace_back(k, val);
                    vmax = std::max(vmax, val);
                }
                if (deposits.empty()) continue;
                std::sort(deposits.begin(), deposits.end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });
                const double floor_val = kDropFraction * vmax;
                const auto beamlet = static_cast<std::uint32_t>(leaf * g.n_columns + col);
                for (const auto& [k, val] : deposits)
                    if (val >= floor_val) entries.push_back({beamlet, k, val});
            }
        }
    }
    return D;
}

void save_influence(const DoseInfluence& D, const std::string& path) {
    ordered_json meta;
    meta["phantom"] = {{"nx", D.phantom.nx},
                       {"ny", D.phantom.ny},
                       {"nz", D.phantom.nz},
                       {"voxel_mm", D.phantom.voxel_mm},
                       {"mu", D.phantom.mu}};
    meta["geometry"] = {{"angles_deg", D.geometry.angles_deg},
                        {"sad_mm", D.geometry.sad_mm},
                        {"n_leaves", D.geometry.n_leaves},
                        {"n_columns", D.geometry.n_columns},
                        {"beamlet_mm", D.geometry.beamlet_mm},
                        {"inverse_square", D.geometry.inverse_square},
                        {"lateral_spread", D.geometry.lateral_spread},
                        {"sigma_mm", D.geometry.sigma_mm}};
    meta["n_control_points"] = D.per_cp.size();

    const std::string js = meta.dump();
    std::string out;
    out.append(kMagic, 4);
    out.push_back(static_cast<char>(kVersion));
    auto put_u32 = [&out](std::uint32_t x) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
    };
    put_u32(static_cast<std::uint32_t>(js.size()));
    out += js;
    for (const auto& entries : D.per_cp) {
        put_u32(static_cast<std::uint32_t>(entries.size()));
        for (const auto& e : entries) {
            put_u32(e.beamlet);
            put_u32(e.voxel);
            const auto f = static_cast<float>(e.value);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(bits);
        }
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    ARCLAT_CHECK(f.good(), "cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    ARCLAT_CHECK(f.good(), "short write to '" + path + "'");
}

DoseInfluence load_influence(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    ARCLAT_CHECK(f.good(), "cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    ARCLAT_CHECK(bytes.size() >= 9, "influence file too short");
    ARCLAT_CHECK(std::memcmp(bytes.data(), kMagic, 4) == 0, "bad influence magic");
    ARCLAT_CHECK(static_cast<unsigned char>(bytes[4]) == kVersion,
                 "unsupported influence version");

    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    auto get_u32 = [p](std::size_t off) {
        return static_cast<std::uint32_t>(p[off]) | (static_cast<std::uint32_t>(p[off + 1]) << 8) |
               (static_cast<std::uint32_t>(p[off + 2]) << 16) |
               (static_cast<std::uint32_t>(p[off + 3]) << 24);
    };
    const std::uint32_t jlen = get_u32(5);
    ARCLAT_CHECK(bytes.size() >= 9 + static_cast<std::size_t>(jlen), "truncated influence header");
    ordered_json meta;
    try {
        meta = ordered_json::parse(bytes.substr(9, jlen));
    } catch (const std::exception& e) {
        throw Error(std::string("bad influence header: ") + e.what());
    }

    DoseInfluence D;
    const auto& jp = meta.at("phantom");
    D.phantom.nx = jp.at("nx").get<std::size_t>();
    D.phantom.ny = jp.at("ny").get<std::size_t>();
    D.phantom.nz = jp.at("nz").get<std::size_t>();
    D.phantom.voxel_mm = jp.at("voxel_mm").get<double>();
    D.phantom.mu = jp.at("mu").get<double>();
    const auto& jg = meta.at("geometry");
    D.geometry.angles_deg = jg.at("angles_deg").get<std::vector<double>>();
    D.geometry.sad_mm = jg.at("sad_mm").get<double>();
    D.geometry.n_leaves = jg.at("n_leaves").get<std::size_t>();
    D.geometry.n_columns = jg.at("n_columns").get<std::size_t>();
    D.geometry.beamlet_mm = jg.at("beamlet_mm").get<double>();
    D.geometry.inverse_square = jg.at("inverse_square").get<bool>();
    D.geometry.lateral_spread = jg.at("lateral_spread").get<bool>();
    D.geometry.sigma_mm = jg.at("sigma_mm").get<double>();
    validate(D.phantom);
    validate(D.geometry);

    const std::size_t n_cps = meta.at("n_control_points").get<std::size_t>();
    ARCLAT_CHECK(n_cps == D.geometry.n_control_points(),
                 "control point count disagrees with the geometry");
    const std::size_t bpc = D.beamlets_per_cp();
    const std::size_t n_vox = D.n_voxels();
    D.per_cp.resize(n_cps);
    std::size_t off = 9 + jlen;
    for (std::size_t cp = 0; cp < n_cps; ++cp) {
        ARCLAT_CHECK(bytes.size() >= off + 4, "truncated influence payload");
        const std::uint32_t count = get_u32(off);
        off += 4;
        ARCLAT_CHECK(bytes.size() >= off + 12ull * count, "truncated influence payload");
        auto& entries = D.per_cp[cp];
        entries.resize(count);
        for (std::uint32_t i = 0; i < count; ++i, off += 12) {
            InfluenceEntry e;
            e.beamlet = get_u32(off);
            e.voxel = get_u32(off + 4);
            const std::uint32_t bits = get_u32(off + 8);
            float fv;
            std::memcpy(&fv, &bits, 4);
            e.value = static_cast<double>(fv);
            ARCLAT_CHECK(e.beamlet < bpc, "influence beamlet index out of range");
            ARCLAT_CHECK(e.voxel < n_vox, "influence voxel index out of range");
            ARCLAT_CHECK(std::isfinite(e.value) && e.value >= 0.0,
                         "influence value must be finite and nonnegative");
            entries[i] = e;
        }
    }
    ARCLAT_CHECK(off == bytes.size(), "trailing bytes after influence payload");
    return D;
}

std::vector<ApertureRaster> apertures_from_arc(const Arc& arc, const BeamGeometry& g) {
    ARCLAT_CHECK(arc.positions.size() == kPlaneSize && arc.gaps.size() == kPlaneSize,
                 "arc has wrong plane size");
    const double w = g.beamlet_mm;
    const double x0 = -0.5 * static_cast<double>(g.n_columns) * w;  // left field edge
    std::vector<ApertureRaster> out(g.n_control_points());
    for (std::size_t cp = 0; cp < g.n_control_points(); ++cp) {
        const std::size_t ac = cp * kControlPoints / g.n_control_points();
        ApertureRaster& r = out[cp];
        r.leaves = g.n_leaves;
        r.columns = g.n_columns;
        r.open.assign(g.n_leaves * g.n_columns, 0.0);
        for (std::size_t leaf = 0; leaf < g.n_leaves; ++leaf) {
            const std::size_t al = leaf * kLeafPairs / g.n_leaves;
            const double l_mm = arc.pos(ac, al);
            const double r_mm = l_mm + arc.gap(ac, al);
            auto to_col = [&](double mm) {
                const double idx = std::round((mm - x0) / w);
                return static_cast<std::size_t>(
                    std::clamp(idx, 0.0, static_cast<double>(g.n_columns)));
            };
            const std::size_t li = to_col(l_mm);
            const std::size_t ri = std::max(li, to_col(r_mm));
            const auto row = rasterize_aperture(li, ri, 1.0, g.n_columns);
            std::copy(row.begin(), row.end(), r.open.begin() + leaf * g.n_columns);
        }
    }
    return out;
}

std::vector<double> compute_dose(const DoseInfluence& D, const std::vector<double>& x) {
    if (x.size() != D.total_beamlets())
        throw ShapeMismatch("beamlet vector has " + std::to_string(x.size()) + " entries, expected " +
                            std::to_string(D.total_beamlets()));
    std::vector<double> dose(D.n_voxels(), 0.0);
    std::size_t off = 0;
    for (const auto& entries : D.per_cp) {
        for (const auto& e : entries) dose[e.voxel] += e.value * x[off + e.beamlet];
        off += D.beamlets_per_cp();
    }
    return dose;
}

std::vector<double> compute_dose(const DoseInfluence& D,
                                 const std::vector<ApertureRaster>& apertures,
                                 const std::vector<double>& weights) {
    if (apertures.size() != D.n_control_points() || weights.size() != D.n_control_points())
        throw ShapeMismatch("aperture/weight count disagrees with the influence control points");
    const std::size_t bpc = D.beamlets_per_cp();
    std::vector<double> x(D.total_beamlets());
    for (std::size_t cp = 0; cp < apertures.size(); ++cp) {
        const ApertureRaster& a = apertures[cp];
        if (a.leaves * a.columns != bpc || a.open.size() != bpc)
            throw ShapeMismatch("aperture raster disagrees with the beamlet grid");
        ARCLAT_CHECK(weights[cp] >= 0.0, "beam weight must be nonnegative");
        for (std::size_t i = 0; i < bpc; ++i) x[cp * bpc + i] = weights[cp] * a.open[i];
    }
    return compute_dose(D, x);
}

std::vector<double> beamlet_gradient(const DoseInfluence& D,
                                     const std::vector<double>& voxel_grad) {
    if (voxel_grad.size() != D.n_voxels())
        throw ShapeMismatch("voxel gradient has " + std::to_string(voxel_grad.size()) +
                            " entries, expected " + std::to_string(D.n_voxels()));
    std::vector<double> g(D.total_beamlets(), 0.0);
    std::size_t off = 0;
    for (const auto& entries : D.per_cp) {
        for (const auto& e : entries) g[off + e.beamlet] += e.value * voxel_grad[e.voxel];
        off += D.beamlets_per_cp();
    }
    return g;
}

void validate(const DoseObjective& obj) {
    ARCLAT_CHECK(obj.target.size() == obj.weight.size() && obj.target.size() == obj.kind.size(),
                 "objective field lengths disagree");
    for (std::size_t k = 0; k < obj.weight.size(); ++k) {
        ARCLAT_CHECK(std::isfinite(obj.target[k]), "objective target must be finite");
        ARCLAT_CHECK(std::isfinite(obj.weight[k]) && obj.weight[k] >= 0.0,
                     "objective weight must be nonnegative");
    }
}

ObjectiveEval evaluate_objective(const std::vector<double>& dose, const DoseObjective& obj) {
    ARCLAT_CHECK(dose.size() == obj.target.size(),
                 "dose length disagrees with the objective voxel count");
    ObjectiveEval out;
    out.gradient.assign(dose.size(), 0.0);
    for (std::size_t k = 0; k < dose.size(); ++k) {
        const double r = dose[k] - obj.target[k];
        if (obj.kind[k] == Penalty::TwoSided) {
            out.value += obj.weight[k] * r * r;
            out.gradient[k] = 2.0 * obj.weight[k] * r;
        } else if (r > 0.0) {
            out.value += obj.weight[k] * r * r;
            out.gradient[k] = 2.0 * obj.weight[k] * r;
        }
    }
    return out;
}

DoseObjective make_demo_objective(const Phantom& ph, double target_radius_mm,
                                  double shell_radius_mm) {
    validate(ph);
    ARCLAT_CHECK(0.0 < target_radius_mm && target_radius_mm < shell_radius_mm,
                 "target radius must be positive and inside the shell radius");
    DoseObjective obj;
    const std::size_t n = ph.n_voxels();
    obj.target.resize(n);
    obj.weight.resize(n);
    obj.kind.resize(n);
    const auto iso = ph.isocenter();
    for (std::size_t iz = 0; iz < ph.nz; ++iz)
        for (std::size_t iy = 0; iy < ph.ny; ++iy)
            for (std::size_t ix = 0; ix < ph.nx; ++ix) {
                const auto c = ph.voxel_center(ix, iy, iz);
                const double r = std::sqrt(sq(c[0] - iso[0]) + sq(c[1] - iso[1]) +
                                           sq(c[2] - iso[2]));
                const std::size_t k = ph.voxel_index(ix, iy, iz);
                if (r <= target_radius_mm) {
                    obj.target[k] = 2.0;
                    obj.weight[k] = 1.0;
                    obj.kind[k] = Penalty::TwoSided;
                } else if (r <= shell_radius_mm) {
                    obj.target[k] = 1.0;
                    obj.weight[k] = 0.5;
                    obj.kind[k] = Penalty::OneSidedOver;
                } else {
                    obj.target[k] = 0.5;
                    obj.weight[k] = 0.1;
                    obj.kind[k] = Penalty::OneSidedOver;
                }
            }
    return obj;
}

RefineResult refine_beam_weights(const DoseInfluence& D,
                                 const std::vector<ApertureRaster>& apertures,
                                 const DoseObjective& obj, const std::vector<double>& y0) {
    validate(obj);
    const std::size_t n_cps = D.n_control_points();
    const std::size_t n_vox = D.n_voxels();
    if (apertures.size() != n_cps || y0.size() != n_cps)
        throw ShapeMismatch("aperture/weight count disagrees with the influence control points");
    ARCLAT_CHECK(obj.target.size() == n_vox, "objective voxel count disagrees with the phantom");
    for (double y : y0) ARCLAT_CHECK(std::isfinite(y) && y >= 0.0, "beam weight must be nonnegative");

    // Dose is linear in y: d(y) = sum_cp y_cp * col_cp with col_cp the dose
    // of aperture cp at unit weight.
    const std::size_t bpc = D.beamlets_per_cp();
    std::vector<std::vector<double>> cols(n_cps);
    for (std::size_t cp = 0; cp < n_cps; ++cp) {
        const ApertureRaster& a = apertures[cp];
        if (a.open.size() != bpc) throw ShapeMismatch("aperture raster disagrees with the beamlet grid");
        cols[cp].assign(n_vox, 0.0);
        for (const auto& e : D.per_cp[cp]) cols[cp][e.voxel] += e.value * a.open[e.beamlet];
    }

    auto dose_of = [&](const std::vector<double>& y) {
        std::vector<double> d(n_vox, 0.0);
        for (std::size_t cp = 0; cp < n_cps; ++cp) {
            const double yc = y[cp];
            if (yc == 0.0) continue;
            const auto& col = cols[cp];
            for (std::size_t k = 0; k < n_vox; ++k) d[k] += yc * col[k];
        }
        return d;
    };

    RefineResult res;
    res.weights = y0;
    ObjectiveEval cur = evaluate_objective(dose_of(res.weights), obj);
    res.trace.push_back(cur.value);

    double step = 1.0;
    for (std::size_t iter = 0; iter < 500; ++iter) {
        std::vector<double> gy(n_cps, 0.0);
        for (std::size_t cp = 0; cp < n_cps; ++cp) {
            double acc = 0.0;
            const auto& col = cols[cp];
            for (std::size_t k = 0; k < n_vox; ++k) acc += col[k] * cur.gradient[k];
            gy[cp] = acc;
        }

        bool accepted = false;
        std::vector<double> cand(n_cps);
        for (std::size_t h = 0; h <= 60; ++h) {
            for (std::size_t cp = 0; cp < n_cps; ++cp)
                cand[cp] = std::max(res.weights[cp] - step * gy[cp], 0.0);
            const ObjectiveEval e = evaluate_objective(dose_of(cand), obj);
            if (e.value <= cur.value) {
                const double change = cur.value - e.value;
                res.weights = cand;
                const double prev = cur.value;
                cur = e;
                res.trace.push_back(cur.value);
                step *= 2.0;
                accepted = true;
                if (change <= 1e-6 * std::max(std::fabs(prev), 1e-300)) return res;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
    return res;
}

BeamCurves pdd_and_profile(const Phantom& ph, double field_mm, double profile_depth_mm,
                           bool inverse_square) {
    validate(ph);
    ARCLAT_CHECK(field_mm > 0.0, "field size must be positive");
    const double depth_max = ph.extent_y();
    ARCLAT_CHECK(depth_max >= 100.0, "phantom depth must reach the 100 mm normalization point");
    ARCLAT_CHECK(profile_depth_mm > 0.0 && profile_depth_mm <= depth_max,
                 "profile depth must lie inside the phantom");

    constexpr double kSad = 1000.0;
    constexpr double kSigma = 3.0;
    const double depth_iso = 0.5 * depth_max;  // isocenter mid-depth on the central axis
    auto primary = [&](double depth) {
        double val = std::exp(-ph.mu * depth);
        if (inverse_square) val *= sq(kSad / (kSad + depth - depth_iso));
        return val;
    };

    BeamCurves out;
    const auto n_depth = static_cast<std::size_t>(std::floor(depth_max));
    out.depth_mm.resize(n_depth);
    out.pdd.resize(n_depth);
    const double ref = primary(100.0);
    for (std::size_t i = 0; i < n_depth; ++i) {
        const double d = static_cast<double>(i + 1);
        out.depth_mm[i] = d;
        out.pdd[i] = primary(d) / ref;
    }

    // Open-field lateral shape: a top-hat of width field_mm convolved with
    // the lateral Gaussian, evaluated in closed form. The kernel is
    // separable, so once normalized on axis the profile is depth-free;
    // profile_depth_mm only has to be a valid depth.
    const double denom = kSigma * std::sqrt(2.0);
    auto shape = [&](double x) {
        return 0.5 * (std::erf((0.5 * field_mm - x) / denom) +
                      std::erf((0.5 * field_mm + x) / denom));
    };
    const auto half = static_cast<std::ptrdiff_t>(std::ceil(field_mm));
    const double axis = shape(0.0);
    for (std::ptrdiff_t i = -half; i <= half; ++i) {
        const double x = static_cast<double>(i);
        out.lateral_mm.push_back(x);
        out.profile.push_back(shape(x) / axis);
    }
    return out;
}

}  // namespace arclat
