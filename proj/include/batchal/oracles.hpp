#pragma once

// Closed-form engineering simulators used as labeling oracles, the design
// spaces they live on, and uniform pool sampling over those spaces.
// All quantities are SI: meters, pascals, radians.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "batchal/error.hpp"
#include "batchal/random.hpp"

namespace batchal::oracles {

struct Dimension {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
    std::string unit;
};

struct DesignSpace {
    std::vector<Dimension> dims;

    std::size_t size() const { return dims.size(); }

    void validate() const {
        if (dims.empty()) throw ConfigError("DesignSpace: no dimensions");
        std::set<std::string> seen;
        for (const auto& d : dims) {
            if (!(d.lo < d.hi)) throw ConfigError("DesignSpace: dimension '" + d.name + "' needs lo < hi");
            if (!seen.insert(d.name).second) throw ConfigError("DesignSpace: duplicate dimension '" + d.name + "'");
        }
    }

    bool contains(std::span<const double> x) const {
        if (x.size() != dims.size()) return false;
        for (std::size_t i = 0; i < dims.size(); ++i)
            if (!(x[i] >= dims[i].lo && x[i] <= dims[i].hi)) return false;
        return true;
    }

    /// Index of the named dimension; throws ConfigError when absent.
    std::size_t index_of(std::string_view name) const {
        for (std::size_t i = 0; i < dims.size(); ++i)
            if (dims[i].name == name) return i;
        throw ConfigError("DesignSpace: no dimension named '" + std::string(name) + "'");
    }

    /// Min-max scaling of a point into [0,1]^d.
    std::vector<double> normalize(std::span<const double> x) const {
        std::vector<double> u(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) u[i] = (x[i] - dims[i].lo) / (dims[i].hi - dims[i].lo);
        return u;
    }
};

using DesignPoint = std::vector<double>;
using Feasibility = std::function<bool(std::span<const double>)>;

/// A named, deterministic labeling function over a design space.
struct Oracle {
    std::string name;
    DesignSpace space;
    std::function<double(std::span<const double>)> eval;
    /// Joint constraint beyond the box bounds; empty means every box point is valid.
    Feasibility feasible;

    bool accepts(std::span<const double> x) const { return space.contains(x) && (!feasible || feasible(x)); }

    double operator()(std::span<const double> x) const {
        if (x.size() != space.size())
            throw DomainError(name + ": expected " + std::to_string(space.size()) + " coordinates, got " +
                              std::to_string(x.size()));
        if (!accepts(x)) throw DomainError(name + ": point outside the design space");
        return eval(x);
    }
};

// ---------------------------------------------------------------------------
// Pressure vessel

struct VesselConstants {
    double rho_seawater = 1027.0;  // kg/m^3
    double g = 9.81;               // m/s^2
    double safety_factor = 1.5;
};

/// rho * g * depth * SF.
inline double crush_pressure(double depth, const VesselConstants& consts = {}) {
    if (!(depth >= 0.0)) throw DomainError("crush_pressure: depth must be >= 0");
    if (!(consts.rho_seawater > 0.0 && consts.g > 0.0 && consts.safety_factor > 0.0))
        throw DomainError("crush_pressure: constants must be positive");
    return consts.rho_seawater * consts.g * depth * consts.safety_factor;
}

struct PrincipalStresses {
    double tangential;
    double radial;
    double longitudinal;
};

/// Thick-walled closed-end cylinder under external pressure only.
inline PrincipalStresses lame_stresses(double a, double t, double p_o, double r) {
    if (!(a > 0.0)) throw DomainError("lame_stresses: inner radius must be > 0");
    if (!(t > 0.0)) throw DomainError("lame_stresses: wall thickness must be > 0");
    if (!(p_o >= 0.0)) throw DomainError("lame_stresses: external pressure must be >= 0");
    const double b = a + t;
    if (!(r >= a && r <= b)) throw DomainError("lame_stresses: radius outside the wall [a, a+t]");
    const double k = -p_o * b * b / (b * b - a * a);
    const double s = (a * a) / (r * r);
    return {k * (1.0 + s), k * (1.0 - s), k};
}

inline double von_mises(double s_t, double s_r, double s_l) {
    const double d1 = s_l - s_t;
    const double d2 = s_t - s_r;
    const double d3 = s_r - s_l;
    return std::sqrt((d1 * d1 + d2 * d2 + d3 * d3) / 2.0);
}

inline double von_mises(const PrincipalStresses& s) { return von_mises(s.tangential, s.radial, s.longitudinal); }

struct VesselDesign {
    double depth;   // m
    double length;  // m, has no effect on the Lame model
    double radius;  // inner radius a, m
    double thickness;
};

/// Peak equivalent stress through the wall. The equivalent stress equals
/// sqrt(3) * |k| * a^2 / r^2, so the maximum sits on the inner surface r = a.
inline double max_vessel_stress(const VesselDesign& d, const VesselConstants& consts = {}) {
    if (!(d.length >= 0.0)) throw DomainError("max_vessel_stress: length must be >= 0");
    const double p_o = crush_pressure(d.depth, consts);
    return von_mises(lame_stresses(d.radius, d.thickness, p_o, d.radius));
}

inline DesignSpace vessel_space() {
    return {{{"depth", 100.0, 6000.0, "m"},
             {"length", 0.050, 0.600, "m"},
             {"radius", 0.020, 0.300, "m"},
             {"thickness", 0.005, 0.060, "m"}}};
}

inline Oracle vessel_oracle(DesignSpace space = vessel_space()) {
    space.validate();
    const std::size_t i_depth = space.index_of("depth"), i_len = space.index_of("length"),
                      i_rad = space.index_of("radius"), i_thk = space.index_of("thickness");
    Oracle o;
    o.name = "vessel_max_stress";
    o.space = std::move(space);
    o.eval = [=](std::span<const double> x) {
        return max_vessel_stress({x[i_depth], x[i_len], x[i_rad], x[i_thk]});
    };
    o.feasible = [=](std::span<const double> x) { return x[i_thk] < x[i_rad]; };
    return o;
}

// ---------------------------------------------------------------------------
// Myring hull

struct MyringHull {
    double nose;      // a, m
    double body;      // b, m
    double tail;      // c, m
    double diameter;  // D, m
    double shape_index;  // n >= 1
    double tail_angle;   // theta, rad

    double length() const { return nose + body + tail; }

    void validate() const {
        if (!(nose > 0.0 && body > 0.0 && tail > 0.0 && diameter > 0.0))
            throw DomainError("MyringHull: section lengths and diameter must be > 0");
        if (!(shape_index >= 1.0)) throw DomainError("MyringHull: shape index must be >= 1");
        if (!(tail_angle >= 0.0 && tail_angle < std::numbers::pi / 2))
            throw DomainError("MyringHull: tail angle must lie in [0, pi/2)");
    }
};

namespace detail {

inline double nose_radius(const MyringHull& h, double x) {
    const double u = (x - h.nose) / h.nose;
    return 0.5 * h.diameter * std::pow(std::max(0.0, 1.0 - u * u), 1.0 / h.shape_index);
}

inline double tail_radius(const MyringHull& h, double x) {
    const double s = x - h.nose - h.body;
    const double c = h.tail;
    const double D = h.diameter;
    const double tn = std::tan(h.tail_angle);
    return 0.5 * D - (3.0 * D / (2.0 * c * c) - tn / c) * s * s + (D / (c * c * c) - tn / (c * c)) * s * s * s;
}

// Composite Simpson on [lo, hi], doubling the interval count from `start`
// until successive estimates agree to `rel_tol`.
template <class F>
double simpson(F&& f, double lo, double hi, std::size_t start = 2048, double rel_tol = 1e-10) {
    auto rule = [&](std::size_t n) {
        const double h = (hi - lo) / double(n);
        double sum = f(lo) + f(hi);
        for (std::size_t i = 1; i < n; ++i) sum += f(lo + h * double(i)) * (i % 2 ? 4.0 : 2.0);
        return sum * h / 3.0;
    };
    double prev = rule(start);
    for (std::size_t n = start * 2; n <= (std::size_t{1} << 22); n *= 2) {
        const double cur = rule(n);
        if (std::abs(cur - prev) <= rel_tol * std::abs(cur)) return cur;
        prev = cur;
    }
    return prev;
}

}  // namespace detail

/// Hull radius at axial station x: power-law nose, cylindrical body, cubic tail.
inline double myring_radius(double x, const MyringHull& h) {
    h.validate();
    const double total = h.length();
    if (!(x >= 0.0 && x <= total)) throw DomainError("myring_radius: x outside [0, a+b+c]");
    if (x <= h.nose) return detail::nose_radius(h, x);
    if (x <= h.nose + h.body) return 0.5 * h.diameter;
    return std::max(0.0, detail::tail_radius(h, x));
}

/// Displaced volume pi * integral of r(x)^2 over the hull.
///
/// The nose integrand has an infinite slope at the tip for n > 2, so that
/// section is integrated in the angle phi with x = a (1 - sin phi), which
/// turns the integrand into a smooth power of cos phi.
inline double hull_volume(const MyringHull& h) {
    h.validate();
    const double R = 0.5 * h.diameter;
    const double p = 2.0 / h.shape_index;
    const double nose = R * R * h.nose *
                        detail::simpson([p](double phi) { return std::pow(std::cos(phi), 2.0 * p + 1.0); }, 0.0,
                                        std::numbers::pi / 2);
    const double body = R * R * h.body;
    const double tail = detail::simpson(
        [&](double x) {
            const double r = std::max(0.0, detail::tail_radius(h, x));
            return r * r;
        },
        h.nose + h.body, h.length());
    return std::numbers::pi * (nose + body + tail);
}

inline DesignSpace myring_space() {
    return {{{"diameter", 0.050, 0.200, "m"},
             {"nose", 0.050, 0.600, "m"},
             {"body", 0.001, 1.850, "m"},
             {"tail", 0.050, 0.600, "m"},
             {"shape_index", 1.0, 5.0, ""},
             {"tail_angle", 0.0, 50.0 * std::numbers::pi / 180.0, "rad"}}};
}

inline Oracle myring_oracle(DesignSpace space = myring_space()) {
    space.validate();
    const std::size_t iD = space.index_of("diameter"), ia = space.index_of("nose"), ib = space.index_of("body"),
                      ic = space.index_of("tail"), in = space.index_of("shape_index"),
                      ith = space.index_of("tail_angle");
    Oracle o;
    o.name = "myring_volume";
    o.space = std::move(space);
    o.eval = [=](std::span<const double> x) {
        return hull_volume({x[ia], x[ib], x[ic], x[iD], x[in], x[ith]});
    };
    return o;
}

// ---------------------------------------------------------------------------
// Registry and sampling

inline std::vector<std::string> oracle_names() { return {"vessel_max_stress", "myring_volume"}; }

inline DesignSpace default_space(std::string_view name) {
    if (name == "vessel_max_stress") return vessel_space();
    if (name == "myring_volume") return myring_space();
    throw ConfigError("unknown oracle '" + std::string(name) + "'");
}

/// Builds the named oracle, optionally over a caller-supplied space.
inline Oracle make_oracle(std::string_view name, const DesignSpace* space = nullptr) {
    if (name == "vessel_max_stress") return vessel_oracle(space ? *space : vessel_space());
    if (name == "myring_volume") return myring_oracle(space ? *space : myring_space());
    throw ConfigError("unknown oracle '" + std::string(name) + "'");
}

/// n points with each coordinate i.i.d. uniform on [lo, hi). Points that fail
/// `feasible` are redrawn.
inline std::vector<DesignPoint> sample_pool(const DesignSpace& space, std::size_t n, std::uint64_t seed,
                                            const Feasibility& feasible = {}) {
    space.validate();
    if (n == 0) throw ConfigError("sample_pool: n must be >= 1");
    Rng rng(derive_seed(seed, {0x9001}));
    std::vector<DesignPoint> pool;
    pool.reserve(n);
    constexpr std::size_t kMaxRejects = 1'000'000;
    std::size_t rejects = 0;
    while (pool.size() < n) {
        DesignPoint x(space.size());
        for (std::size_t i = 0; i < space.size(); ++i) {
            // guard the half-open upper bound against rounding up to hi
            x[i] = uniform_real(rng, space.dims[i].lo, space.dims[i].hi);
            if (x[i] >= space.dims[i].hi) x[i] = std::nextafter(space.dims[i].hi, space.dims[i].lo);
        }
        if (feasible && !feasible(x)) {
            if (++rejects > kMaxRejects) throw ConfigError("sample_pool: feasible region is (nearly) empty");
            continue;
        }
        pool.push_back(std::move(x));
    }
    return pool;
}

inline std::vector<DesignPoint> sample_pool(const Oracle& oracle, std::size_t n, std::uint64_t seed) {
    return sample_pool(oracle.space, n, seed, oracle.feasible);
}

}  // namespace batchal::oracles
