#include "sdrl/track.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "sdrl/errors.hpp"

namespace sdrl {

TrackSpec make_stadium_track(double straight_len, double radius, double half_width,
                             double spacing) {
    if (straight_len <= 0.0 || radius <= half_width || half_width <= 0.0 || spacing <= 0.0)
        throw ConfigError("make_stadium_track: invalid dimensions");
    TrackSpec spec;
    spec.half_width = half_width;
    const double half = straight_len / 2.0;
    // Bottom straight runs +x along y = -radius; spawn is its midpoint.
    auto add_line = [&](Vec2 a, Vec2 b) {
        const double len = (b - a).norm();
        const int n = std::max(1, static_cast<int>(std::floor(len / spacing)));
        for (int i = 0; i < n; ++i) spec.centerline.push_back(a + (b - a) * (double(i) / n));
    };
    auto add_arc = [&](Vec2 center, double a0, double a1) {
        const double len = std::abs(a1 - a0) * radius;
        const int n = std::max(3, static_cast<int>(std::floor(len / spacing)));
        for (int i = 0; i < n; ++i) {
            const double a = a0 + (a1 - a0) * (double(i) / n);
            spec.centerline.push_back({center.x + radius * std::cos(a),
                                       center.y + radius * std::sin(a)});
        }
    };
    add_line({0.0, -radius}, {half, -radius});
    add_arc({half, 0.0}, -M_PI / 2.0, M_PI / 2.0);
    add_line({half, radius}, {-half, radius});
    add_arc({-half, 0.0}, M_PI / 2.0, 3.0 * M_PI / 2.0);
    add_line({-half, -radius}, {0.0, -radius});
    return spec;
}

TrackSpec load_track(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open track file: " + path);
    TrackSpec spec;
    bool have_width = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        if (first == "half_width") {
            if (!(ls >> spec.half_width))
                throw ConfigError(path + ":" + std::to_string(lineno) + ": bad half_width");
            have_width = true;
        } else {
            Vec2 p;
            std::istringstream ps(line);
            if (!(ps >> p.x >> p.y))
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected `x y`");
            spec.centerline.push_back(p);
        }
    }
    if (!have_width) throw ConfigError(path + ": missing half_width header");
    return spec;
}

void save_track(const TrackSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write track file: " + path);
    out.precision(17);
    out << "half_width " << spec.half_width << "\n";
    for (const Vec2& p : spec.centerline) out << p.x << " " << p.y << "\n";
}

namespace {

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    const Vec2 r = b - a, s = d - c;
    const double den = r.cross(s);
    if (std::abs(den) < 1e-12) return false;
    const double t = (c - a).cross(s) / den;
    const double u = (c - a).cross(r) / den;
    const double eps = 1e-9;
    return t > eps && t < 1.0 - eps && u > eps && u < 1.0 - eps;
}

}  // namespace

TrackGeometry::TrackGeometry(TrackSpec spec) : spec_(std::move(spec)) {
    validate();
    const std::size_t n = spec_.centerline.size();
    seg_len_.resize(n);
    seg_start_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = spec_.centerline[i];
        const Vec2 b = spec_.centerline[(i + 1) % n];
        seg_start_[i] = total_len_;
        seg_len_[i] = (b - a).norm();
        total_len_ += seg_len_[i];
    }
    build_boundaries();
}

void TrackGeometry::validate() const {
    const auto& c = spec_.centerline;
    if (c.size() < 3) throw ConfigError("track: need at least 3 centerline points");
    if (spec_.half_width <= 0.0) throw ConfigError("track: half_width must be positive");
    const std::size_t n = c.size();
    for (std::size_t i = 0; i < n; ++i) {
        if ((c[(i + 1) % n] - c[i]).norm() < 1e-9)
            throw ConfigError("track: consecutive centerline points coincide at index " +
                              std::to_string(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            // segments sharing an endpoint may touch there, skip those pairs
            if ((j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_intersect(c[i], c[(i + 1) % n], c[j], c[(j + 1) % n]))
                throw ConfigError("track: centerline self-intersects (segments " +
                                  std::to_string(i) + ", " + std::to_string(j) + ")");
        }
    }
}

void TrackGeometry::build_boundaries() {
    const auto& c = spec_.centerline;
    const std::size_t n = c.size();
    left_.resize(n);
    right_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 t_prev = (c[i] - c[(i + n - 1) % n]).normalized();
        const Vec2 t_next = (c[(i + 1) % n] - c[i]).normalized();
        Vec2 norm_sum = {-(t_prev.y + t_next.y), t_prev.x + t_next.x};
        const double len = norm_sum.norm();
        if (len < 1e-6)
            throw ConfigError("track: hairpin at centerline index " + std::to_string(i));
        const Vec2 normal = {norm_sum.x / len, norm_sum.y / len};
        left_[i] = c[i] + normal * spec_.half_width;
        right_[i] = c[i] - normal * spec_.half_width;
    }
}

TrackProjection TrackGeometry::project(Vec2 p) const {
    const auto& c = spec_.centerline;
    const std::size_t n = c.size();
    double best_d2 = std::numeric_limits<double>::infinity();
    TrackProjection out;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = c[i];
        const Vec2 b = c[(i + 1) % n];
        const Vec2 ab = b - a;
        const double L2 = ab.dot(ab);
        double t = L2 > 0.0 ? (p - a).dot(ab) / L2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const Vec2 q = a + ab * t;
        const double d2 = (p - q).dot(p - q);
        if (d2 < best_d2) {
            best_d2 = d2;
            const Vec2 tang = ab.normalized();
            out.closest = q;
            out.tangent_angle = std::atan2(tang.y, tang.x);
            out.lateral = tang.cross(p - q);
            out.arc_pos = seg_start_[i] + t * seg_len_[i];
        }
    }
    return out;
}

bool TrackGeometry::inside(Vec2 p) const {
    return std::abs(project(p).lateral) <= spec_.half_width;
}

double TrackGeometry::raycast(Vec2 origin, Vec2 dir, double max_range) const {
    double best = max_range;
    auto cast_polyline = [&](const std::vector<Vec2>& poly) {
        const std::size_t n = poly.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 p = poly[i];
            const Vec2 s = poly[(i + 1) % n] - p;
            const double den = dir.cross(s);
            if (std::abs(den) < 1e-12) continue;
            const Vec2 r = p - origin;
            const double t = r.cross(s) / den;
            const double u = r.cross(dir) / den;
            if (t >= 1e-9 && u >= -1e-9 && u <= 1.0 + 1e-9) best = std::min(best, t);
        }
    };
    cast_polyline(left_);
    cast_polyline(right_);
    return best;
}

double TrackGeometry::start_heading() const {
    const Vec2 t = (spec_.centerline[1] - spec_.centerline[0]).normalized();
    return std::atan2(t.y, t.x);
}

void TrackGeometry::pose_at(double arc, Vec2* position, double* heading) const {
    arc = std::fmod(arc, total_len_);
    if (arc < 0.0) arc += total_len_;
    const std::size_t n = spec_.centerline.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (arc <= seg_start_[i] + seg_len_[i] || i + 1 == n) {
            const Vec2 a = spec_.centerline[i];
            const Vec2 b = spec_.centerline[(i + 1) % n];
            const Vec2 t = (b - a).normalized();
            const double local = arc - seg_start_[i];
            *position = a + t * local;
            *heading = std::atan2(t.y, t.x);
            return;
        }
    }
}

}  // namespace sdrl
