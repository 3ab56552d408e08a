#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace sdrl {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    Vec2 normalized() const {
        const double n = norm();
        return {x / n, y / n};
    }
};

/// Closed centerline loop plus a constant half width. The loop is implicit:
/// the last point connects back to the first.
struct TrackSpec {
    std::vector<Vec2> centerline;
    double half_width = 0.0;
};

/// Stadium-shaped loop: two straights joined by semicircles. The first
/// centerline point sits mid-straight heading +x, which is also the spawn.
TrackSpec make_stadium_track(double straight_len, double radius, double half_width,
                             double spacing = 2.0);

/// Plain-text track file: a `half_width <w>` header line followed by one
/// `x y` centerline point per line. `#` starts a comment.
TrackSpec load_track(const std::string& path);
void save_track(const TrackSpec& spec, const std::string& path);

struct TrackProjection {
    double lateral = 0.0;        // signed offset, positive = left of travel
    double tangent_angle = 0.0;  // centerline direction at the closest point
    double arc_pos = 0.0;        // arclength of the closest point
    Vec2 closest;
};

/// Geometric queries against a validated track: projection onto the
/// centerline, inside test, and ray casts against the two boundary
/// polylines. Immutable after construction.
class TrackGeometry {
public:
    explicit TrackGeometry(TrackSpec spec);

    const TrackSpec& spec() const { return spec_; }
    double half_width() const { return spec_.half_width; }
    double total_length() const { return total_len_; }

    TrackProjection project(Vec2 p) const;
    bool inside(Vec2 p) const;

    /// Distance along the ray to the nearest boundary intersection, clipped
    /// to max_range; max_range when nothing is hit.
    double raycast(Vec2 origin, Vec2 dir, double max_range) const;

    Vec2 start_position() const { return spec_.centerline.front(); }
    double start_heading() const;

    /// Pose on the centerline at a given arclength (wrapped), heading along
    /// the local tangent.
    void pose_at(double arc, Vec2* position, double* heading) const;

    const std::vector<Vec2>& left_boundary() const { return left_; }
    const std::vector<Vec2>& right_boundary() const { return right_; }

private:
    TrackSpec spec_;
    std::vector<double> seg_len_;
    std::vector<double> seg_start_;  // cumulative arclength
    std::vector<Vec2> left_, right_;
    double total_len_ = 0.0;

    void validate() const;
    void build_boundaries();
};

inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

}  // namespace sdrl
