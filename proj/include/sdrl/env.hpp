#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "sdrl/rng.hpp"
#include "sdrl/track.hpp"

namespace sdrl {

inline constexpr int kNumSensors = 3;
inline constexpr int kPhysicalDim = 10;
inline constexpr int kLaserRays = 19;
inline constexpr int kActionDim = 2;

enum Sensor : int { kSensorPhysical = 0, kSensorLaser = 1, kSensorImage = 2 };

struct CarState {
    Vec2 position;
    double heading = 0.0;
    double v_x = 0.0;
    double v_y = 0.0;
    double yaw_rate = 0.0;
    std::array<double, 4> wheel_speeds{0.0, 0.0, 0.0, 0.0};
    double engine_speed = 0.0;
    double track_pos = 0.0;  // lateral offset / half_width, |.| <= 1 means on track
    double angle = 0.0;      // heading error to the centerline tangent
};

/// One observation split into the three sensor blocks, raw units:
/// physical in SI, laser in meters (clipped to max range), image occupancy
/// in [0,1]. Frame stacks are ordered newest-last.
struct MultiObservation {
    std::vector<double> physical;  // kPhysicalDim
    std::vector<double> laser;     // laser_frames * kLaserRays
    std::vector<double> image;     // image_frames * 1 * H * W
    std::array<bool, kNumSensors> available{true, true, true};
};

struct SensorNoiseSpec {
    std::array<double, kNumSensors> sigma{0.0, 0.0, 0.0};  // in normalized units
    std::array<bool, kNumSensors> failed{false, false, false};
};

struct EnvConfig {
    TrackSpec track;  // empty centerline -> desk stadium default
    double dt = 0.05;
    int max_steps = 400;
    double max_range = 50.0;
    int laser_frames = 1;
    int image_frames = 1;
    int image_h = 16;
    int image_w = 16;
    double image_cell = 1.0;  // meters per pixel
    // kinematic bicycle constants
    double wheelbase = 2.5;
    double max_steer = 0.5;  // rad at |steer| = 1
    double a_max = 4.0;      // m/s^2 at |accel| = 1
    double c_drag = 0.1;
    double v_max = 30.0;
    double wheel_radius = 0.3;
    double engine_idle = 800.0;
    double engine_k = 120.0;

    int sensor_dim(int sensor) const;
    std::array<int, kNumSensors> sensor_dims() const;
    int total_obs_dim() const;
};

/// Per-channel scales dividing the physical block when observations are
/// flattened for an agent; keeps every block O(1).
std::array<double, kPhysicalDim> physical_scales(const EnvConfig& cfg);

/// Normalized flat view of the selected sensor blocks, concatenated in
/// sensor order.
std::vector<double> flatten_observation(const MultiObservation& obs, const EnvConfig& cfg,
                                        const std::vector<int>& sensors);

/// Additive Gaussian noise per sensor (sigma in normalized units, scaled to
/// each channel) and hard failures (block zeroed, availability cleared).
/// Draws noise sensor-by-sensor in block order; failed or sigma=0 sensors
/// consume no randomness.
MultiObservation corrupt(const MultiObservation& obs, const SensorNoiseSpec& spec,
                         const EnvConfig& cfg, RandomStream& rng);

/// Deterministic 2D track-driving simulator producing the three sensor
/// modalities and the drift-penalized reward.
class TrackEnv {
public:
    explicit TrackEnv(EnvConfig cfg);

    struct StepResult {
        MultiObservation obs;
        double reward = 0.0;
        bool done = false;
    };

    MultiObservation reset(std::uint64_t seed);
    StepResult step(std::array<double, 2> action);

    const CarState& state() const { return state_; }
    const EnvConfig& config() const { return cfg_; }
    const TrackGeometry& geometry() const { return geom_; }
    int steps() const { return step_count_; }
    long action_clip_count() const { return clip_count_; }

    /// Current raw laser scan (19 beams, -90..+90 degrees, left positive).
    std::vector<double> raycast_laser() const;
    /// Current occupancy image, H*W row-major, row 0 farthest ahead,
    /// column 0 leftmost.
    std::vector<double> render_grid() const;

    /// Places the car at an arbitrary pose; analysis and geometry tests use
    /// this to probe sensors off the nominal trajectory.
    void set_pose(Vec2 position, double heading, double v_x);

private:
    EnvConfig cfg_;
    TrackGeometry geom_;
    CarState state_;
    int step_count_ = 0;
    bool warned_clip_ = false;
    long clip_count_ = 0;
    std::deque<std::vector<double>> laser_stack_;
    std::deque<std::vector<double>> image_stack_;

    void refresh_projection();
    void refresh_derived();
    MultiObservation observe();
    void fill_stacks();
};

/// r = v_x cos(angle) - v_x |sin(angle)| - v_x |track_pos|. The off-track
/// termination penalty of -1 is applied by step(), not here.
double reward(const CarState& state);

struct TrajectoryRow {
    double t, x, y, heading, v_x, track_pos, angle, reward;
    bool done;
};

void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRow>& rows);

}  // namespace sdrl
