#include "sdrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "sdrl/errors.hpp"

namespace sdrl {

int EnvConfig::sensor_dim(int sensor) const {
    switch (sensor) {
        case kSensorPhysical: return kPhysicalDim;
        case kSensorLaser: return laser_frames * kLaserRays;
        case kSensorImage: return image_frames * image_h * image_w;
    }
    throw ConfigError("sensor_dim: bad sensor index");
}

std::array<int, kNumSensors> EnvConfig::sensor_dims() const {
    return {sensor_dim(0), sensor_dim(1), sensor_dim(2)};
}

int EnvConfig::total_obs_dim() const {
    return sensor_dim(0) + sensor_dim(1) + sensor_dim(2);
}

std::array<double, kPhysicalDim> physical_scales(const EnvConfig& cfg) {
    const double wheel_scale = cfg.v_max / cfg.wheel_radius;
    return {cfg.v_max, 10.0, 5.0, 1.0, M_PI,
            wheel_scale, wheel_scale, wheel_scale, wheel_scale,
            cfg.engine_idle + cfg.engine_k * cfg.v_max};
}

std::vector<double> flatten_observation(const MultiObservation& obs, const EnvConfig& cfg,
                                        const std::vector<int>& sensors) {
    std::vector<double> out;
    for (int s : sensors) {
        switch (s) {
            case kSensorPhysical: {
                const auto scales = physical_scales(cfg);
                for (int i = 0; i < kPhysicalDim; ++i)
                    out.push_back(obs.physical[i] / scales[i]);
                break;
            }
            case kSensorLaser:
                for (double v : obs.laser) out.push_back(v / cfg.max_range);
                break;
            case kSensorImage:
                out.insert(out.end(), obs.image.begin(), obs.image.end());
                break;
            default:
                throw ConfigError("flatten_observation: bad sensor index");
        }
    }
    return out;
}

MultiObservation corrupt(const MultiObservation& obs, const SensorNoiseSpec& spec,
                         const EnvConfig& cfg, RandomStream& rng) {
    for (double s : spec.sigma)
        if (s < 0.0) throw ConfigError("corrupt: sigma must be >= 0");
    MultiObservation out = obs;
    for (int sensor = 0; sensor < kNumSensors; ++sensor) {
        std::vector<double>* block = nullptr;
        switch (sensor) {
            case kSensorPhysical: block = &out.physical; break;
            case kSensorLaser: block = &out.laser; break;
            case kSensorImage: block = &out.image; break;
        }
        if (spec.failed[sensor]) {
            std::fill(block->begin(), block->end(), 0.0);
            out.available[sensor] = false;
            continue;
        }
        const double sigma = spec.sigma[sensor];
        if (sigma == 0.0) continue;
        // sigma is in normalized units; convert to each raw channel's scale
        if (sensor == kSensorPhysical) {
            const auto scales = physical_scales(cfg);
            for (int i = 0; i < kPhysicalDim; ++i)
                (*block)[i] += sigma * scales[i] * rng.gaussian();
        } else if (sensor == kSensorLaser) {
            for (double& v : *block) v += sigma * cfg.max_range * rng.gaussian();
        } else {
            for (double& v : *block) v += sigma * rng.gaussian();
        }
    }
    return out;
}

TrackEnv::TrackEnv(EnvConfig cfg)
    : cfg_(std::move(cfg)),
      geom_(cfg_.track.centerline.empty() ? make_stadium_track(80.0, 30.0, 5.0) : cfg_.track) {
    if (cfg_.dt <= 0.0 || cfg_.max_steps <= 0 || cfg_.max_range <= 0.0 ||
        cfg_.laser_frames <= 0 || cfg_.image_frames <= 0 || cfg_.image_h <= 0 ||
        cfg_.image_w <= 0 || cfg_.image_cell <= 0.0)
        throw ConfigError("TrackEnv: invalid configuration");
    cfg_.track = geom_.spec();
}

MultiObservation TrackEnv::reset(std::uint64_t seed) {
    // The car spawns on the centerline with zero speed; the seed hashes to a
    // start arclength so that differently-seeded episodes sample different
    // parts of the track. Seed 0 keeps the canonical spawn point.
    state_ = CarState{};
    const double frac = static_cast<double>((seed * 2654435761ULL) % 997ULL) / 997.0;
    geom_.pose_at(frac * geom_.total_length(), &state_.position, &state_.heading);
    state_.engine_speed = cfg_.engine_idle;
    // on the centerline by construction; exact zeros, not projection noise
    state_.track_pos = 0.0;
    state_.angle = 0.0;
    step_count_ = 0;
    fill_stacks();
    return observe();
}

void TrackEnv::set_pose(Vec2 position, double heading, double v_x) {
    state_.position = position;
    state_.heading = heading;
    state_.v_x = v_x;
    state_.v_y = 0.0;
    state_.yaw_rate = 0.0;
    refresh_projection();
    refresh_derived();
    fill_stacks();
}

void TrackEnv::refresh_projection() {
    const TrackProjection proj = geom_.project(state_.position);
    state_.track_pos = proj.lateral / cfg_.track.half_width;
    state_.angle = wrap_angle(state_.heading - proj.tangent_angle);
}

void TrackEnv::refresh_derived() {
    const double wheel = state_.v_x / cfg_.wheel_radius;
    state_.wheel_speeds = {wheel, wheel, wheel, wheel};
    state_.engine_speed = cfg_.engine_idle + cfg_.engine_k * state_.v_x;
}

TrackEnv::StepResult TrackEnv::step(std::array<double, 2> action) {
    if (!std::isfinite(action[0]) || !std::isfinite(action[1]))
        throw NumericError("env step: non-finite action");
    double steer = action[0], accel = action[1];
    if (steer < -1.0 || steer > 1.0 || accel < -1.0 || accel > 1.0) {
        ++clip_count_;
        if (!warned_clip_) {
            std::cerr << "[env] action outside [-1,1], clipping (warned once)\n";
            warned_clip_ = true;
        }
        steer = std::clamp(steer, -1.0, 1.0);
        accel = std::clamp(accel, -1.0, 1.0);
    }

    // Kinematic bicycle, explicit order: yaw rate from the current speed,
    // then heading, then speed, then position under the new heading.
    const double yaw_rate = (state_.v_x / cfg_.wheelbase) * std::tan(steer * cfg_.max_steer);
    state_.heading = wrap_angle(state_.heading + cfg_.dt * yaw_rate);
    state_.v_x = std::clamp(state_.v_x + cfg_.dt * (accel * cfg_.a_max - cfg_.c_drag * state_.v_x),
                            0.0, cfg_.v_max);
    state_.position.x += cfg_.dt * state_.v_x * std::cos(state_.heading);
    state_.position.y += cfg_.dt * state_.v_x * std::sin(state_.heading);
    state_.yaw_rate = yaw_rate;
    state_.v_y = 0.5 * cfg_.wheelbase * yaw_rate;
    refresh_derived();
    refresh_projection();

    ++step_count_;
    const bool off_track = std::abs(state_.track_pos) > 1.0;
    const bool out_of_budget = step_count_ >= cfg_.max_steps;

    StepResult res;
    res.reward = reward(state_) + (off_track ? -1.0 : 0.0);
    res.done = off_track || out_of_budget;

    laser_stack_.push_back(raycast_laser());
    laser_stack_.pop_front();
    image_stack_.push_back(render_grid());
    image_stack_.pop_front();
    res.obs = observe();
    return res;
}

double reward(const CarState& state) {
    return state.v_x * std::cos(state.angle) - state.v_x * std::abs(std::sin(state.angle)) -
           state.v_x * std::abs(state.track_pos);
}

std::vector<double> TrackEnv::raycast_laser() const {
    std::vector<double> ranges(kLaserRays);
    for (int k = 0; k < kLaserRays; ++k) {
        // beam 0 at -90 deg (right), beam 18 at +90 deg (left)
        const double rel = -M_PI / 2.0 + k * (M_PI / (kLaserRays - 1));
        const double a = state_.heading + rel;
        ranges[k] = geom_.raycast(state_.position, {std::cos(a), std::sin(a)}, cfg_.max_range);
    }
    return ranges;
}

std::vector<double> TrackEnv::render_grid() const {
    const int H = cfg_.image_h, W = cfg_.image_w;
    std::vector<double> img(static_cast<std::size_t>(H) * W);
    const Vec2 fwd = {std::cos(state_.heading), std::sin(state_.heading)};
    const Vec2 left = {-std::sin(state_.heading), std::cos(state_.heading)};
    for (int r = 0; r < H; ++r) {
        const double ahead = ((H - 1) / 2.0 - r) * cfg_.image_cell;
        for (int c = 0; c < W; ++c) {
            const double side = ((W - 1) / 2.0 - c) * cfg_.image_cell;
            const Vec2 p = state_.position + fwd * ahead + left * side;
            img[r * W + c] = geom_.inside(p) ? 1.0 : 0.0;
        }
    }
    return img;
}

void TrackEnv::fill_stacks() {
    laser_stack_.clear();
    image_stack_.clear();
    const auto scan = raycast_laser();
    const auto img = render_grid();
    for (int i = 0; i < cfg_.laser_frames; ++i) laser_stack_.push_back(scan);
    for (int i = 0; i < cfg_.image_frames; ++i) image_stack_.push_back(img);
}

MultiObservation TrackEnv::observe() {
    MultiObservation obs;
    obs.physical = {state_.v_x,
                    state_.v_y,
                    state_.yaw_rate,
                    state_.track_pos,
                    state_.angle,
                    state_.wheel_speeds[0],
                    state_.wheel_speeds[1],
                    state_.wheel_speeds[2],
                    state_.wheel_speeds[3],
                    state_.engine_speed};
    obs.laser.reserve(static_cast<std::size_t>(cfg_.laser_frames) * kLaserRays);
    for (const auto& frame : laser_stack_)
        obs.laser.insert(obs.laser.end(), frame.begin(), frame.end());
    obs.image.reserve(static_cast<std::size_t>(cfg_.image_frames) * cfg_.image_h * cfg_.image_w);
    for (const auto& frame : image_stack_)
        obs.image.insert(obs.image.end(), frame.begin(), frame.end());
    return obs;
}

void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write trajectory file: " + path);
    out.precision(17);
    out << "t,x,y,heading,v_x,track_pos,angle,reward,done\n";
    for (const auto& r : rows)
        out << r.t << ',' << r.x << ',' << r.y << ',' << r.heading << ',' << r.v_x << ','
            << r.track_pos << ',' << r.angle << ',' << r.reward << ',' << (r.done ? 1 : 0)
            << '\n';
}

}  // namespace sdrl
