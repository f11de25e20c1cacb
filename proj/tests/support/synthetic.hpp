#pragma once

// Synthetic track generators shared by the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trajkit/numgrad.hpp"
#include "trajkit/types.hpp"

namespace trajkit::testsupport {

inline double heading_from_velocity(double vx, double vy) {
    return canonical_heading_deg(std::atan2(vy, vx) * 180.0 / 3.14159265358979323846);
}

struct TrackSpec {
    std::int64_t track_id = 1;
    std::string recording_id = "r0";
    std::string location_id = "1";
    double sample_hz = 2.5;
    int n_records = 21;
    double x0 = 0.0, y0 = 0.0;
    double noise_sd = 0.0; // gaussian position noise in meters
    std::uint64_t seed = 7;
};

// Straight-line motion at constant velocity (plus optional position noise).
inline Track make_linear_track(const TrackSpec& spec, double vx, double vy) {
    Track t;
    t.track_id = spec.track_id;
    t.recording_id = spec.recording_id;
    t.location_id = spec.location_id;
    t.agent_class = AgentClass::car;
    t.sample_hz = spec.sample_hz;
    Rng rng(spec.seed);
    const double dt = 1.0 / spec.sample_hz;
    for (int i = 0; i < spec.n_records; ++i) {
        TrackRecord r;
        r.frame = i;
        r.track_id = spec.track_id;
        r.recording_id = spec.recording_id;
        r.location_id = spec.location_id;
        r.agent_class = AgentClass::car;
        r.x = spec.x0 + vx * dt * i + (spec.noise_sd > 0 ? rng.gaussian(0, spec.noise_sd) : 0.0);
        r.y = spec.y0 + vy * dt * i + (spec.noise_sd > 0 ? rng.gaussian(0, spec.noise_sd) : 0.0);
        r.vx = vx;
        r.vy = vy;
        r.heading_deg = heading_from_velocity(vx, vy);
        t.records.push_back(std::move(r));
    }
    return t;
}

// Constant-speed circular arc with the given turn rate in degrees/second.
inline Track make_turning_track(const TrackSpec& spec, double speed, double turn_deg_per_s,
                                double initial_heading_deg = 0.0) {
    Track t;
    t.track_id = spec.track_id;
    t.recording_id = spec.recording_id;
    t.location_id = spec.location_id;
    t.agent_class = AgentClass::car;
    t.sample_hz = spec.sample_hz;
    Rng rng(spec.seed);
    const double dt = 1.0 / spec.sample_hz;
    double x = spec.x0, y = spec.y0;
    double heading = initial_heading_deg;
    for (int i = 0; i < spec.n_records; ++i) {
        TrackRecord r;
        r.frame = i;
        r.track_id = spec.track_id;
        r.recording_id = spec.recording_id;
        r.location_id = spec.location_id;
        r.agent_class = AgentClass::car;
        r.x = x + (spec.noise_sd > 0 ? rng.gaussian(0, spec.noise_sd) : 0.0);
        r.y = y + (spec.noise_sd > 0 ? rng.gaussian(0, spec.noise_sd) : 0.0);
        const double rad = heading * 3.14159265358979323846 / 180.0;
        r.vx = speed * std::cos(rad);
        r.vy = speed * std::sin(rad);
        r.heading_deg = canonical_heading_deg(heading);
        t.records.push_back(std::move(r));
        x += r.vx * dt;
        y += r.vy * dt;
        heading += turn_deg_per_s * dt;
    }
    return t;
}

// A perfectly stationary (parked) track.
inline Track make_static_track(const TrackSpec& spec) { return make_linear_track(spec, 0.0, 0.0); }

} // namespace trajkit::testsupport
