#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trajkit/errors.hpp"

// Canonical in-memory types shared by every other header. All of them are
// plain immutable-after-construction value types and safe to share between
// threads.

namespace trajkit {

enum class AgentClass : std::uint8_t {
    car,
    truck,
    van,
    bus,
    trailer,
    motorcycle,
    bicycle,
    pedestrian,
    other,
};

constexpr std::array<AgentClass, 9> all_agent_classes = {
    AgentClass::car,        AgentClass::truck,   AgentClass::van,
    AgentClass::bus,        AgentClass::trailer, AgentClass::motorcycle,
    AgentClass::bicycle,    AgentClass::pedestrian, AgentClass::other,
};

inline std::string_view to_string(AgentClass c) {
    switch (c) {
        case AgentClass::car: return "car";
        case AgentClass::truck: return "truck";
        case AgentClass::van: return "van";
        case AgentClass::bus: return "bus";
        case AgentClass::trailer: return "trailer";
        case AgentClass::motorcycle: return "motorcycle";
        case AgentClass::bicycle: return "bicycle";
        case AgentClass::pedestrian: return "pedestrian";
        case AgentClass::other: return "other";
    }
    return "other";
}

// Unknown labels map to `other` so a new dataset label never aborts a run.
inline AgentClass agent_class_from_label(std::string_view label) {
    std::string s(label);
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (s == "car") return AgentClass::car;
    if (s == "truck" || s == "truck_bus") return AgentClass::truck;
    if (s == "van") return AgentClass::van;
    if (s == "bus") return AgentClass::bus;
    if (s == "trailer") return AgentClass::trailer;
    if (s == "motorcycle") return AgentClass::motorcycle;
    if (s == "bicycle" || s == "cycle") return AgentClass::bicycle;
    if (s == "pedestrian" || s == "pedestrian/bicycle") return AgentClass::pedestrian;
    return AgentClass::other;
}

// One timestamped sample of one agent, in world-plane meters.
// vx/vy are carried through from the source files but are not model inputs.
// heading_deg is canonical degrees in [0, 360); for highway recordings that
// provide no heading the slot holds the raw distance-headway value instead
// (see Track::heading_is_dhw).
struct TrackRecord {
    std::int64_t frame = 0;
    std::int64_t track_id = 0;
    double x = 0.0;
    double y = 0.0;
    double vx = 0.0;
    double vy = 0.0;
    double heading_deg = 0.0;
    AgentClass agent_class = AgentClass::other;
    std::string recording_id;
    std::string location_id;

    friend bool operator==(const TrackRecord&, const TrackRecord&) = default;
};

// The full trajectory of one agent within one recording, sorted by frame.
struct Track {
    std::int64_t track_id = 0;
    std::string recording_id;
    std::string location_id;
    AgentClass agent_class = AgentClass::car;
    std::vector<TrackRecord> records;
    double sample_hz = 25.0;
    // True when the heading slot carries a raw distance-headway substitute
    // rather than an angle; validation then skips the [0,360) range check.
    bool heading_is_dhw = false;

    friend bool operator==(const Track&, const Track&) = default;
};

// Per-step model feature: the position increment expressed as velocity,
// plus the normalized heading (used only when an experiment runs oriented).
struct FeatureVec {
    double dvx = 0.0;
    double dvy = 0.0;
    double h = 0.0;

    double component(int i) const {
        switch (i) {
            case 0: return dvx;
            case 1: return dvy;
            default: return h;
        }
    }
    void set_component(int i, double v) {
        switch (i) {
            case 0: dvx = v; break;
            case 1: dvy = v; break;
            default: h = v; break;
        }
    }

    friend bool operator==(const FeatureVec&, const FeatureVec&) = default;
};

struct Provenance {
    std::string recording_id;
    std::int64_t track_id = 0;
    std::int64_t start_frame = 0;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

// One (observed, future) training or evaluation instance. Features are kept
// in raw (un-normalized) units; normalization happens at the model boundary.
struct WindowSample {
    std::vector<FeatureVec> obs;
    std::vector<FeatureVec> target;
    double last_obs_x = 0.0;     // absolute position at the final observed step
    double last_obs_y = 0.0;
    double dt = 0.4;             // seconds between consecutive steps
    Provenance prov;

    friend bool operator==(const WindowSample&, const WindowSample&) = default;
};

// Per-feature z-normalization statistics, fitted on the training split only.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> sd;

    int dim() const { return static_cast<int>(mean.size()); }

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

// ---------------------------------------------------------------------------
// Track validation

enum class ValidationKind {
    non_monotonic_frames,
    heading_out_of_range,
    non_finite_coordinate,
    negative_frame,
    inconsistent_identity,
    bad_sample_rate,
};

inline std::string_view to_string(ValidationKind k) {
    switch (k) {
        case ValidationKind::non_monotonic_frames: return "NonMonotonicFrames";
        case ValidationKind::heading_out_of_range: return "HeadingOutOfRange";
        case ValidationKind::non_finite_coordinate: return "NonFiniteCoordinate";
        case ValidationKind::negative_frame: return "NegativeFrame";
        case ValidationKind::inconsistent_identity: return "InconsistentIdentity";
        case ValidationKind::bad_sample_rate: return "BadSampleRate";
    }
    return "?";
}

struct ValidationIssue {
    ValidationKind kind;
    std::size_t record_index;

    friend bool operator==(const ValidationIssue&, const ValidationIssue&) = default;
};

// Reports every violated invariant with the index of the offending record.
// An empty result means the track satisfies all invariants.
inline std::vector<ValidationIssue> validate_track(const Track& t) {
    std::vector<ValidationIssue> issues;
    if (!(t.sample_hz > 0.0)) {
        issues.push_back({ValidationKind::bad_sample_rate, 0});
    }
    for (std::size_t i = 0; i < t.records.size(); ++i) {
        const TrackRecord& r = t.records[i];
        if (r.frame < 0) {
            issues.push_back({ValidationKind::negative_frame, i});
        }
        if (i > 0 && r.frame <= t.records[i - 1].frame) {
            issues.push_back({ValidationKind::non_monotonic_frames, i});
        }
        if (!t.heading_is_dhw && !(r.heading_deg >= 0.0 && r.heading_deg < 360.0)) {
            issues.push_back({ValidationKind::heading_out_of_range, i});
        }
        if (!std::isfinite(r.x) || !std::isfinite(r.y)) {
            issues.push_back({ValidationKind::non_finite_coordinate, i});
        }
        if (r.track_id != t.track_id || r.recording_id != t.recording_id ||
            r.agent_class != t.agent_class) {
            issues.push_back({ValidationKind::inconsistent_identity, i});
        }
    }
    return issues;
}

// Folds any angle in degrees into the canonical [0, 360) range.
inline double canonical_heading_deg(double deg) {
    double h = std::fmod(deg, 360.0);
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h = 0.0; // fmod can land exactly on 360 after the += above
    return h;
}

inline double radians_to_heading_deg(double rad) {
    return canonical_heading_deg(rad * 180.0 / 3.14159265358979323846);
}

} // namespace trajkit
