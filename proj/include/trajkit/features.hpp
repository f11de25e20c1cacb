#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "trajkit/binio.hpp"
#include "trajkit/errors.hpp"
#include "trajkit/types.hpp"

// Turns canonical tracks into model-ready window samples: frame-rate
// decimation, increment/heading features, sliding windows and train-split
// z-normalization. Everything here is a pure function over immutable tracks.

namespace trajkit {

struct WindowingConfig {
    int obs_len = 8;
    int pred_len = 12;
    int stride = 1; // fixed; kept explicit so files record it
    double target_hz = 2.5;
    bool oriented = false;

    int feature_dim() const { return oriented ? 3 : 2; }
    double dt() const { return 1.0 / target_hz; }

    friend bool operator==(const WindowingConfig&, const WindowingConfig&) = default;
};

inline void check_windowing(const WindowingConfig& cfg) {
    if (cfg.obs_len < 2) throw ConfigError("windowing: obs_len must be >= 2");
    if (cfg.pred_len < 1) throw ConfigError("windowing: pred_len must be >= 1");
    if (cfg.stride != 1) throw ConfigError("windowing: stride is fixed at 1");
    if (!(cfg.target_hz > 0.0)) throw ConfigError("windowing: target_hz must be positive");
}

// ---------------------------------------------------------------------------
// Resampling and gap handling

// Integer decimation factor from source to target rate, or an error when the
// ratio is not a positive integer.
inline int decimation_factor(double source_hz, double target_hz) {
    const double ratio = source_hz / target_hz;
    const double rounded = std::round(ratio);
    if (!(rounded >= 1.0) || std::abs(ratio - rounded) > 1e-9) {
        throw ConfigError("non-integer decimation: " + std::to_string(source_hz) + " Hz to " +
                          std::to_string(target_hz) + " Hz");
    }
    return static_cast<int>(rounded);
}

// Keeps records at indices 0, k, 2k, ... where k = source_hz / target_hz.
inline Track resample(const Track& t, double target_hz) {
    const int k = decimation_factor(t.sample_hz, target_hz);
    Track out = t;
    out.records.clear();
    for (std::size_t i = 0; i < t.records.size(); i += static_cast<std::size_t>(k)) {
        out.records.push_back(t.records[i]);
    }
    out.sample_hz = target_hz;
    return out;
}

// Splits a track into gap-free segments. The nominal frame step is the
// smallest positive delta seen in the track; any larger jump is a gap and
// windows must not span it.
inline std::vector<Track> split_contiguous(const Track& t) {
    if (t.records.size() < 2) return {t};
    std::int64_t step = 0;
    for (std::size_t i = 1; i < t.records.size(); ++i) {
        const std::int64_t d = t.records[i].frame - t.records[i - 1].frame;
        if (d > 0 && (step == 0 || d < step)) step = d;
    }
    std::vector<Track> segments;
    Track cur = t;
    cur.records.clear();
    cur.records.push_back(t.records.front());
    for (std::size_t i = 1; i < t.records.size(); ++i) {
        const std::int64_t d = t.records[i].frame - t.records[i - 1].frame;
        if (d != step) {
            segments.push_back(cur);
            cur.records.clear();
        }
        cur.records.push_back(t.records[i]);
    }
    segments.push_back(cur);
    return segments;
}

// ---------------------------------------------------------------------------
// Features

// Position increments expressed as velocity, one per consecutive record
// pair; the heading channel takes the endpoint record's normalized heading.
inline std::vector<FeatureVec> compute_features(const Track& t) {
    if (t.records.size() < 2) throw DataError("compute_features: track too short");
    const double dt = 1.0 / t.sample_hz;
    std::vector<FeatureVec> out(t.records.size() - 1);
    for (std::size_t i = 0; i + 1 < t.records.size(); ++i) {
        const TrackRecord& a = t.records[i];
        const TrackRecord& b = t.records[i + 1];
        out[i].dvx = (b.x - a.x) / dt;
        out[i].dvy = (b.y - a.y) / dt;
        out[i].h = b.heading_deg / 360.0;
    }
    return out;
}

// Number of stride-1 windows over a feature sequence of length L.
inline std::size_t window_count(std::size_t feature_len, const WindowingConfig& cfg) {
    const std::size_t need = static_cast<std::size_t>(cfg.obs_len + cfg.pred_len);
    return feature_len >= need ? feature_len - need + 1 : 0;
}

// Slides over a resampled, gap-free track. Feature i spans records i..i+1,
// so the final observed step of window w lands on record w + obs_len.
inline std::vector<WindowSample> extract_windows(const Track& resampled,
                                                 const std::vector<FeatureVec>& feats,
                                                 const WindowingConfig& cfg) {
    check_windowing(cfg);
    std::vector<WindowSample> out;
    const std::size_t n = window_count(feats.size(), cfg);
    out.reserve(n);
    for (std::size_t w = 0; w < n; ++w) {
        WindowSample s;
        s.obs.assign(feats.begin() + static_cast<std::ptrdiff_t>(w),
                     feats.begin() + static_cast<std::ptrdiff_t>(w) + cfg.obs_len);
        s.target.assign(feats.begin() + static_cast<std::ptrdiff_t>(w) + cfg.obs_len,
                        feats.begin() + static_cast<std::ptrdiff_t>(w) + cfg.obs_len + cfg.pred_len);
        const TrackRecord& last_obs = resampled.records[w + static_cast<std::size_t>(cfg.obs_len)];
        s.last_obs_x = last_obs.x;
        s.last_obs_y = last_obs.y;
        s.dt = 1.0 / resampled.sample_hz;
        s.prov = {resampled.recording_id, resampled.track_id, resampled.records[w].frame};
        out.push_back(std::move(s));
    }
    return out;
}

// Full per-track pipeline: gap split, decimation, features, windows.
inline std::vector<WindowSample> windows_for_track(const Track& t, const WindowingConfig& cfg) {
    std::vector<WindowSample> out;
    for (const Track& seg : split_contiguous(t)) {
        const Track res = resample(seg, cfg.target_hz);
        if (res.records.size() < 2) continue;
        const std::vector<FeatureVec> feats = compute_features(res);
        std::vector<WindowSample> w = extract_windows(res, feats, cfg);
        out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalization

// Mean and population SD per feature component, pooled over every step of
// every observed and target sequence in the training split.
inline NormStats fit_norm(const std::vector<WindowSample>& train, int feature_dim) {
    if (train.size() < 2) throw DataError("fit_norm: need at least 2 training samples");
    NormStats stats;
    stats.mean.assign(static_cast<std::size_t>(feature_dim), 0.0);
    stats.sd.assign(static_cast<std::size_t>(feature_dim), 0.0);
    std::size_t n = 0;
    for (const WindowSample& w : train) {
        for (const auto* seq : {&w.obs, &w.target}) {
            for (const FeatureVec& f : *seq) {
                for (int d = 0; d < feature_dim; ++d) stats.mean[static_cast<std::size_t>(d)] += f.component(d);
                ++n;
            }
        }
    }
    for (double& m : stats.mean) m /= static_cast<double>(n);
    for (const WindowSample& w : train) {
        for (const auto* seq : {&w.obs, &w.target}) {
            for (const FeatureVec& f : *seq) {
                for (int d = 0; d < feature_dim; ++d) {
                    const double r = f.component(d) - stats.mean[static_cast<std::size_t>(d)];
                    stats.sd[static_cast<std::size_t>(d)] += r * r;
                }
            }
        }
    }
    for (std::size_t d = 0; d < stats.sd.size(); ++d) {
        stats.sd[d] = std::sqrt(stats.sd[d] / static_cast<double>(n));
        const double floor = 1e-12 * std::max(1.0, std::abs(stats.mean[d]));
        if (stats.sd[d] < floor) {
            throw DataError("degenerate feature: component " + std::to_string(d) + " has zero variance");
        }
    }
    return stats;
}

inline FeatureVec normalize_vec(const FeatureVec& f, const NormStats& s) {
    FeatureVec out = f;
    for (int d = 0; d < s.dim(); ++d) {
        out.set_component(d, (f.component(d) - s.mean[static_cast<std::size_t>(d)]) / s.sd[static_cast<std::size_t>(d)]);
    }
    return out;
}

inline FeatureVec denormalize_vec(const FeatureVec& f, const NormStats& s) {
    FeatureVec out = f;
    for (int d = 0; d < s.dim(); ++d) {
        out.set_component(d, f.component(d) * s.sd[static_cast<std::size_t>(d)] + s.mean[static_cast<std::size_t>(d)]);
    }
    return out;
}

inline WindowSample normalize(const WindowSample& w, const NormStats& s) {
    if (s.dim() < 2 || s.dim() > 3) throw ShapeError("normalize: stats dimension must be 2 or 3");
    WindowSample out = w;
    for (FeatureVec& f : out.obs) f = normalize_vec(f, s);
    for (FeatureVec& f : out.target) f = normalize_vec(f, s);
    return out;
}

inline WindowSample denormalize(const WindowSample& w, const NormStats& s) {
    if (s.dim() < 2 || s.dim() > 3) throw ShapeError("denormalize: stats dimension must be 2 or 3");
    WindowSample out = w;
    for (FeatureVec& f : out.obs) f = denormalize_vec(f, s);
    for (FeatureVec& f : out.target) f = denormalize_vec(f, s);
    return out;
}

// ---------------------------------------------------------------------------
// Windows file (.winz)
//
// Versioned little-endian binary holding the windowing config, the fitted
// normalization stats and the raw train/test samples.

struct WindowSet {
    WindowingConfig cfg;
    NormStats stats;
    std::vector<WindowSample> train;
    std::vector<WindowSample> test;

    friend bool operator==(const WindowSet&, const WindowSet&) = default;
};

namespace detail {

constexpr std::uint32_t winz_version = 1;

inline void write_sample(binio::Writer& w, const WindowSample& s) {
    auto write_seq = [&](const std::vector<FeatureVec>& seq) {
        w.u64(seq.size());
        for (const FeatureVec& f : seq) {
            w.f64(f.dvx);
            w.f64(f.dvy);
            w.f64(f.h);
        }
    };
    write_seq(s.obs);
    write_seq(s.target);
    w.f64(s.last_obs_x);
    w.f64(s.last_obs_y);
    w.f64(s.dt);
    w.str(s.prov.recording_id);
    w.i64(s.prov.track_id);
    w.i64(s.prov.start_frame);
}

inline WindowSample read_sample(binio::Reader& r) {
    WindowSample s;
    auto read_seq = [&](std::vector<FeatureVec>& seq) {
        const std::uint64_t n = r.u64();
        if (n > (1ull << 24)) throw CorruptFile("window sequence length out of range");
        seq.resize(static_cast<std::size_t>(n));
        for (FeatureVec& f : seq) {
            f.dvx = r.f64();
            f.dvy = r.f64();
            f.h = r.f64();
        }
    };
    read_seq(s.obs);
    read_seq(s.target);
    s.last_obs_x = r.f64();
    s.last_obs_y = r.f64();
    s.dt = r.f64();
    s.prov.recording_id = r.str();
    s.prov.track_id = r.i64();
    s.prov.start_frame = r.i64();
    return s;
}

} // namespace detail

inline void write_windows(const WindowSet& ws, std::ostream& out) {
    binio::Writer w(out);
    w.magic("WINZ");
    w.u32(detail::winz_version);
    w.u32(static_cast<std::uint32_t>(ws.cfg.obs_len));
    w.u32(static_cast<std::uint32_t>(ws.cfg.pred_len));
    w.u32(static_cast<std::uint32_t>(ws.cfg.stride));
    w.f64(ws.cfg.target_hz);
    w.u8(ws.cfg.oriented ? 1 : 0);
    w.f64_vec(ws.stats.mean);
    w.f64_vec(ws.stats.sd);
    for (const auto* split : {&ws.train, &ws.test}) {
        w.u64(split->size());
        for (const WindowSample& s : *split) detail::write_sample(w, s);
    }
    if (!w.ok()) throw DataError("windows write failed");
}

inline WindowSet read_windows(std::istream& in) {
    binio::Reader r(in);
    r.expect_magic("WINZ");
    const std::uint32_t version = r.u32();
    if (version != detail::winz_version) {
        throw VersionMismatch("windows file version " + std::to_string(version) +
                              " (this build reads version " + std::to_string(detail::winz_version) + ")");
    }
    WindowSet ws;
    ws.cfg.obs_len = static_cast<int>(r.u32());
    ws.cfg.pred_len = static_cast<int>(r.u32());
    ws.cfg.stride = static_cast<int>(r.u32());
    ws.cfg.target_hz = r.f64();
    ws.cfg.oriented = r.u8() != 0;
    ws.stats.mean = r.f64_vec(1u << 8);
    ws.stats.sd = r.f64_vec(1u << 8);
    for (auto* split : {&ws.train, &ws.test}) {
        const std::uint64_t n = r.u64();
        if (n > (1ull << 32)) throw CorruptFile("window count out of range");
        split->reserve(static_cast<std::size_t>(n));
        for (std::uint64_t i = 0; i < n; ++i) split->push_back(detail::read_sample(r));
    }
    return ws;
}

inline void write_windows_file(const WindowSet& ws, const std::string& path) {
    auto out = binio::open_output(path);
    write_windows(ws, out);
}

inline WindowSet read_windows_file(const std::string& path) {
    auto in = binio::open_input(path);
    return read_windows(in);
}

} // namespace trajkit
