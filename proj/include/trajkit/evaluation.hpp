#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "trajkit/errors.hpp"
#include "trajkit/features.hpp"
#include "trajkit/model.hpp"
#include "trajkit/types.hpp"

// Displacement metrics over absolute world positions, a constant-velocity
// sanity baseline, per-horizon error histograms and qualitative trajectory
// export (layered SVG plus a reparsable text table).

namespace trajkit {

// Mean over steps of the per-step Euclidean distance.
inline double ade(const std::vector<Point>& pred, const std::vector<Point>& gt) {
    if (pred.size() != gt.size() || pred.empty()) throw ShapeError("ade: length mismatch or empty");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        sum += std::hypot(pred[i].x - gt[i].x, pred[i].y - gt[i].y);
    }
    return sum / static_cast<double>(pred.size());
}

// Euclidean distance at the final step only.
inline double fde(const std::vector<Point>& pred, const std::vector<Point>& gt) {
    if (pred.size() != gt.size() || pred.empty()) throw ShapeError("fde: length mismatch or empty");
    return std::hypot(pred.back().x - gt.back().x, pred.back().y - gt.back().y);
}

// ---------------------------------------------------------------------------
// Window geometry helpers

// Future ground-truth positions: the target increments integrated from the
// last observed position.
inline std::vector<Point> ground_truth_positions(const WindowSample& w) {
    return velocities_to_positions(w.target, w.dt, w.last_obs_x, w.last_obs_y);
}

// The obs_len + 1 absolute positions covered by the observation, ending at
// last_obs_position (walked backwards through the observed increments).
inline std::vector<Point> observed_positions(const WindowSample& w) {
    std::vector<Point> out(w.obs.size() + 1);
    out.back() = {w.last_obs_x, w.last_obs_y};
    for (std::size_t i = w.obs.size(); i-- > 0;) {
        out[i] = {out[i + 1].x - w.obs[i].dvx * w.dt, out[i + 1].y - w.obs[i].dvy * w.dt};
    }
    return out;
}

// Extrapolates the last observed velocity for pred_len steps.
inline std::vector<Point> cv_baseline(const WindowSample& w, int pred_len) {
    if (w.obs.size() < 2) throw ShapeError("cv_baseline: need at least 2 observed steps");
    std::vector<FeatureVec> constant(static_cast<std::size_t>(pred_len), w.obs.back());
    return velocities_to_positions(constant, w.dt, w.last_obs_x, w.last_obs_y);
}

// ---------------------------------------------------------------------------
// Aggregate evaluation

struct MetricsReport {
    double ade = 0.0;
    double fde = 0.0;
    std::size_t n_samples = 0;
    std::vector<std::pair<double, double>> per_sample; // (ade, fde) per window

    // the conventional "ADE / FDE" display with two decimals, in meters
    std::string display() const {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f / %.2f", ade, fde);
        return buf;
    }
};

// Means of per-window ADE and FDE under an arbitrary predictor
// (window -> positions). The model path, the baseline and test oracles all
// go through here.
template <typename PredictorFn>
MetricsReport evaluate_predictions(const std::vector<WindowSample>& windows, PredictorFn&& predictor) {
    if (windows.empty()) throw DataError("evaluate: no windows");
    MetricsReport report;
    report.per_sample.reserve(windows.size());
    double ade_sum = 0.0;
    double fde_sum = 0.0;
    for (const WindowSample& w : windows) {
        const std::vector<Point> pred = predictor(w);
        const std::vector<Point> gt = ground_truth_positions(w);
        const double a = ade(pred, gt);
        const double f = fde(pred, gt);
        ade_sum += a;
        fde_sum += f;
        report.per_sample.emplace_back(a, f);
    }
    report.n_samples = windows.size();
    report.ade = ade_sum / static_cast<double>(windows.size());
    report.fde = fde_sum / static_cast<double>(windows.size());
    return report;
}

// Test-split evaluation of a trained checkpoint. The checkpoint must carry
// the exact normalization stats the windows were prepared with.
inline MetricsReport evaluate(const Checkpoint& ck, const WindowSet& ws) {
    if (!(ck.stats == ws.stats)) {
        throw DataError("normalization stats mismatch between checkpoint and windows file");
    }
    return evaluate_predictions(ws.test, [&](const WindowSample& w) {
        return predict(ck.cfg, ck.params, w, ck.stats, ws.cfg.pred_len);
    });
}

// ---------------------------------------------------------------------------
// FDE histograms per forecast horizon

struct Histogram {
    int horizon = 0;     // steps ahead the FDE was measured at
    double lo = 0.0;
    double hi = 0.0;
    double bin_width = 0.0;
    std::vector<std::size_t> counts;

    std::size_t total() const {
        std::size_t n = 0;
        for (std::size_t c : counts) n += c;
        return n;
    }
};

// One uniform [0, max] histogram per horizon; bin counts sum to the sample
// count of that horizon's list.
inline std::vector<Histogram> fde_histogram(const std::vector<std::vector<double>>& fde_lists,
                                            const std::vector<int>& horizons, int bins) {
    if (horizons.empty()) throw ConfigError("fde_histogram: horizons must not be empty");
    if (bins < 1) throw ConfigError("fde_histogram: bins must be >= 1");
    if (fde_lists.size() != horizons.size()) throw ShapeError("fde_histogram: one list per horizon");

    std::vector<Histogram> out;
    out.reserve(horizons.size());
    for (std::size_t k = 0; k < horizons.size(); ++k) {
        Histogram h;
        h.horizon = horizons[k];
        h.counts.assign(static_cast<std::size_t>(bins), 0);
        double hi = 0.0;
        for (double v : fde_lists[k]) hi = std::max(hi, v);
        h.lo = 0.0;
        h.hi = hi;
        h.bin_width = hi > 0.0 ? hi / bins : 0.0;
        for (double v : fde_lists[k]) {
            std::size_t bin = h.bin_width > 0.0 ? static_cast<std::size_t>(v / h.bin_width)
                                                : 0;
            bin = std::min(bin, static_cast<std::size_t>(bins - 1));
            ++h.counts[bin];
        }
        out.push_back(std::move(h));
    }
    return out;
}

// Per-window FDE truncated to each horizon (prediction and ground truth cut
// to the first `horizon` steps).
template <typename PredictorFn>
std::vector<std::vector<double>> fde_at_horizons(const std::vector<WindowSample>& windows,
                                                 PredictorFn&& predictor,
                                                 const std::vector<int>& horizons) {
    std::vector<std::vector<double>> out(horizons.size());
    for (const WindowSample& w : windows) {
        const std::vector<Point> pred = predictor(w);
        const std::vector<Point> gt = ground_truth_positions(w);
        for (std::size_t k = 0; k < horizons.size(); ++k) {
            const std::size_t h = static_cast<std::size_t>(horizons[k]);
            if (h == 0 || h > pred.size() || h > gt.size()) {
                throw ConfigError("fde_at_horizons: horizon exceeds prediction length");
            }
            out[k].push_back(std::hypot(pred[h - 1].x - gt[h - 1].x, pred[h - 1].y - gt[h - 1].y));
        }
    }
    return out;
}

inline void write_histogram_table(const std::vector<Histogram>& hists, std::ostream& out) {
    out << "horizon\tbin_lo\tbin_hi\tcount\n";
    for (const Histogram& h : hists) {
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            out << h.horizon << '\t' << h.lo + h.bin_width * static_cast<double>(b) << '\t'
                << h.lo + h.bin_width * static_cast<double>(b + 1) << '\t' << h.counts[b] << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Qualitative export
//
// Three role-tagged polylines — observed (blue), ground truth (red),
// prediction (yellow) — written as a layered SVG plus a plain-text table
// that reparses to the exact input points.

struct QualitativeData {
    std::vector<Point> observed;
    std::vector<Point> gt;
    std::vector<Point> pred;

    friend bool operator==(const QualitativeData&, const QualitativeData&) = default;
};

inline QualitativeData make_qualitative(const WindowSample& w, const std::vector<Point>& prediction) {
    return {observed_positions(w), ground_truth_positions(w), prediction};
}

inline void write_qualitative_table(const QualitativeData& q, std::ostream& out) {
    char buf[128];
    auto emit = [&](const char* role, const std::vector<Point>& pts) {
        for (const Point& p : pts) {
            std::snprintf(buf, sizeof(buf), "%s\t%.17g\t%.17g\n", role, p.x, p.y);
            out << buf;
        }
    };
    out << "role\tx\ty\n";
    emit("observed", q.observed);
    emit("gt", q.gt);
    emit("pred", q.pred);
}

inline QualitativeData parse_qualitative_table(std::istream& in) {
    QualitativeData q;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            continue; // header
        }
        const std::size_t t1 = line.find('\t');
        const std::size_t t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw CorruptFile("qualitative table: bad row '" + line + "'");
        }
        const std::string role = line.substr(0, t1);
        const Point p{std::stod(line.substr(t1 + 1, t2 - t1 - 1)), std::stod(line.substr(t2 + 1))};
        if (role == "observed") {
            q.observed.push_back(p);
        } else if (role == "gt") {
            q.gt.push_back(p);
        } else if (role == "pred") {
            q.pred.push_back(p);
        } else {
            throw CorruptFile("qualitative table: unknown role '" + role + "'");
        }
    }
    return q;
}

namespace detail {

inline void svg_polyline(std::ostream& out, const std::vector<Point>& pts, const char* id,
                         const char* color, double min_x, double max_y, double scale) {
    out << "    <polyline id=\"" << id << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) out << ' ';
        out << (pts[i].x - min_x) * scale << ',' << (max_y - pts[i].y) * scale;
    }
    out << "\"/>\n";
}

} // namespace detail

inline void write_qualitative_svg(const QualitativeData& q, std::ostream& out) {
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (const auto* pts : {&q.observed, &q.gt, &q.pred}) {
        for (const Point& p : *pts) {
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
    }
    const double pad = std::max(1.0, 0.05 * std::max(max_x - min_x, max_y - min_y));
    min_x -= pad;
    max_x += pad;
    min_y -= pad;
    max_y += pad;
    const double scale = 800.0 / std::max(max_x - min_x, 1e-9);
    const double height = (max_y - min_y) * scale;

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"" << height
        << "\" viewBox=\"0 0 800 " << height << "\">\n";
    out << "  <g id=\"trajectories\">\n";
    detail::svg_polyline(out, q.observed, "observed", "blue", min_x, max_y, scale);
    detail::svg_polyline(out, q.gt, "gt", "red", min_x, max_y, scale);
    detail::svg_polyline(out, q.pred, "pred", "yellow", min_x, max_y, scale);
    out << "  </g>\n";
    out << "</svg>\n";
}

// Writes <base>.svg and <base>.txt.
inline void export_qualitative(const WindowSample& w, const std::vector<Point>& prediction,
                               const std::string& base_path) {
    const QualitativeData q = make_qualitative(w, prediction);
    {
        auto out = binio::open_output(base_path + ".svg");
        write_qualitative_svg(q, out);
        if (!out) throw DataError("failed writing " + base_path + ".svg");
    }
    {
        auto out = binio::open_output(base_path + ".txt");
        write_qualitative_table(q, out);
        if (!out) throw DataError("failed writing " + base_path + ".txt");
    }
}

} // namespace trajkit
