#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "trajkit/binio.hpp"
#include "trajkit/csv.hpp"
#include "trajkit/errors.hpp"
#include "trajkit/types.hpp"

// Parses the on-disk layouts of the supported drone-recording datasets into
// canonical Tracks, applies static-vehicle and class filtering, and persists
// a versioned binary store (.trkz) so multi-GB CSVs are parsed once.

namespace trajkit {

// ind_family covers the inD and rounD releases, which share one file layout.
enum class DatasetKind : std::uint8_t { ind_family, highd, interaction };

inline std::string_view to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::ind_family: return "ind_family";
        case DatasetKind::highd: return "highd";
        case DatasetKind::interaction: return "interaction";
    }
    return "?";
}

inline DatasetKind dataset_kind_from_string(std::string_view s) {
    if (s == "ind_family" || s == "ind" || s == "round") return DatasetKind::ind_family;
    if (s == "highd") return DatasetKind::highd;
    if (s == "interaction") return DatasetKind::interaction;
    throw ConfigError("unknown dataset kind: " + std::string(s));
}

// A named byte stream; tests feed fixtures in-memory, the CLI loads files.
struct NamedSource {
    std::string name;
    std::string content;
};

struct MalformedRow {
    std::string file;
    std::size_t line = 0;
    std::string reason;
};

struct IngestOptions {
    bool strict = false;            // abort on the first malformed row
    double interaction_hz = 10.0;   // the published rate of the 10 Hz family
    std::string dataset_name;       // defaults to the kind string
};

struct RecordingInfo {
    std::string recording_id;
    std::string location_id;
    double sample_hz = 25.0;

    friend bool operator==(const RecordingInfo&, const RecordingInfo&) = default;
};

struct StoreHeader {
    DatasetKind kind = DatasetKind::ind_family;
    std::string dataset_name;
    bool heading_is_dhw = false;
    std::vector<RecordingInfo> recordings;

    friend bool operator==(const StoreHeader&, const StoreHeader&) = default;
};

struct CanonicalStore {
    StoreHeader header;
    std::vector<Track> tracks;

    friend bool operator==(const CanonicalStore&, const CanonicalStore&) = default;
};

struct IngestResult {
    CanonicalStore store;
    std::vector<MalformedRow> malformed;
    std::size_t rows_seen = 0; // data rows across all tracks files
};

// ---------------------------------------------------------------------------
// Parser internals

namespace detail {

inline void report_malformed(IngestResult& res, const IngestOptions& opt, std::string file,
                             std::size_t line, std::string reason) {
    if (opt.strict) {
        throw DataError(file + ":" + std::to_string(line) + ": " + reason);
    }
    res.malformed.push_back({std::move(file), line, std::move(reason)});
}

inline std::string base_name(std::string_view path) {
    const std::size_t slash = path.find_last_of("/\\");
    return std::string(slash == std::string_view::npos ? path : path.substr(slash + 1));
}

inline std::string parent_dir_name(std::string_view path) {
    const std::size_t slash = path.find_last_of("/\\");
    if (slash == std::string_view::npos) return {};
    const std::string_view head = path.substr(0, slash);
    const std::size_t slash2 = head.find_last_of("/\\");
    return std::string(slash2 == std::string_view::npos ? head : head.substr(slash2 + 1));
}

inline std::string strip_suffix(std::string name, std::string_view suffix) {
    if (name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        name.resize(name.size() - suffix.size());
    }
    return name;
}

// Groups "<prefix>_tracks.csv" / "<prefix>_tracksMeta.csv" /
// "<prefix>_recordingMeta.csv" triples by prefix.
struct LeveledFiles {
    const NamedSource* tracks = nullptr;
    const NamedSource* tracks_meta = nullptr;
    const NamedSource* recording_meta = nullptr;
};

inline std::map<std::string, LeveledFiles> group_prefixed(const std::vector<NamedSource>& files) {
    std::map<std::string, LeveledFiles> groups;
    for (const NamedSource& f : files) {
        const std::string base = base_name(f.name);
        auto ends_with = [&](std::string_view suffix) {
            return base.size() >= suffix.size() &&
                   base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0;
        };
        if (ends_with("_tracksMeta.csv")) {
            groups[strip_suffix(base, "_tracksMeta.csv")].tracks_meta = &f;
        } else if (ends_with("_recordingMeta.csv")) {
            groups[strip_suffix(base, "_recordingMeta.csv")].recording_meta = &f;
        } else if (ends_with("_tracks.csv")) {
            groups[strip_suffix(base, "_tracks.csv")].tracks = &f;
        } else {
            throw DataError("unrecognized file in dataset: " + f.name);
        }
    }
    return groups;
}

inline void require_columns(const csv::Table& t, std::initializer_list<std::string_view> cols,
                            const std::string& file) {
    for (std::string_view c : cols) {
        if (!t.has_column(c)) {
            throw DataError(file + ": unknown column layout, missing '" + std::string(c) + "'");
        }
    }
}

struct TrackKey {
    std::string recording_id;
    std::int64_t track_id;
    bool operator<(const TrackKey& o) const {
        return recording_id != o.recording_id ? recording_id < o.recording_id : track_id < o.track_id;
    }
};

// inD/rounD layout: per-recording meta carries locationId and frameRate,
// tracksMeta carries the agent class, tracks carries the samples.
inline void parse_ind_family_recording(const LeveledFiles& g, const std::string& prefix,
                                       const IngestOptions& opt, IngestResult& res,
                                       std::map<TrackKey, Track>& tracks) {
    if (!g.tracks) throw DataError("recording " + prefix + ": tracks file missing");
    if (!g.tracks_meta || !g.recording_meta) {
        throw DataError("recording " + prefix + ": metadata file missing");
    }

    const csv::Table rec_meta = csv::parse(g.recording_meta->content);
    require_columns(rec_meta, {"recordingId", "locationId", "frameRate"}, g.recording_meta->name);
    if (rec_meta.rows.empty()) throw DataError(g.recording_meta->name + ": no recording row");
    const auto& rm = rec_meta.rows.front();
    const std::string recording_id = rm[rec_meta.column("recordingId")];
    const std::string location_id = rm[rec_meta.column("locationId")];
    const auto hz = csv::to_double(rm[rec_meta.column("frameRate")]);
    if (!hz || !(*hz > 0.0)) throw DataError(g.recording_meta->name + ": bad frameRate");

    const csv::Table tmeta = csv::parse(g.tracks_meta->content);
    require_columns(tmeta, {"trackId", "class"}, g.tracks_meta->name);
    std::map<std::int64_t, AgentClass> classes;
    for (const auto& row : tmeta.rows) {
        if (row.size() != tmeta.columns.size()) continue;
        const auto id = csv::to_int(row[tmeta.column("trackId")]);
        if (!id) continue;
        classes[*id] = agent_class_from_label(row[tmeta.column("class")]);
    }

    const csv::Table tab = csv::parse(g.tracks->content);
    require_columns(tab, {"trackId", "frame", "xCenter", "yCenter", "heading", "xVelocity", "yVelocity"},
                    g.tracks->name);
    const std::size_t c_track = tab.column("trackId");
    const std::size_t c_frame = tab.column("frame");
    const std::size_t c_x = tab.column("xCenter");
    const std::size_t c_y = tab.column("yCenter");
    const std::size_t c_heading = tab.column("heading");
    const std::size_t c_vx = tab.column("xVelocity");
    const std::size_t c_vy = tab.column("yVelocity");

    for (std::size_t i = 0; i < tab.rows.size(); ++i) {
        const auto& row = tab.rows[i];
        ++res.rows_seen;
        if (row.size() != tab.columns.size()) {
            report_malformed(res, opt, g.tracks->name, tab.line_no[i], "wrong field count");
            continue;
        }
        const auto track_id = csv::to_int(row[c_track]);
        const auto frame = csv::to_int(row[c_frame]);
        const auto x = csv::to_double(row[c_x]);
        const auto y = csv::to_double(row[c_y]);
        const auto heading = csv::to_double(row[c_heading]);
        const auto vx = csv::to_double(row[c_vx]);
        const auto vy = csv::to_double(row[c_vy]);
        if (!track_id || !frame || !x || !y || !heading || !vx || !vy) {
            report_malformed(res, opt, g.tracks->name, tab.line_no[i], "unparsable field");
            continue;
        }
        const auto cls = classes.find(*track_id);
        if (cls == classes.end()) {
            report_malformed(res, opt, g.tracks->name, tab.line_no[i],
                             "track " + std::to_string(*track_id) + " missing from tracksMeta");
            continue;
        }
        TrackRecord r;
        r.frame = *frame;
        r.track_id = *track_id;
        r.x = *x;
        r.y = *y;
        r.vx = *vx;
        r.vy = *vy;
        r.heading_deg = canonical_heading_deg(*heading);
        r.agent_class = cls->second;
        r.recording_id = recording_id;
        r.location_id = location_id;
        Track& t = tracks[{recording_id, *track_id}];
        if (t.records.empty()) {
            t.track_id = *track_id;
            t.recording_id = recording_id;
            t.location_id = location_id;
            t.agent_class = cls->second;
            t.sample_hz = *hz;
        }
        t.records.push_back(std::move(r));
    }

    res.store.header.recordings.push_back({recording_id, location_id, *hz});
}

// highD layout: no heading column; the per-frame distance headway (dhw)
// fills the heading slot verbatim and the store is flagged accordingly.
inline void parse_highd_recording(const LeveledFiles& g, const std::string& prefix,
                                  const IngestOptions& opt, IngestResult& res,
                                  std::map<TrackKey, Track>& tracks) {
    if (!g.tracks) throw DataError("recording " + prefix + ": tracks file missing");
    if (!g.tracks_meta || !g.recording_meta) {
        throw DataError("recording " + prefix + ": metadata file missing");
    }

    const csv::Table rec_meta = csv::parse(g.recording_meta->content);
    require_columns(rec_meta, {"id", "frameRate", "locationId"}, g.recording_meta->name);
    if (rec_meta.rows.empty()) throw DataError(g.recording_meta->name + ": no recording row");
    const auto& rm = rec_meta.rows.front();
    const std::string recording_id = rm[rec_meta.column("id")];
    const std::string location_id = rm[rec_meta.column("locationId")];
    const auto hz = csv::to_double(rm[rec_meta.column("frameRate")]);
    if (!hz || !(*hz > 0.0)) throw DataError(g.recording_meta->name + ": bad frameRate");

    const csv::Table tmeta = csv::parse(g.tracks_meta->content);
    require_columns(tmeta, {"id", "class"}, g.tracks_meta->name);
    std::map<std::int64_t, AgentClass> classes;
    for (const auto& row : tmeta.rows) {
        if (row.size() != tmeta.columns.size()) continue;
        const auto id = csv::to_int(row[tmeta.column("id")]);
        if (!id) continue;
        classes[*id] = agent_class_from_label(row[tmeta.column("class")]);
    }

    const csv::Table tab = csv::parse(g.tracks->content);
    require_columns(tab, {"frame", "id", "x", "y", "xVelocity", "yVelocity", "dhw"}, g.tracks->name);
    const std::size_t c_frame = tab.column("frame");
    const std::size_t c_id = tab.column("id");
    const std::size_t c_x = tab.column("x");
    const std::size_t c_y = tab.column("y");
    const std::size_t c_vx = tab.column("xVelocity");
    const std::size_t c_vy = tab.column("yVelocity");
    const std::size_t c_dhw = tab.column("dhw");

    for (std::size_t i = 0; i < tab.rows.size(); ++i) {
        const auto& row = tab.rows[i];
        ++res.rows_seen;
        if (row.size() != tab.columns.size()) {
            report_malformed(res, opt, g.tracks->name, tab.line_no[i], "wrong field count");
            continue;
        }
        const auto track_id = csv::to_int(row[c_id]);
        const auto frame = csv::to_int(row[c_frame]);
        const auto x = csv::to_double(row[c_x]);
        const auto y = csv::to_double(row[c_y]);
        const auto vx = csv::to_double(row[c_vx]);
        const auto vy = csv::to_double(row[c_vy]);
        const auto dhw = csv::to_double(row[c_dhw]);
        if (!track_id || !frame || !x || !y || !vx || !vy || !dhw) {
            report_malformed(res, opt, g.tracks->name, tab.line_no[i], "unparsable field");
            continue;
        }
        const auto cls = classes.find(*track_id);
        if (cls == classes.end()) {
            report_malformed(res, opt, g.tracks->name, tab.line_no[i],
                             "track " + std::to_string(*track_id) + " missing from tracksMeta");
            continue;
        }
        TrackRecord r;
        r.frame = *frame;
        r.track_id = *track_id;
        r.x = *x;
        r.y = *y;
        r.vx = *vx;
        r.vy = *vy;
        r.heading_deg = *dhw; // raw distance headway, deliberately unconverted
        r.agent_class = cls->second;
        r.recording_id = recording_id;
        r.location_id = location_id;
        Track& t = tracks[{recording_id, *track_id}];
        if (t.records.empty()) {
            t.track_id = *track_id;
            t.recording_id = recording_id;
            t.location_id = location_id;
            t.agent_class = cls->second;
            t.sample_hz = *hz;
            t.heading_is_dhw = true;
        }
        t.records.push_back(std::move(r));
    }

    res.store.header.recordings.push_back({recording_id, location_id, *hz});
}

// INTERACTION layout: one flat csv per recording, heading in radians,
// agent class per row, fixed 10 Hz.
inline void parse_interaction_file(const NamedSource& f, const IngestOptions& opt, IngestResult& res,
                                   std::map<TrackKey, Track>& tracks) {
    const std::string recording_id = strip_suffix(base_name(f.name), ".csv");
    std::string location_id = parent_dir_name(f.name);
    if (location_id.empty()) location_id = recording_id;

    const csv::Table tab = csv::parse(f.content);
    require_columns(tab, {"track_id", "frame_id", "agent_type", "x", "y", "vx", "vy", "psi_rad"}, f.name);
    const std::size_t c_track = tab.column("track_id");
    const std::size_t c_frame = tab.column("frame_id");
    const std::size_t c_type = tab.column("agent_type");
    const std::size_t c_x = tab.column("x");
    const std::size_t c_y = tab.column("y");
    const std::size_t c_vx = tab.column("vx");
    const std::size_t c_vy = tab.column("vy");
    const std::size_t c_psi = tab.column("psi_rad");

    for (std::size_t i = 0; i < tab.rows.size(); ++i) {
        const auto& row = tab.rows[i];
        ++res.rows_seen;
        if (row.size() != tab.columns.size()) {
            report_malformed(res, opt, f.name, tab.line_no[i], "wrong field count");
            continue;
        }
        const auto track_id = csv::to_int(row[c_track]);
        const auto frame = csv::to_int(row[c_frame]);
        const auto x = csv::to_double(row[c_x]);
        const auto y = csv::to_double(row[c_y]);
        const auto vx = csv::to_double(row[c_vx]);
        const auto vy = csv::to_double(row[c_vy]);
        const auto psi = csv::to_double(row[c_psi]);
        if (!track_id || !frame || !x || !y || !vx || !vy || !psi) {
            report_malformed(res, opt, f.name, tab.line_no[i], "unparsable field");
            continue;
        }
        TrackRecord r;
        r.frame = *frame;
        r.track_id = *track_id;
        r.x = *x;
        r.y = *y;
        r.vx = *vx;
        r.vy = *vy;
        r.heading_deg = radians_to_heading_deg(*psi);
        r.agent_class = agent_class_from_label(row[c_type]);
        r.recording_id = recording_id;
        r.location_id = location_id;
        Track& t = tracks[{recording_id, *track_id}];
        if (t.records.empty()) {
            t.track_id = *track_id;
            t.recording_id = recording_id;
            t.location_id = location_id;
            t.agent_class = r.agent_class;
            t.sample_hz = opt.interaction_hz;
        }
        t.records.push_back(std::move(r));
    }

    res.store.header.recordings.push_back({recording_id, location_id, opt.interaction_hz});
}

} // namespace detail

// ---------------------------------------------------------------------------
// parse_dataset

// One Track per (recording, track_id), records sorted by frame, tracks
// sorted by (recording, track) — so the result is independent of the order
// the files were handed in. Malformed rows are reported, never silently
// dropped: rows_seen == total records + malformed.size().
inline IngestResult parse_dataset(DatasetKind kind, const std::vector<NamedSource>& files,
                                  const IngestOptions& opt = {}) {
    IngestResult res;
    res.store.header.kind = kind;
    res.store.header.dataset_name = opt.dataset_name.empty() ? std::string(to_string(kind)) : opt.dataset_name;
    res.store.header.heading_is_dhw = (kind == DatasetKind::highd);

    std::map<detail::TrackKey, Track> tracks;
    if (kind == DatasetKind::interaction) {
        std::vector<const NamedSource*> sorted;
        for (const NamedSource& f : files) sorted.push_back(&f);
        std::sort(sorted.begin(), sorted.end(),
                  [](const NamedSource* a, const NamedSource* b) { return a->name < b->name; });
        for (const NamedSource* f : sorted) detail::parse_interaction_file(*f, opt, res, tracks);
    } else {
        const auto groups = detail::group_prefixed(files);
        for (const auto& [prefix, g] : groups) {
            if (kind == DatasetKind::ind_family) {
                detail::parse_ind_family_recording(g, prefix, opt, res, tracks);
            } else {
                detail::parse_highd_recording(g, prefix, opt, res, tracks);
            }
        }
    }

    res.store.tracks.reserve(tracks.size());
    for (auto& [key, t] : tracks) {
        std::sort(t.records.begin(), t.records.end(),
                  [](const TrackRecord& a, const TrackRecord& b) { return a.frame < b.frame; });
        res.store.tracks.push_back(std::move(t));
    }
    std::sort(res.store.header.recordings.begin(), res.store.header.recordings.end(),
              [](const RecordingInfo& a, const RecordingInfo& b) { return a.recording_id < b.recording_id; });
    return res;
}

// ---------------------------------------------------------------------------
// Filters

// Drops tracks that never move farther than min_displacement meters from
// their first record (parked vehicles). Order of survivors is preserved.
inline std::vector<Track> filter_static(std::vector<Track> tracks, double min_displacement) {
    if (min_displacement < 0.0) throw ConfigError("filter_static: threshold must be >= 0");
    std::vector<Track> out;
    out.reserve(tracks.size());
    for (Track& t : tracks) {
        if (t.records.empty()) continue;
        const double x0 = t.records.front().x;
        const double y0 = t.records.front().y;
        double max_disp = 0.0;
        for (const TrackRecord& r : t.records) {
            max_disp = std::max(max_disp, std::hypot(r.x - x0, r.y - y0));
        }
        if (max_disp >= min_displacement) out.push_back(std::move(t));
    }
    return out;
}

inline std::vector<Track> filter_class(std::vector<Track> tracks, const std::set<AgentClass>& allowed) {
    if (allowed.empty()) throw ConfigError("filter_class: allowed set must not be empty");
    std::vector<Track> out;
    out.reserve(tracks.size());
    for (Track& t : tracks) {
        if (allowed.count(t.agent_class)) out.push_back(std::move(t));
    }
    return out;
}

inline std::set<AgentClass> vehicle_classes() {
    return {AgentClass::car, AgentClass::truck, AgentClass::van,
            AgentClass::bus, AgentClass::trailer, AgentClass::motorcycle};
}

// ---------------------------------------------------------------------------
// Canonical store (.trkz): length-prefixed little-endian binary with a
// plain-text descriptive header. read(write(s)) reproduces s bit for bit.

namespace detail {

constexpr std::uint32_t trkz_version = 1;

} // namespace detail

inline void write_store(const CanonicalStore& s, std::ostream& out) {
    binio::Writer w(out);
    w.magic("TRKZ");
    w.u32(detail::trkz_version);

    std::string header;
    header += "kind=" + std::string(to_string(s.header.kind)) + "\n";
    header += "dataset_name=" + s.header.dataset_name + "\n";
    header += "heading_is_dhw=" + std::string(s.header.heading_is_dhw ? "1" : "0") + "\n";
    w.str(header);

    w.u64(s.header.recordings.size());
    for (const RecordingInfo& r : s.header.recordings) {
        w.str(r.recording_id);
        w.str(r.location_id);
        w.f64(r.sample_hz);
    }

    w.u64(s.tracks.size());
    for (const Track& t : s.tracks) {
        w.i64(t.track_id);
        w.str(t.recording_id);
        w.str(t.location_id);
        w.u8(static_cast<std::uint8_t>(t.agent_class));
        w.f64(t.sample_hz);
        w.u8(t.heading_is_dhw ? 1 : 0);
        w.u64(t.records.size());
        for (const TrackRecord& r : t.records) {
            w.i64(r.frame);
            w.f64(r.x);
            w.f64(r.y);
            w.f64(r.vx);
            w.f64(r.vy);
            w.f64(r.heading_deg);
        }
    }
    if (!w.ok()) throw DataError("store write failed");
}

inline CanonicalStore read_store(std::istream& in) {
    binio::Reader r(in);
    r.expect_magic("TRKZ");
    const std::uint32_t version = r.u32();
    if (version != detail::trkz_version) {
        throw VersionMismatch("store version " + std::to_string(version) + " (this build reads version " +
                              std::to_string(detail::trkz_version) + ")");
    }

    CanonicalStore s;
    const std::string header = r.str(1u << 20);
    std::size_t pos = 0;
    while (pos < header.size()) {
        std::size_t nl = header.find('\n', pos);
        if (nl == std::string::npos) nl = header.size();
        const std::string line = header.substr(pos, nl - pos);
        pos = nl + 1;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "kind") {
            s.header.kind = dataset_kind_from_string(val);
        } else if (key == "dataset_name") {
            s.header.dataset_name = val;
        } else if (key == "heading_is_dhw") {
            s.header.heading_is_dhw = (val == "1");
        }
    }

    const std::uint64_t n_recordings = r.u64();
    if (n_recordings > (1ull << 24)) throw CorruptFile("recording count out of range");
    for (std::uint64_t i = 0; i < n_recordings; ++i) {
        RecordingInfo info;
        info.recording_id = r.str();
        info.location_id = r.str();
        info.sample_hz = r.f64();
        s.header.recordings.push_back(std::move(info));
    }

    const std::uint64_t n_tracks = r.u64();
    if (n_tracks > (1ull << 32)) throw CorruptFile("track count out of range");
    s.tracks.reserve(static_cast<std::size_t>(n_tracks));
    for (std::uint64_t i = 0; i < n_tracks; ++i) {
        Track t;
        t.track_id = r.i64();
        t.recording_id = r.str();
        t.location_id = r.str();
        const std::uint8_t cls = r.u8();
        if (cls >= all_agent_classes.size()) throw CorruptFile("agent class out of range");
        t.agent_class = static_cast<AgentClass>(cls);
        t.sample_hz = r.f64();
        t.heading_is_dhw = r.u8() != 0;
        const std::uint64_t n_records = r.u64();
        if (n_records > (1ull << 32)) throw CorruptFile("record count out of range");
        t.records.reserve(static_cast<std::size_t>(n_records));
        for (std::uint64_t j = 0; j < n_records; ++j) {
            TrackRecord rec;
            rec.frame = r.i64();
            rec.x = r.f64();
            rec.y = r.f64();
            rec.vx = r.f64();
            rec.vy = r.f64();
            rec.heading_deg = r.f64();
            rec.track_id = t.track_id;
            rec.recording_id = t.recording_id;
            rec.location_id = t.location_id;
            rec.agent_class = t.agent_class;
            t.records.push_back(std::move(rec));
        }
        s.tracks.push_back(std::move(t));
    }
    return s;
}

inline void write_store_file(const CanonicalStore& s, const std::string& path) {
    auto out = binio::open_output(path);
    write_store(s, out);
}

inline CanonicalStore read_store_file(const std::string& path) {
    auto in = binio::open_input(path);
    return read_store(in);
}

} // namespace trajkit
