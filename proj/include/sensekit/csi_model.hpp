#pragma once

// Domain types shared by every stage: CSI streams, annotations, frames and
// the dataset manifest, plus their on-disk formats.

#include <sensekit/detail/binary_io.hpp>
#include <sensekit/error.hpp>

#include <json.hpp>

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sensekit::csi {

inline constexpr double speed_of_light = 299792458.0;

/// Activity classes in label order.
enum class Activity : int { sit = 0, jump, fall, run, noac, walk1, walk2, walk3, walk4 };

inline constexpr int num_activities = 9;

inline constexpr std::array<std::string_view, num_activities> activity_names = {
    "sit", "jump", "fall", "run", "NoAc", "walk1", "walk2", "walk3", "walk4"};

inline std::string_view activity_name(int id) {
    if (id < 0 || id >= num_activities) throw RangeError("activity id out of range: " + std::to_string(id));
    return activity_names[static_cast<std::size_t>(id)];
}

inline int activity_from_name(std::string_view name) {
    for (int k = 0; k < num_activities; ++k) {
        if (activity_names[static_cast<std::size_t>(k)] == name) return k;
    }
    throw ConfigError("unknown activity \"" + std::string(name) + "\"");
}

inline constexpr int noac_id = static_cast<int>(Activity::noac);

inline bool is_walk(int activity) {
    return activity >= static_cast<int>(Activity::walk1) && activity <= static_cast<int>(Activity::walk4);
}

/// Sensing area, in cm.
inline constexpr double area_width = 340.0;
inline constexpr double area_height = 250.0;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

inline double area_diagonal() { return std::hypot(area_width, area_height); }
inline Point2 area_center() { return {area_width / 2.0, area_height / 2.0}; }
inline bool inside_area(Point2 p) {
    return p.x >= 0.0 && p.x <= area_width && p.y >= 0.0 && p.y <= area_height;
}

struct SimoConfig {
    int num_subcarriers = 64;
    double sampling_rate = 100.0;  // Hz, per antenna
    double carrier_freq = 2.45e9;  // Hz
    int num_receivers = 2;
    int antennas_per_receiver = 1;

    double wavelength() const { return speed_of_light / carrier_freq; }
    int num_antennas() const { return num_receivers * antennas_per_receiver; }
    std::size_t entries_per_sample() const {
        return static_cast<std::size_t>(num_antennas()) * static_cast<std::size_t>(num_subcarriers);
    }

    void validate() const {
        if (num_subcarriers < 1) throw ConfigError("simo.num_subcarriers must be >= 1");
        if (!(sampling_rate >= 1.0) || !std::isfinite(sampling_rate)) throw ConfigError("simo.sampling_rate must be >= 1 Hz");
        if (!(carrier_freq > 0.0) || !std::isfinite(carrier_freq)) throw ConfigError("simo.carrier_freq must be positive");
        if (num_receivers < 1) throw ConfigError("simo.num_receivers must be >= 1");
        if (antennas_per_receiver < 1) throw ConfigError("simo.antennas_per_receiver must be >= 1");
    }

    friend bool operator==(const SimoConfig&, const SimoConfig&) = default;
};

struct Annotation {
    double start = 0.0;
    double end = 0.0;
    int activity = noac_id;
    std::optional<int> user;
    std::vector<Point2> position_track;  // sampled at fs, may be empty

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Complex per-subcarrier channel estimates, sample-major in (t, m, n, s) order.
struct CsiStream {
    SimoConfig config;
    double duration = 0.0;
    std::vector<std::complex<float>> samples;
    std::vector<Annotation> annotations;
    int stream_id = 0;

    std::size_t num_samples() const {
        const auto per = config.entries_per_sample();
        return per == 0 ? 0 : samples.size() / per;
    }

    std::size_t index(std::size_t t, int m, int n, int s) const {
        return ((t * static_cast<std::size_t>(config.num_receivers) + static_cast<std::size_t>(m)) *
                    static_cast<std::size_t>(config.antennas_per_receiver) +
                static_cast<std::size_t>(n)) *
                   static_cast<std::size_t>(config.num_subcarriers) +
               static_cast<std::size_t>(s);
    }

    std::complex<float> at(std::size_t t, int m, int n, int s) const { return samples[index(t, m, n, s)]; }

    /// One time step, all antennas and subcarriers.
    std::span<const std::complex<float>> sample(std::size_t t) const {
        const auto per = config.entries_per_sample();
        return std::span<const std::complex<float>>(samples).subspan(t * per, per);
    }

    friend bool operator==(const CsiStream&, const CsiStream&) = default;
};

inline std::size_t expected_sample_count(double duration, double fs) {
    return static_cast<std::size_t>(std::llround(duration * fs));
}

struct Violation {
    std::string invariant;
    std::size_t index = 0;
    std::string message;
};

/// Checks every CsiStream invariant. Empty result means the stream is valid.
inline std::vector<Violation> validate_stream(const CsiStream& stream) {
    std::vector<Violation> out;
    const auto& cfg = stream.config;
    if (cfg.num_subcarriers < 1 || cfg.sampling_rate < 1.0 || cfg.num_receivers < 1 || cfg.antennas_per_receiver < 1) {
        out.push_back({"config", 0, "SIMO dimensions and sampling rate must be >= 1"});
        return out;
    }
    const auto per = cfg.entries_per_sample();
    if (stream.samples.size() % per != 0) {
        out.push_back({"sample-shape", stream.samples.size() / per,
                       "sample buffer is not a whole number of " + std::to_string(per) + "-entry samples"});
    }
    const auto expected = expected_sample_count(stream.duration, cfg.sampling_rate);
    if (stream.num_samples() != expected) {
        out.push_back({"sample-count", std::min(stream.num_samples(), expected),
                       "expected " + std::to_string(expected) + " samples, found " + std::to_string(stream.num_samples())});
    }
    for (std::size_t i = 0; i < stream.samples.size(); ++i) {
        const auto v = stream.samples[i];
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            out.push_back({"finite", i / per, "non-finite channel estimate"});
            break;
        }
    }

    const auto& ann = stream.annotations;
    if (ann.empty()) {
        out.push_back({"coverage", 0, "no annotations"});
        return out;
    }
    for (std::size_t i = 0; i < ann.size(); ++i) {
        const auto& a = ann[i];
        if (!(a.end > a.start)) out.push_back({"interval", i, "annotation end must exceed start"});
        if (a.activity < 0 || a.activity >= num_activities) out.push_back({"activity-range", i, "activity id outside [0, 9)"});
        if (!a.position_track.empty()) {
            const auto n = expected_sample_count(a.end - a.start, cfg.sampling_rate);
            if (a.position_track.size() != n) {
                out.push_back({"position-track-length", i,
                               "expected " + std::to_string(n) + " positions, found " + std::to_string(a.position_track.size())});
            }
            for (const auto& p : a.position_track) {
                if (!inside_area(p)) {
                    out.push_back({"position-track-area", i, "position outside the sensing area"});
                    break;
                }
            }
        }
        if (i > 0) {
            const auto& prev = ann[i - 1];
            if (a.start < prev.start) {
                out.push_back({"sorted", i, "annotations are not time-sorted"});
            } else if (a.start < prev.end) {
                out.push_back({"overlap", i, "annotation overlaps its predecessor"});
            } else if (a.start > prev.end) {
                out.push_back({"coverage", i, "gap before annotation"});
            }
        }
    }
    if (ann.front().start != 0.0) out.push_back({"coverage", 0, "annotations do not start at 0"});
    if (ann.back().end != stream.duration) out.push_back({"coverage", ann.size() - 1, "annotations do not end at duration"});
    return out;
}

/// Annotation covering time t. Intervals are [start, end) except the last, which is closed.
inline const Annotation& annotation_at(const CsiStream& stream, double t) {
    if (!(t >= 0.0 && t <= stream.duration)) {
        throw RangeError("time " + std::to_string(t) + " outside [0, " + std::to_string(stream.duration) + "]");
    }
    const auto& ann = stream.annotations;
    for (std::size_t i = 0; i < ann.size(); ++i) {
        const bool last = i + 1 == ann.size();
        if (t >= ann[i].start && (t < ann[i].end || (last && t <= ann[i].end))) return ann[i];
    }
    throw RangeError("no annotation covers time " + std::to_string(t));
}

// ---------------------------------------------------------------------------
// JSON conversions

inline void to_json(nlohmann::json& j, const SimoConfig& c) {
    j = {{"num_subcarriers", c.num_subcarriers},
         {"sampling_rate", c.sampling_rate},
         {"carrier_freq", c.carrier_freq},
         {"num_receivers", c.num_receivers},
         {"antennas_per_receiver", c.antennas_per_receiver}};
}

inline void from_json(const nlohmann::json& j, SimoConfig& c) {
    c.num_subcarriers = j.value("num_subcarriers", c.num_subcarriers);
    c.sampling_rate = j.value("sampling_rate", c.sampling_rate);
    c.carrier_freq = j.value("carrier_freq", c.carrier_freq);
    c.num_receivers = j.value("num_receivers", c.num_receivers);
    c.antennas_per_receiver = j.value("antennas_per_receiver", c.antennas_per_receiver);
}

inline void to_json(nlohmann::json& j, const Annotation& a) {
    j = {{"start", a.start}, {"end", a.end}, {"activity", a.activity}};
    j["user"] = a.user ? nlohmann::json(*a.user) : nlohmann::json(nullptr);
    auto track = nlohmann::json::array();
    for (const auto& p : a.position_track) track.push_back({p.x, p.y});
    j["position_track"] = std::move(track);
}

inline void from_json(const nlohmann::json& j, Annotation& a) {
    a.start = j.at("start").get<double>();
    a.end = j.at("end").get<double>();
    a.activity = j.at("activity").get<int>();
    if (j.contains("user") && !j["user"].is_null()) a.user = j["user"].get<int>();
    else a.user.reset();
    a.position_track.clear();
    if (j.contains("position_track")) {
        for (const auto& p : j["position_track"]) a.position_track.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
}

// ---------------------------------------------------------------------------
// CSI stream file
//
//   "CSI1" | u32 S | f64 fs | u32 M | u32 N | f64 carrier | f64 duration |
//   u64 sample_count | u64 trailer_offset | complex64 samples (t,m,n,s) |
//   JSON trailer {stream_id, annotations}

inline void write_stream(std::ostream& os, const CsiStream& stream) {
    using detail::write_le;
    const auto& c = stream.config;
    const std::uint64_t count = stream.num_samples();
    constexpr std::uint64_t header_bytes = 4 + 4 + 8 + 4 + 4 + 8 + 8 + 8 + 8;
    const std::uint64_t trailer_offset = header_bytes + stream.samples.size() * 8;

    detail::write_magic(os, "CSI1");
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.num_subcarriers));
    write_le<double>(os, c.sampling_rate);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.num_receivers));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.antennas_per_receiver));
    write_le<double>(os, c.carrier_freq);
    write_le<double>(os, stream.duration);
    write_le<std::uint64_t>(os, count);
    write_le<std::uint64_t>(os, trailer_offset);
    for (const auto& v : stream.samples) {
        write_le<float>(os, v.real());
        write_le<float>(os, v.imag());
    }
    nlohmann::json trailer = {{"stream_id", stream.stream_id}, {"annotations", stream.annotations}};
    os << trailer.dump();
}

inline CsiStream read_stream(std::istream& is) {
    using detail::read_le;
    detail::expect_magic(is, "CSI1", "CSI stream");
    CsiStream s;
    s.config.num_subcarriers = static_cast<int>(read_le<std::uint32_t>(is));
    s.config.sampling_rate = read_le<double>(is);
    s.config.num_receivers = static_cast<int>(read_le<std::uint32_t>(is));
    s.config.antennas_per_receiver = static_cast<int>(read_le<std::uint32_t>(is));
    s.config.carrier_freq = read_le<double>(is);
    s.duration = read_le<double>(is);
    const auto count = read_le<std::uint64_t>(is);
    const auto trailer_offset = read_le<std::uint64_t>(is);
    s.config.validate();
    const auto total = count * s.config.entries_per_sample();
    s.samples.resize(total);
    for (auto& v : s.samples) {
        const float re = read_le<float>(is);
        const float im = read_le<float>(is);
        v = {re, im};
    }
    if (static_cast<std::uint64_t>(is.tellg()) != trailer_offset) {
        throw DataError("CSI stream: trailer offset does not match sample block");
    }
    std::stringstream rest;
    rest << is.rdbuf();
    try {
        const auto trailer = nlohmann::json::parse(rest.str());
        s.stream_id = trailer.value("stream_id", 0);
        s.annotations = trailer.at("annotations").get<std::vector<Annotation>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("CSI stream: bad annotation trailer: ") + e.what());
    }
    return s;
}

inline void save_stream(const std::filesystem::path& path, const CsiStream& stream) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_stream(os, stream);
}

inline CsiStream load_stream(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    return read_stream(is);
}

// ---------------------------------------------------------------------------
// Frames

/// A preprocessed window of amplitudes, row-major [steps x features].
struct Frame {
    int steps = 0;
    int features = 0;
    std::vector<float> data;
    int activity = noac_id;
    int user = -1;  // -1: nobody present
    Point2 coord;
    int stream_id = 0;
    int start_index = 0;

    float operator()(int t, int f) const {
        return data[static_cast<std::size_t>(t) * static_cast<std::size_t>(features) + static_cast<std::size_t>(f)];
    }

    friend bool operator==(const Frame&, const Frame&) = default;
};

// ---------------------------------------------------------------------------
// Dataset manifest

enum class Split { train, val, test, unseen };

inline std::string_view split_name(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unseen: return "unseen";
    }
    return "train";
}

inline Split split_from_name(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    if (name == "unseen" || name == "unseen-user") return Split::unseen;
    throw ConfigError("unknown split \"" + std::string(name) + "\"");
}

struct ManifestEntry {
    std::string file;
    int stream_id = 0;
    int user = -1;
    int activity = noac_id;
    int trial = 0;
    Split split = Split::train;
    std::uint64_t seed = 0;
};

struct Manifest {
    std::uint64_t seed = 0;
    SimoConfig simo;
    int num_users = 0;
    std::vector<int> unseen_users;
    std::vector<ManifestEntry> entries;
    nlohmann::json provenance = nlohmann::json::object();
};

inline nlohmann::json manifest_to_json(const Manifest& m) {
    nlohmann::json streams = nlohmann::json::array();
    for (const auto& e : m.entries) {
        streams.push_back({{"file", e.file},
                           {"stream_id", e.stream_id},
                           {"user", e.user},
                           {"activity", std::string(activity_name(e.activity))},
                           {"trial", e.trial},
                           {"split", std::string(split_name(e.split))},
                           {"seed", e.seed}});
    }
    return {{"format", "sensekit-manifest/1"},
            {"seed", m.seed},
            {"simo", m.simo},
            {"num_users", m.num_users},
            {"unseen_users", m.unseen_users},
            {"provenance", m.provenance},
            {"streams", std::move(streams)}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
    try {
        Manifest m;
        m.seed = j.at("seed").get<std::uint64_t>();
        m.simo = j.at("simo").get<SimoConfig>();
        m.num_users = j.at("num_users").get<int>();
        m.unseen_users = j.at("unseen_users").get<std::vector<int>>();
        m.provenance = j.value("provenance", nlohmann::json::object());
        for (const auto& s : j.at("streams")) {
            ManifestEntry e;
            e.file = s.at("file").get<std::string>();
            e.stream_id = s.at("stream_id").get<int>();
            e.user = s.at("user").get<int>();
            e.activity = activity_from_name(s.at("activity").get<std::string>());
            e.trial = s.at("trial").get<int>();
            e.split = split_from_name(s.at("split").get<std::string>());
            e.seed = s.at("seed").get<std::uint64_t>();
            m.entries.push_back(std::move(e));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << manifest_to_json(m).dump(2) << '\n';
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

} // namespace sensekit::csi
