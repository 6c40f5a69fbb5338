#pragma once

// Deterministic synthetic SIMO OFDM channel simulator.
//
// Geometry is a direct path plus static point scatterers plus one moving
// point reflector per body. Every path contributes
//     g * exp(-j 2 pi f_s tau)
// on subcarrier frequency f_s = carrier + (s - S/2) * spacing, with gain
// 1/d for the direct path and reflectivity/(d1 d2) for reflections
// (distances in meters). Positions are in cm.

#include <sensekit/csi_model.hpp>
#include <sensekit/detail/parallel.hpp>
#include <sensekit/rng.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sensekit::sim {

using csi::Point2;

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double distance(const Vec3& a, const Vec3& b) {
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

/// Largest Doppler shift (Hz) a reflector moving at `speed` m/s induces on a
/// wave of length `wavelength` m: v / (lambda / 2).
inline double max_doppler_hz(double speed, double wavelength) { return speed / (wavelength / 2.0); }

/// Fastest speed a script may move a body, m/s.
inline constexpr double max_body_speed = 10.0;

struct Scatterer {
    Vec3 position;
    double reflectivity = 0.0;
};

/// Zero-based indices of the subcarriers the simulator nulls (guard bands and DC).
inline std::vector<int> default_nulled_subcarriers() { return {0, 1, 2, 3, 4, 5, 32, 59, 60, 61, 62, 63}; }

struct SceneConfig {
    // Transmitter on the bottom wall, RX1 directly opposite, RX2 on the
    // perpendicular through the midpoint of the TX-RX1 line.
    Vec3 tx{170.0, 0.0, 150.0};
    std::vector<Vec3> rx{{170.0, 250.0, 150.0}, {0.0, 125.0, 150.0}};
    std::vector<Scatterer> static_scatterers{{{30.0, 20.0, 120.0}, 0.20},
                                             {{320.0, 30.0, 90.0}, 0.15},
                                             {{310.0, 230.0, 140.0}, 0.25},
                                             {{60.0, 240.0, 60.0}, 0.10}};
    double noise_std = 0.002;
    std::uint64_t rng_seed = 0;
    double subcarrier_spacing = 312.5e3;  // Hz
    std::vector<int> nulled_subcarriers = default_nulled_subcarriers();
    double body_gain = 0.35;
    /// Standing height of the body's reflecting centre for height_factor 1, cm.
    double body_height = 100.0;

    void validate(const csi::SimoConfig& simo) const {
        simo.validate();
        if (static_cast<int>(rx.size()) != simo.num_receivers) {
            throw ConfigError("scene.rx_positions: expected " + std::to_string(simo.num_receivers) + " receivers, found " +
                              std::to_string(rx.size()));
        }
        auto check = [](const Vec3& p, const std::string& what) {
            if (!csi::inside_area({p.x, p.y})) throw ConfigError(what + " lies outside the sensing area");
        };
        check(tx, "scene.tx_position");
        for (std::size_t i = 0; i < rx.size(); ++i) check(rx[i], "scene.rx_positions[" + std::to_string(i) + "]");
        if (!(noise_std >= 0.0)) throw ConfigError("scene.noise_std must be >= 0");
        if (!(subcarrier_spacing > 0.0)) throw ConfigError("scene.subcarrier_spacing must be positive");
        if (!(body_gain >= 0.0)) throw ConfigError("scene.body_gain must be >= 0");
        for (int s : nulled_subcarriers) {
            if (s < 0 || s >= simo.num_subcarriers) throw ConfigError("scene.nulled_subcarriers: index out of range");
        }
    }
};

struct BodyModel {
    int user = 0;
    double base_reflectivity = 1.0;
    double gait_frequency = 1.8;  // Hz
    double gait_amplitude = 4.0;  // cm
    double height_factor = 1.0;
    double gait_harmonic = 0.0;  // second-harmonic ratio of the sway waveform
    double gait_phase = 0.0;     // second-harmonic phase, rad

    /// Unit-amplitude sway waveform.
    double sway(double t) const {
        using std::numbers::pi;
        return std::sin(2.0 * pi * gait_frequency * t) + gait_harmonic * std::sin(4.0 * pi * gait_frequency * t + gait_phase);
    }

    void validate() const {
        if (!(base_reflectivity > 0.0)) throw ConfigError("body.base_reflectivity must be > 0");
        if (!(gait_frequency > 0.0 && gait_frequency <= 5.0)) throw ConfigError("body.gait_frequency must lie in (0, 5] Hz");
        if (!(gait_amplitude >= 0.0)) throw ConfigError("body.gait_amplitude must be >= 0");
        if (!(height_factor > 0.0)) throw ConfigError("body.height_factor must be > 0");
        if (!(gait_harmonic >= 0.0)) throw ConfigError("body.gait_harmonic must be >= 0");
        if (!std::isfinite(gait_phase)) throw ConfigError("body.gait_phase must be finite");
    }
};

enum class VerticalProfile { flat, descend, hop };

/// Parametric body trajectory for one activity. The horizontal position
/// traverses `waypoints` at constant speed; the vertical profile modulates
/// the reflector height.
struct MotionScript {
    int activity = csi::noac_id;
    double duration = 1.0;
    std::vector<Point2> waypoints;
    VerticalProfile vertical = VerticalProfile::flat;
    double vertical_extent = 0.0;   // descend: fraction of height lost; hop: cm
    double descend_exponent = 1.0;  // descend: shape of the ramp
    int hops = 0;

    double path_length() const {
        double len = 0.0;
        for (std::size_t i = 1; i < waypoints.size(); ++i) {
            len += std::hypot(waypoints[i].x - waypoints[i - 1].x, waypoints[i].y - waypoints[i - 1].y);
        }
        return len;
    }

    Point2 position(double t) const {
        if (waypoints.empty()) return csi::area_center();
        if (waypoints.size() == 1) return waypoints.front();
        const double u = std::clamp(t / duration, 0.0, 1.0);
        double remaining = u * path_length();
        for (std::size_t i = 1; i < waypoints.size(); ++i) {
            const auto& a = waypoints[i - 1];
            const auto& b = waypoints[i];
            const double seg = std::hypot(b.x - a.x, b.y - a.y);
            if (remaining <= seg || i + 1 == waypoints.size()) {
                const double f = seg > 0.0 ? std::min(remaining / seg, 1.0) : 0.0;
                return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
            }
            remaining -= seg;
        }
        return waypoints.back();
    }

    /// Unit direction of travel at time t, (1, 0) when stationary.
    Point2 heading(double t) const {
        const double dt = 1e-3;
        const auto a = position(std::max(0.0, t - dt));
        const auto b = position(std::min(duration, t + dt));
        const double n = std::hypot(b.x - a.x, b.y - a.y);
        if (n < 1e-9) return {1.0, 0.0};
        return {(b.x - a.x) / n, (b.y - a.y) / n};
    }

    double height(double t, double standing) const {
        const double u = std::clamp(t / duration, 0.0, 1.0);
        switch (vertical) {
        case VerticalProfile::flat: return standing;
        case VerticalProfile::descend: return standing * (1.0 - vertical_extent * std::pow(u, descend_exponent));
        case VerticalProfile::hop:
            return standing + vertical_extent * std::abs(std::sin(std::numbers::pi * hops * u));
        }
        return standing;
    }

    Vec3 point(double t, double standing) const {
        const auto p = position(t);
        return {p.x, p.y, height(t, standing)};
    }

    /// Largest speed along the script, m/s, by finite differences at 1 ms.
    double max_speed(double standing) const {
        const double dt = 1e-3;
        double best = 0.0;
        auto prev = point(0.0, standing);
        for (double t = dt; t <= duration + 0.5 * dt; t += dt) {
            const auto cur = point(std::min(t, duration), standing);
            best = std::max(best, distance(prev, cur) / 100.0 / dt);
            prev = cur;
        }
        return best;
    }

    void validate(double standing) const {
        if (activity < 0 || activity >= csi::num_activities) throw ConfigError("script.activity out of range");
        if (!(duration > 0.0)) throw ConfigError("script.duration must be positive");
        for (const auto& p : waypoints) {
            if (!csi::inside_area(p)) throw ConfigError("script waypoint outside the sensing area");
        }
        const double v = max_speed(standing);
        if (v > max_body_speed) {
            throw ConfigError("script for " + std::string(csi::activity_name(activity)) + " moves at " + std::to_string(v) +
                              " m/s, above the " + std::to_string(max_body_speed) + " m/s human-speed bound");
        }
    }
};

/// The four marked walking paths (straight segments, cm).
inline std::array<std::array<Point2, 2>, 4> walk_paths() {
    return {{{Point2{40, 40}, Point2{300, 40}},
             {Point2{40, 125}, Point2{300, 125}},
             {Point2{40, 210}, Point2{300, 210}},
             {Point2{170, 40}, Point2{170, 210}}}};
}

/// Standard script for an activity. `anchor` locates the stationary activities.
inline MotionScript standard_script(int activity, double duration, Point2 anchor) {
    using csi::Activity;
    MotionScript s;
    s.activity = activity;
    s.duration = duration;
    switch (static_cast<Activity>(activity)) {
    case Activity::sit:
        s.waypoints = {anchor};
        s.vertical = VerticalProfile::descend;
        s.vertical_extent = 0.45;
        s.descend_exponent = 1.0;
        break;
    case Activity::fall:
        s.waypoints = {anchor, {anchor.x + 60.0, anchor.y}};
        s.vertical = VerticalProfile::descend;
        s.vertical_extent = 0.85;
        s.descend_exponent = 2.0;
        break;
    case Activity::jump:
        s.waypoints = {anchor};
        s.vertical = VerticalProfile::hop;
        s.vertical_extent = 35.0;
        s.hops = std::max(1, static_cast<int>(std::lround(duration / 0.8)));
        break;
    case Activity::run: {
        const auto path = walk_paths()[1];
        s.waypoints = {path[0], path[1], path[0], path[1], path[0]};
        break;
    }
    case Activity::walk1:
    case Activity::walk2:
    case Activity::walk3:
    case Activity::walk4: {
        const auto path = walk_paths()[static_cast<std::size_t>(activity - static_cast<int>(Activity::walk1))];
        s.waypoints = {path[0], path[1]};
        break;
    }
    case Activity::noac: s.waypoints = {anchor}; break;
    }
    return s;
}

namespace detail {

struct BodyState {
    Vec3 position;
    double reflectivity = 0.0;
};

inline BodyState body_state(const BodyModel& body, const MotionScript& script, double standing, double t, double pre_idle) {
    using std::numbers::pi;
    const double local = t - pre_idle;
    const bool active = local >= 0.0 && local < script.duration;
    const double clamped = std::clamp(local, 0.0, script.duration);
    Vec3 p = script.point(clamped, standing);
    const bool moving = script.activity == static_cast<int>(csi::Activity::run) || csi::is_walk(script.activity);
    const double f = body.gait_frequency;
    // gait fades in and out so the body never jumps between the two perturbation models
    const double ramp = 0.25;
    double w = 0.0;
    if (moving && active) {
        const double edge = std::min({local, script.duration - local, ramp}) / ramp;
        w = edge * edge * (3.0 - 2.0 * edge);
    }
    if (w > 0.0) {
        // mean heading over +-ramp: net displacement over distance travelled, so it
        // shrinks through a reversal instead of flipping
        const double t0 = std::max(0.0, clamped - ramp);
        const double t1 = std::min(script.duration, clamped + ramp);
        const auto a = script.position(t0);
        const auto b = script.position(t1);
        const double travelled = script.path_length() * (t1 - t0) / script.duration;
        Point2 dir{1.0, 0.0};
        if (travelled > 1e-9) dir = {(b.x - a.x) / travelled, (b.y - a.y) / travelled};
        const double sway = body.gait_amplitude * body.sway(t);
        p.x += w * (-dir.y * sway);
        p.y += w * (dir.x * sway);
        p.z += w * 0.5 * body.gait_amplitude * std::sin(4.0 * pi * f * t);
    }
    // standing micro-motion at the user's own rate, visible within one frame
    p.x += (1.0 - w) * 0.4 * body.gait_amplitude * body.sway(t);
    p.y += (1.0 - w) * 0.2 * body.gait_amplitude * body.sway(t + 0.1);
    const double modulation = 1.0 + w * 0.04 * body.gait_amplitude * std::sin(2.0 * pi * f * t + 0.7) +
                              (1.0 - w) * 0.03 * body.gait_amplitude * std::sin(2.0 * pi * f * t);
    return {p, body.base_reflectivity * modulation};
}

/// Per-antenna positions: antennas of one receiver are spaced half a
/// wavelength apart along x.
inline std::vector<Vec3> antenna_positions(const csi::SimoConfig& simo, const SceneConfig& scene) {
    std::vector<Vec3> out;
    const double spacing_cm = simo.wavelength() / 2.0 * 100.0;
    for (int m = 0; m < simo.num_receivers; ++m) {
        for (int n = 0; n < simo.antennas_per_receiver; ++n) {
            auto p = scene.rx[static_cast<std::size_t>(m)];
            p.x += spacing_cm * n;
            out.push_back(p);
        }
    }
    return out;
}

/// Adds g * exp(-j 2 pi f_s tau) over all subcarriers into `acc`.
inline void add_path(std::vector<std::complex<double>>& acc, double gain, double tau, double f0, double spacing) {
    using std::numbers::pi;
    std::complex<double> rot = std::polar(gain, -2.0 * pi * std::fmod(f0 * tau, 1.0));
    const std::complex<double> step = std::polar(1.0, -2.0 * pi * spacing * tau);
    for (auto& v : acc) {
        v += rot;
        rot *= step;
    }
}

} // namespace detail

/// Simulates one trial: idle, activity, idle. `body` empty means an empty room.
inline csi::CsiStream simulate_trial(const csi::SimoConfig& simo, const SceneConfig& scene,
                                     const std::optional<BodyModel>& body, const MotionScript& script, double pre_idle,
                                     double post_idle, int stream_id = 0) {
    scene.validate(simo);
    const double standing = scene.body_height * (body ? body->height_factor : 1.0);
    if (body) body->validate();
    script.validate(standing);
    if (!(pre_idle >= 0.0) || !(post_idle >= 0.0)) throw ConfigError("idle periods must be >= 0");
    const double duration = pre_idle + script.duration + post_idle;
    if (duration > 60.0) throw ConfigError("trial duration exceeds 60 s");

    const int S = simo.num_subcarriers;
    const double fs = simo.sampling_rate;
    const double f0 = simo.carrier_freq - (S / 2) * scene.subcarrier_spacing;
    const double c = csi::speed_of_light;
    const auto antennas = detail::antenna_positions(simo, scene);
    const std::size_t A = antennas.size();
    const std::size_t n = csi::expected_sample_count(duration, fs);

    std::vector<bool> nulled(static_cast<std::size_t>(S), false);
    for (int s : scene.nulled_subcarriers) nulled[static_cast<std::size_t>(s)] = true;

    // static part per antenna
    std::vector<std::vector<std::complex<double>>> fixed(A, std::vector<std::complex<double>>(static_cast<std::size_t>(S)));
    for (std::size_t a = 0; a < A; ++a) {
        const double d = distance(scene.tx, antennas[a]) / 100.0;
        detail::add_path(fixed[a], 1.0 / d, d / c, f0, scene.subcarrier_spacing);
        for (const auto& sc : scene.static_scatterers) {
            const double d1 = distance(scene.tx, sc.position) / 100.0;
            const double d2 = distance(sc.position, antennas[a]) / 100.0;
            detail::add_path(fixed[a], sc.reflectivity / (d1 * d2), (d1 + d2) / c, f0, scene.subcarrier_spacing);
        }
    }

    csi::CsiStream out;
    out.config = simo;
    out.duration = duration;
    out.stream_id = stream_id;
    out.samples.resize(n * A * static_cast<std::size_t>(S));

    Rng rng(scene.rng_seed);
    std::normal_distribution<double> gauss(0.0, scene.noise_std / std::numbers::sqrt2);
    std::vector<std::complex<double>> h(static_cast<std::size_t>(S));
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        std::optional<detail::BodyState> state;
        if (body) state = detail::body_state(*body, script, standing, t, pre_idle);
        for (std::size_t a = 0; a < A; ++a) {
            h = fixed[a];
            if (state) {
                const double d1 = distance(scene.tx, state->position) / 100.0;
                const double d2 = distance(state->position, antennas[a]) / 100.0;
                detail::add_path(h, scene.body_gain * state->reflectivity / (d1 * d2), (d1 + d2) / c, f0,
                                 scene.subcarrier_spacing);
            }
            auto* dst = &out.samples[(i * A + a) * static_cast<std::size_t>(S)];
            for (int s = 0; s < S; ++s) {
                std::complex<double> v = h[static_cast<std::size_t>(s)];
                if (scene.noise_std > 0.0) v += std::complex<double>(gauss(rng), gauss(rng));
                dst[s] = nulled[static_cast<std::size_t>(s)] ? std::complex<float>(0.0f, 0.0f) : std::complex<float>(v);
            }
        }
    }

    // annotations
    const std::optional<int> user = body ? std::optional<int>(body->user) : std::nullopt;
    auto track = [&](double start, double end) {
        std::vector<Point2> pts;
        if (!body) return pts;
        const auto count = csi::expected_sample_count(end - start, fs);
        pts.reserve(count);
        for (std::size_t k = 0; k < count; ++k) {
            const double local = start + static_cast<double>(k) / fs - pre_idle;
            pts.push_back(script.position(std::clamp(local, 0.0, script.duration)));
        }
        return pts;
    };
    const double act_end = pre_idle + script.duration;
    if (pre_idle > 0.0) out.annotations.push_back({0.0, pre_idle, csi::noac_id, user, track(0.0, pre_idle)});
    const int act = body ? script.activity : csi::noac_id;
    out.annotations.push_back({pre_idle, act_end, act, user, track(pre_idle, act_end)});
    if (post_idle > 0.0) out.annotations.push_back({act_end, duration, csi::noac_id, user, track(act_end, duration)});
    return out;
}

// ---------------------------------------------------------------------------
// Dataset generation

/// Trials per activity and participant; walk counts apply per path.
struct TrialPlan {
    std::array<int, csi::num_activities> trials{10, 10, 8, 6, 0, 6, 6, 6, 6};

    int trials_per_user() const {
        int n = 0;
        for (int c : trials) n += c;
        return n;
    }
};

struct DatasetConfig {
    csi::SimoConfig simo;
    SceneConfig scene;
    std::vector<BodyModel> users;
    TrialPlan plan;
    double trial_duration = 10.0;
    /// Activity durations, seconds. Trial counts are inversely proportional
    /// to these so every class contributes a similar number of windows; each
    /// is a whole number of 0.8 s windows so no partial frame is dropped.
    std::array<double, csi::num_activities> activity_duration{2.4, 2.4, 3.2, 4.0, 0.0, 4.0, 4.0, 4.0, 4.0};
    /// Framing window, used to align activity onsets with window boundaries.
    double window = 0.8;
    int unseen_users = 1;
    double val_fraction = 0.15;
    double test_fraction = 0.15;

    void validate() const {
        scene.validate(simo);
        if (users.size() < 2) throw ConfigError("users: at least 2 users are required, got " + std::to_string(users.size()));
        for (const auto& u : users) u.validate();
        if (unseen_users < 1 || unseen_users >= static_cast<int>(users.size())) {
            throw ConfigError("unseen_users must lie in [1, users - 1]");
        }
        if (plan.trials[static_cast<std::size_t>(csi::noac_id)] != 0) throw ConfigError("trial_plan.NoAc must be 0 (idle time is implicit)");
        double shortest = 1.0;  // locomotion takes duration / height_factor
        for (const auto& u : users) shortest = std::min(shortest, u.height_factor);
        for (int k = 0; k < csi::num_activities; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            if (k == csi::noac_id) continue;
            if (plan.trials[ku] < 1) {
                throw ConfigError("trial_plan." + std::string(csi::activity_name(k)) + " must be >= 1");
            }
            const bool locomotion = k == static_cast<int>(csi::Activity::run) || csi::is_walk(k);
            const double longest = activity_duration[ku] / (locomotion ? shortest : 1.0);
            if (!(activity_duration[ku] > 0.0) || longest + 2.0 * window > trial_duration) {
                throw ConfigError("activity_durations." + std::string(csi::activity_name(k)) +
                                  " must be positive and leave two idle windows in the trial");
            }
        }
        if (trial_duration > 60.0) throw ConfigError("trial_duration must be <= 60 s");
        if (!(window > 0.0)) throw ConfigError("window must be positive");
        if (!(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0)) {
            throw ConfigError("split fractions must be non-negative and sum below 1");
        }
    }
};

/// Users with well-separated gait signatures. Each user gets a code of four
/// 3-level parameters (frequency, amplitude, reflectivity, height). The first
/// 27 codes satisfy d = (a + b + c) mod 3, so any two of them differ in at
/// least two parameters; larger populations draw from the remaining codes.
inline std::vector<BodyModel> make_users(int count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("users.count must be >= 1");
    if (count > 81) throw ConfigError("users.count must be <= 81");
    Rng rng(named_seed(seed, "users"));
    std::vector<std::array<int, 4>> spread, rest;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c)
                for (int d = 0; d < 3; ++d) ((a + b + c) % 3 == d ? spread : rest).push_back({a, b, c, d});
    std::shuffle(spread.begin(), spread.end(), rng);
    std::shuffle(rest.begin(), rest.end(), rng);
    spread.insert(spread.end(), rest.begin(), rest.end());
    constexpr double freq[3] = {1.3, 1.9, 2.5};
    constexpr double amp[3] = {2.5, 5.5, 8.5};
    constexpr double refl[3] = {0.85, 1.0, 1.15};
    constexpr double height[3] = {0.85, 1.0, 1.15};
    std::vector<BodyModel> users;
    for (int i = 0; i < count; ++i) {
        const auto& c = spread[static_cast<std::size_t>(i)];
        BodyModel m;
        m.user = i;
        m.gait_frequency = freq[c[0]];
        m.gait_amplitude = amp[c[1]];
        m.base_reflectivity = refl[c[2]];
        m.height_factor = height[c[3]];
        users.push_back(m);
    }
    return users;
}

struct TrialSpec {
    int stream_id = 0;
    int user = 0;  // index into DatasetConfig::users
    int activity = 0;
    int trial = 0;
    double pre_idle = 0.0;
    double post_idle = 0.0;
    MotionScript script;
    std::uint64_t seed = 0;
    csi::Split split = csi::Split::train;
};

/// Deterministic trial list with split assignment. The last `unseen_users`
/// users are held out entirely.
inline std::vector<TrialSpec> plan_trials(const DatasetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<TrialSpec> trials;
    const int num_users = static_cast<int>(cfg.users.size());
    const int first_unseen = num_users - cfg.unseen_users;
    const double W = cfg.window;
    for (int u = 0; u < num_users; ++u) {
        for (int k = 0; k < csi::num_activities; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            for (int r = 0; r < cfg.plan.trials[ku]; ++r) {
                TrialSpec t;
                t.stream_id = static_cast<int>(trials.size());
                t.user = u;
                t.activity = k;
                t.trial = r;
                t.seed = child_seed(named_seed(seed, "trial"), static_cast<std::uint64_t>(t.stream_id));
                Rng rng(t.seed);
                // taller users stride further, so they cover a path sooner
                const bool locomotion = k == static_cast<int>(csi::Activity::run) || csi::is_walk(k);
                const double dur = cfg.activity_duration[ku] / (locomotion ? cfg.users[static_cast<std::size_t>(u)].height_factor : 1.0);
                const int max_windows = static_cast<int>(std::floor((cfg.trial_duration - dur) / W)) - 1;
                std::uniform_int_distribution<int> pick(1, std::max(1, max_windows));
                std::uniform_real_distribution<double> jitter(-0.04, 0.04);
                t.pre_idle = (pick(rng) + jitter(rng)) * W;
                t.post_idle = cfg.trial_duration - t.pre_idle - dur;
                // stationary activities happen at a marked spot, give or take a step
                std::uniform_real_distribution<double> ax(150.0, 190.0), ay(105.0, 145.0);
                const Point2 anchor{ax(rng), ay(rng)};
                t.script = standard_script(k, dur, anchor);
                t.split = u >= first_unseen ? csi::Split::unseen : csi::Split::train;
                trials.push_back(std::move(t));
            }
        }
    }

    // Stratified split of seen-user trials per (user, activity).
    Rng split_rng(named_seed(seed, "split"));
    for (int u = 0; u < first_unseen; ++u) {
        for (int k = 0; k < csi::num_activities; ++k) {
            std::vector<std::size_t> group;
            for (std::size_t i = 0; i < trials.size(); ++i) {
                if (trials[i].user == u && trials[i].activity == k) group.push_back(i);
            }
            if (group.empty()) continue;
            std::shuffle(group.begin(), group.end(), split_rng);
            const auto n = static_cast<long>(group.size());
            long n_val = 0, n_test = 0;
            if (n >= 3) {
                n_val = std::max(1L, std::lround(cfg.val_fraction * static_cast<double>(n)));
                n_test = std::max(1L, std::lround(cfg.test_fraction * static_cast<double>(n)));
            } else if (n == 2) {
                n_test = 1;
            }
            for (long i = 0; i < n; ++i) {
                auto& t = trials[group[static_cast<std::size_t>(i)]];
                t.split = i < n_test ? csi::Split::test : (i < n_test + n_val ? csi::Split::val : csi::Split::train);
            }
        }
    }
    return trials;
}

inline csi::CsiStream simulate(const DatasetConfig& cfg, const TrialSpec& trial) {
    auto scene = cfg.scene;
    scene.rng_seed = trial.seed;
    return simulate_trial(cfg.simo, scene, cfg.users[static_cast<std::size_t>(trial.user)], trial.script, trial.pre_idle,
                          trial.post_idle, trial.stream_id);
}

inline std::string stream_file_name(int stream_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "stream_%05d.csi", stream_id);
    return buf;
}

inline csi::Manifest make_manifest(const DatasetConfig& cfg, const std::vector<TrialSpec>& trials, std::uint64_t seed) {
    csi::Manifest m;
    m.seed = seed;
    m.simo = cfg.simo;
    m.num_users = static_cast<int>(cfg.users.size());
    for (int u = m.num_users - cfg.unseen_users; u < m.num_users; ++u) m.unseen_users.push_back(cfg.users[static_cast<std::size_t>(u)].user);
    for (const auto& t : trials) {
        m.entries.push_back({"streams/" + stream_file_name(t.stream_id), t.stream_id, cfg.users[static_cast<std::size_t>(t.user)].user,
                             t.activity, t.trial, t.split, t.seed});
    }
    m.provenance = {{"generator", "sensekit channel simulator"}, {"trial_seed_scheme", "child_seed(named_seed(seed, trial), stream_id)"}};
    return m;
}

struct Dataset {
    std::vector<csi::CsiStream> streams;
    csi::Manifest manifest;
};

/// Plans and simulates every trial. Trials run in parallel; output order
/// follows the plan.
inline Dataset generate_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
    const auto trials = plan_trials(cfg, seed);
    Dataset out;
    out.streams.resize(trials.size());
    sensekit::detail::parallel_for(trials.size(), [&](std::size_t i) { out.streams[i] = simulate(cfg, trials[i]); });
    out.manifest = make_manifest(cfg, trials, seed);
    return out;
}

// ---------------------------------------------------------------------------
// Config file

inline void to_json(nlohmann::json& j, const Vec3& v) { j = {v.x, v.y, v.z}; }
inline void from_json(const nlohmann::json& j, Vec3& v) {
    v.x = j.at(0).get<double>();
    v.y = j.at(1).get<double>();
    v.z = j.size() > 2 ? j.at(2).get<double>() : 150.0;
}

inline void to_json(nlohmann::json& j, const BodyModel& b) {
    j = {{"user", b.user},
         {"base_reflectivity", b.base_reflectivity},
         {"gait_frequency", b.gait_frequency},
         {"gait_amplitude", b.gait_amplitude},
         {"height_factor", b.height_factor},
         {"gait_harmonic", b.gait_harmonic},
         {"gait_phase", b.gait_phase}};
}
inline void from_json(const nlohmann::json& j, BodyModel& b) {
    b.user = j.value("user", b.user);
    b.base_reflectivity = j.value("base_reflectivity", b.base_reflectivity);
    b.gait_frequency = j.value("gait_frequency", b.gait_frequency);
    b.gait_amplitude = j.value("gait_amplitude", b.gait_amplitude);
    b.height_factor = j.value("height_factor", b.height_factor);
    b.gait_harmonic = j.value("gait_harmonic", b.gait_harmonic);
    b.gait_phase = j.value("gait_phase", b.gait_phase);
}

inline nlohmann::json dataset_config_to_json(const DatasetConfig& cfg) {
    nlohmann::json plan, durations;
    for (int k = 0; k < csi::num_activities; ++k) {
        if (k == csi::noac_id) continue;
        plan[std::string(csi::activity_name(k))] = cfg.plan.trials[static_cast<std::size_t>(k)];
        durations[std::string(csi::activity_name(k))] = cfg.activity_duration[static_cast<std::size_t>(k)];
    }
    nlohmann::json scatterers = nlohmann::json::array();
    for (const auto& s : cfg.scene.static_scatterers) scatterers.push_back({{"position", s.position}, {"reflectivity", s.reflectivity}});
    return {{"simo", cfg.simo},
            {"scene",
             {{"tx_position", cfg.scene.tx},
              {"rx_positions", cfg.scene.rx},
              {"static_scatterers", scatterers},
              {"noise_std", cfg.scene.noise_std},
              {"subcarrier_spacing", cfg.scene.subcarrier_spacing},
              {"nulled_subcarriers", cfg.scene.nulled_subcarriers},
              {"body_gain", cfg.scene.body_gain},
              {"body_height", cfg.scene.body_height}}},
            {"users", cfg.users},
            {"trial_plan", plan},
            {"activity_durations", durations},
            {"trial_duration", cfg.trial_duration},
            {"window", cfg.window},
            {"unseen_users", cfg.unseen_users},
            {"val_fraction", cfg.val_fraction},
            {"test_fraction", cfg.test_fraction}};
}

/// Reads a simulation config. Missing keys keep their defaults; `users` may
/// be an explicit list or `num_users` a count generated from `seed`.
inline DatasetConfig dataset_config_from_json(const nlohmann::json& j, std::uint64_t seed) {
    DatasetConfig cfg;
    auto field = [](const std::string& name, auto&& fn) {
        try {
            fn();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config field \"" + name + "\": " + e.what());
        }
    };
    if (j.contains("simo")) field("simo", [&] { cfg.simo = j["simo"].get<csi::SimoConfig>(); });
    if (j.contains("scene")) {
        const auto& s = j["scene"];
        field("scene.tx_position", [&] { if (s.contains("tx_position")) cfg.scene.tx = s["tx_position"].get<Vec3>(); });
        field("scene.rx_positions", [&] { if (s.contains("rx_positions")) cfg.scene.rx = s["rx_positions"].get<std::vector<Vec3>>(); });
        field("scene.static_scatterers", [&] {
            if (s.contains("static_scatterers")) {
                cfg.scene.static_scatterers.clear();
                for (const auto& sc : s["static_scatterers"]) {
                    cfg.scene.static_scatterers.push_back({sc.at("position").get<Vec3>(), sc.at("reflectivity").get<double>()});
                }
            }
        });
        field("scene.noise_std", [&] { cfg.scene.noise_std = s.value("noise_std", cfg.scene.noise_std); });
        field("scene.subcarrier_spacing", [&] { cfg.scene.subcarrier_spacing = s.value("subcarrier_spacing", cfg.scene.subcarrier_spacing); });
        field("scene.nulled_subcarriers", [&] {
            if (s.contains("nulled_subcarriers")) cfg.scene.nulled_subcarriers = s["nulled_subcarriers"].get<std::vector<int>>();
        });
        field("scene.body_gain", [&] { cfg.scene.body_gain = s.value("body_gain", cfg.scene.body_gain); });
        field("scene.body_height", [&] { cfg.scene.body_height = s.value("body_height", cfg.scene.body_height); });
    }
    field("users", [&] {
        if (j.contains("users") && j["users"].is_array()) {
            cfg.users = j["users"].get<std::vector<BodyModel>>();
            for (std::size_t i = 0; i < cfg.users.size(); ++i) {
                if (!j["users"][i].contains("user")) cfg.users[i].user = static_cast<int>(i);
            }
        } else {
            cfg.users = make_users(j.value("num_users", 13), seed);
        }
    });
    field("trial_plan", [&] {
        if (!j.contains("trial_plan")) return;
        for (const auto& [key, value] : j["trial_plan"].items()) {
            if (key == "walk") {
                for (int k = static_cast<int>(csi::Activity::walk1); k <= static_cast<int>(csi::Activity::walk4); ++k) {
                    cfg.plan.trials[static_cast<std::size_t>(k)] = value.get<int>();
                }
            } else {
                cfg.plan.trials[static_cast<std::size_t>(csi::activity_from_name(key))] = value.get<int>();
            }
        }
    });
    field("activity_durations", [&] {
        if (!j.contains("activity_durations")) return;
        for (const auto& [key, value] : j["activity_durations"].items()) {
            if (key == "walk") {
                for (int k = static_cast<int>(csi::Activity::walk1); k <= static_cast<int>(csi::Activity::walk4); ++k) {
                    cfg.activity_duration[static_cast<std::size_t>(k)] = value.get<double>();
                }
            } else {
                cfg.activity_duration[static_cast<std::size_t>(csi::activity_from_name(key))] = value.get<double>();
            }
        }
    });
    field("trial_duration", [&] { cfg.trial_duration = j.value("trial_duration", cfg.trial_duration); });
    field("window", [&] { cfg.window = j.value("window", cfg.window); });
    field("unseen_users", [&] { cfg.unseen_users = j.value("unseen_users", cfg.unseen_users); });
    field("val_fraction", [&] { cfg.val_fraction = j.value("val_fraction", cfg.val_fraction); });
    field("test_fraction", [&] { cfg.test_fraction = j.value("test_fraction", cfg.test_fraction); });
    if (cfg.scene.rx.size() != static_cast<std::size_t>(cfg.simo.num_receivers)) {
        throw ConfigError("scene.rx_positions: expected " + std::to_string(cfg.simo.num_receivers) + " receivers, found " +
                          std::to_string(cfg.scene.rx.size()));
    }
    cfg.validate();
    return cfg;
}

/// Default configuration: 13 users and the standard trial plan.
inline DatasetConfig default_dataset_config(std::uint64_t seed, int num_users = 13) {
    DatasetConfig cfg;
    cfg.users = make_users(num_users, seed);
    return cfg;
}

} // namespace sensekit::sim
