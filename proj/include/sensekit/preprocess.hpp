#pragma once

// Stream -> frame pipeline: dead-subcarrier detection, amplitude extraction,
// zero-phase low-pass filtering, windowing and class balancing.

#include <sensekit/butterworth.hpp>
#include <sensekit/csi_model.hpp>
#include <sensekit/detail/binary_io.hpp>
#include <sensekit/detail/parallel.hpp>
#include <sensekit/rng.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace sensekit::prep {

using csi::Frame;

struct PreprocessConfig {
    double zero_threshold = 0.01;  // fraction of the median subcarrier amplitude
    int filter_order = 10;
    double cutoff = 200.0;  // Hz, clamped to 0.45 fs
    double window = 0.8;    // s
    int hop = 0;            // samples; 0 means one full window (non-overlapping)
    double balance_tolerance = 0.05;

    double effective_cutoff(double fs) const { return std::min(cutoff, 0.45 * fs); }

    int window_steps(double fs) const {
        const double steps = window * fs;
        const auto rounded = std::llround(steps);
        if (rounded < 1 || std::abs(steps - static_cast<double>(rounded)) > 1e-9) {
            throw ConfigError("window x fs must be a positive integer, got " + std::to_string(steps));
        }
        return static_cast<int>(rounded);
    }

    int hop_steps(double fs) const { return hop > 0 ? hop : window_steps(fs); }

    void validate(double fs) const {
        if (filter_order < 1) throw ConfigError("preprocess.filter_order must be >= 1");
        if (!(cutoff > 0.0)) throw ConfigError("preprocess.cutoff must be positive");
        const double fc = effective_cutoff(fs);
        if (!(fc > 0.0 && fc < fs / 2.0)) throw ConfigError("preprocess: effective cutoff must lie in (0, fs/2)");
        window_steps(fs);
        if (hop < 0) throw ConfigError("preprocess.hop must be >= 0");
        if (!(zero_threshold >= 0.0)) throw ConfigError("preprocess.zero_threshold must be >= 0");
        if (!(balance_tolerance >= 0.0)) throw ConfigError("preprocess.balance_tolerance must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Dead subcarriers

/// Indices whose mean amplitude is below threshold x (median over subcarriers).
inline std::vector<int> dead_from_means(const std::vector<double>& means, double threshold) {
    if (means.empty()) throw DataError("dead-subcarrier detection on an empty stream");
    auto sorted = means;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    if (!(median > 0.0)) throw DataError("degenerate input: median subcarrier amplitude is zero");
    std::vector<int> out;
    for (std::size_t s = 0; s < n; ++s) {
        if (means[s] < threshold * median) out.push_back(static_cast<int>(s));
    }
    if (out.size() == n) throw DataError("degenerate input: every subcarrier is dead");
    return out;
}

/// Accumulates per-subcarrier mean amplitude over streams and antennas.
class SubcarrierProfile {
public:
    explicit SubcarrierProfile(int num_subcarriers = 0)
        : sum_(static_cast<std::size_t>(num_subcarriers), 0.0) {}

    void add(const csi::CsiStream& stream) {
        const int S = stream.config.num_subcarriers;
        if (sum_.empty()) sum_.assign(static_cast<std::size_t>(S), 0.0);
        if (static_cast<int>(sum_.size()) != S) throw DataError("streams disagree on the subcarrier count");
        const auto per = stream.config.entries_per_sample();
        for (std::size_t i = 0; i < stream.samples.size(); ++i) {
            sum_[i % per % static_cast<std::size_t>(S)] += std::abs(stream.samples[i]);
        }
        count_ += stream.num_samples() * static_cast<std::size_t>(stream.config.num_antennas());
    }

    std::vector<double> means() const {
        std::vector<double> m(sum_.size(), 0.0);
        if (count_ == 0) return m;
        for (std::size_t s = 0; s < m.size(); ++s) m[s] = sum_[s] / static_cast<double>(count_);
        return m;
    }

    /// Subcarriers whose mean amplitude falls below threshold x median.
    std::vector<int> dead(double threshold) const {
        if (count_ == 0) throw DataError("dead-subcarrier detection on an empty stream");
        return dead_from_means(means(), threshold);
    }

private:
    std::vector<double> sum_;
    std::size_t count_ = 0;
};

inline std::vector<int> detect_dead_subcarriers(const csi::CsiStream& stream, double threshold) {
    SubcarrierProfile profile(stream.config.num_subcarriers);
    profile.add(stream);
    return profile.dead(threshold);
}

// ---------------------------------------------------------------------------
// Amplitudes

/// Real tensor [steps x width], width = antennas x retained subcarriers,
/// antenna-major.
struct AmplitudeTensor {
    std::size_t steps = 0;
    int width = 0;
    std::vector<double> data;

    double& operator()(std::size_t t, int f) { return data[t * static_cast<std::size_t>(width) + static_cast<std::size_t>(f)]; }
    double operator()(std::size_t t, int f) const { return data[t * static_cast<std::size_t>(width) + static_cast<std::size_t>(f)]; }
};

/// Drops `dead` subcarriers and keeps |h| (phase discarded).
inline AmplitudeTensor sparsity_reduce(const csi::CsiStream& stream, const std::vector<int>& dead) {
    const int S = stream.config.num_subcarriers;
    std::vector<bool> drop(static_cast<std::size_t>(S), false);
    for (int s : dead) {
        if (s < 0 || s >= S) throw ConfigError("dead subcarrier index " + std::to_string(s) + " outside [0, " + std::to_string(S) + ")");
        drop[static_cast<std::size_t>(s)] = true;
    }
    std::vector<int> keep;
    for (int s = 0; s < S; ++s) {
        if (!drop[static_cast<std::size_t>(s)]) keep.push_back(s);
    }
    const int A = stream.config.num_antennas();
    AmplitudeTensor out;
    out.steps = stream.num_samples();
    out.width = A * static_cast<int>(keep.size());
    out.data.resize(out.steps * static_cast<std::size_t>(out.width));
    for (std::size_t t = 0; t < out.steps; ++t) {
        const auto sample = stream.sample(t);
        int f = 0;
        for (int a = 0; a < A; ++a) {
            for (int s : keep) out(t, f++) = std::abs(std::complex<double>(sample[static_cast<std::size_t>(a * S + s)]));
        }
    }
    return out;
}

/// Zero-phase low-pass along time for every feature column. Amplitudes are
/// clamped at zero afterwards.
inline void lowpass_tensor(AmplitudeTensor& tensor, double fs, double cutoff, int order) {
    if (tensor.steps < 2) return;
    const auto filter = dsp::design_butterworth_lowpass(order, cutoff, fs);
    std::vector<double> column(tensor.steps);
    for (int f = 0; f < tensor.width; ++f) {
        for (std::size_t t = 0; t < tensor.steps; ++t) column[t] = tensor(t, f);
        const auto y = filter.filtfilt(column);
        for (std::size_t t = 0; t < tensor.steps; ++t) tensor(t, f) = std::max(0.0, y[t]);
    }
}

// ---------------------------------------------------------------------------
// Framing

namespace detail {

inline std::size_t annotation_index(const std::vector<csi::Annotation>& ann, double t) {
    for (std::size_t i = 0; i < ann.size(); ++i) {
        const bool last = i + 1 == ann.size();
        if (t >= ann[i].start && (t < ann[i].end || last)) return i;
    }
    return ann.size() - 1;
}

} // namespace detail

/// Fixed-length windows at `hop`. Labels come from the annotation covering
/// the window midpoint; windows with more than 20% of their samples under a
/// different annotation are dropped.
inline std::vector<Frame> make_frames(const AmplitudeTensor& tensor, const std::vector<csi::Annotation>& annotations, double fs,
                                      int window_steps, int hop, int stream_id = 0) {
    std::vector<Frame> frames;
    if (window_steps < 1 || hop < 1) throw ConfigError("window and hop must be >= 1 sample");
    if (annotations.empty() || tensor.steps < static_cast<std::size_t>(window_steps)) return frames;
    const auto W = static_cast<std::size_t>(window_steps);

    std::vector<std::size_t> owner(tensor.steps);
    for (std::size_t i = 0; i < tensor.steps; ++i) owner[i] = detail::annotation_index(annotations, static_cast<double>(i) / fs);

    for (std::size_t start = 0; start + W <= tensor.steps; start += static_cast<std::size_t>(hop)) {
        const double mid_t = (static_cast<double>(start) + static_cast<double>(W) / 2.0) / fs;
        const auto label = detail::annotation_index(annotations, mid_t);
        std::size_t foreign = 0;
        for (std::size_t i = start; i < start + W; ++i) foreign += owner[i] != label;
        if (static_cast<double>(foreign) > 0.2 * static_cast<double>(W)) continue;

        const auto& a = annotations[label];
        Frame fr;
        fr.steps = window_steps;
        fr.features = tensor.width;
        fr.data.resize(W * static_cast<std::size_t>(tensor.width));
        for (std::size_t t = 0; t < W; ++t) {
            for (int f = 0; f < tensor.width; ++f) {
                fr.data[t * static_cast<std::size_t>(tensor.width) + static_cast<std::size_t>(f)] = static_cast<float>(tensor(start + t, f));
            }
        }
        fr.activity = a.activity;
        fr.user = a.user.value_or(-1);
        fr.stream_id = stream_id;
        fr.start_index = static_cast<int>(start);

        double sx = 0.0, sy = 0.0;
        std::size_t tracked = 0;
        for (std::size_t i = start; i < start + W; ++i) {
            const auto& ai = annotations[owner[i]];
            if (ai.position_track.empty()) continue;
            const double offset = (static_cast<double>(i) / fs - ai.start) * fs;
            const auto k = std::min<std::size_t>(ai.position_track.size() - 1,
                                                 static_cast<std::size_t>(std::max(0.0, std::floor(offset + 1e-9))));
            sx += ai.position_track[k].x;
            sy += ai.position_track[k].y;
            ++tracked;
        }
        fr.coord = tracked ? csi::Point2{sx / static_cast<double>(tracked), sy / static_cast<double>(tracked)} : csi::area_center();
        frames.push_back(std::move(fr));
    }
    return frames;
}

/// Sparsity reduction, filtering and framing of one stream.
inline std::vector<Frame> preprocess_stream(const csi::CsiStream& stream, const std::vector<int>& dead, const PreprocessConfig& cfg) {
    const double fs = stream.config.sampling_rate;
    cfg.validate(fs);
    auto tensor = sparsity_reduce(stream, dead);
    lowpass_tensor(tensor, fs, cfg.effective_cutoff(fs), cfg.filter_order);
    return make_frames(tensor, stream.annotations, fs, cfg.window_steps(fs), cfg.hop_steps(fs), stream.stream_id);
}

// ---------------------------------------------------------------------------
// Balancing

inline std::array<std::size_t, csi::num_activities> class_counts(const std::vector<Frame>& frames) {
    std::array<std::size_t, csi::num_activities> counts{};
    for (const auto& f : frames) {
        if (f.activity < 0 || f.activity >= csi::num_activities) throw DataError("frame activity label out of range");
        ++counts[static_cast<std::size_t>(f.activity)];
    }
    return counts;
}

/// Down-samples NoAc to the mean count of the other classes and caps any
/// activity class more than `tolerance` above that mean. Never duplicates
/// frames; kept frames stay in input order.
inline std::vector<Frame> balance_classes(const std::vector<Frame>& frames, std::uint64_t seed, double tolerance = 0.05) {
    const auto counts = class_counts(frames);
    for (int k = 0; k < csi::num_activities; ++k) {
        if (counts[static_cast<std::size_t>(k)] == 0) {
            throw DataError("class " + std::string(csi::activity_name(k)) + " has no frames");
        }
    }
    double mean = 0.0;
    for (int k = 0; k < csi::num_activities; ++k) {
        if (k != csi::noac_id) mean += static_cast<double>(counts[static_cast<std::size_t>(k)]);
    }
    mean /= csi::num_activities - 1;
    const auto target = static_cast<std::size_t>(std::llround(mean));

    Rng rng(seed);
    std::vector<bool> keep(frames.size(), true);
    for (int k = 0; k < csi::num_activities; ++k) {
        const auto n = counts[static_cast<std::size_t>(k)];
        const bool reduce = k == csi::noac_id ? n > target : static_cast<double>(n) > mean * (1.0 + tolerance);
        if (!reduce) continue;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (frames[i].activity == k) idx.push_back(i);
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = target; i < idx.size(); ++i) keep[idx[i]] = false;
    }
    std::vector<Frame> out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (keep[i]) out.push_back(frames[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalisation

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    bool empty() const { return mean.empty(); }
};

/// Per-feature mean and standard deviation over every time step of `frames`.
inline NormStats compute_norm(const std::vector<Frame>& frames) {
    if (frames.empty()) throw DataError("normalisation statistics need at least one frame");
    const auto F = static_cast<std::size_t>(frames.front().features);
    std::vector<double> sum(F, 0.0), sq(F, 0.0);
    std::size_t n = 0;
    for (const auto& fr : frames) {
        for (std::size_t t = 0; t < static_cast<std::size_t>(fr.steps); ++t) {
            for (std::size_t f = 0; f < F; ++f) {
                const double v = fr.data[t * F + f];
                sum[f] += v;
                sq[f] += v * v;
            }
        }
        n += static_cast<std::size_t>(fr.steps);
    }
    NormStats s;
    s.mean.resize(F);
    s.stddev.resize(F);
    for (std::size_t f = 0; f < F; ++f) {
        s.mean[f] = sum[f] / static_cast<double>(n);
        const double var = std::max(0.0, sq[f] / static_cast<double>(n) - s.mean[f] * s.mean[f]);
        s.stddev[f] = std::max(std::sqrt(var), 1e-6);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Frame dataset file
//
//   "FRM1" | u32 steps | u32 features | u64 count | u32 meta_len | meta JSON |
//   count x steps x features f32 | count x (i32 activity, i32 user,
//   f64 x, f64 y, i32 stream_id, i32 start_index)

struct FrameSet {
    int steps = 0;
    int features = 0;
    std::vector<Frame> frames;
    nlohmann::json meta = nlohmann::json::object();
};

inline void write_frames(std::ostream& os, const FrameSet& set) {
    using sensekit::detail::write_le;
    nlohmann::json meta = set.meta;
    meta["activities"] = std::vector<std::string>(csi::activity_names.begin(), csi::activity_names.end());
    const auto meta_str = meta.dump();
    sensekit::detail::write_magic(os, "FRM1");
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(set.steps));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(set.features));
    write_le<std::uint64_t>(os, set.frames.size());
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(meta_str.size()));
    os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    for (const auto& fr : set.frames) {
        if (fr.steps != set.steps || fr.features != set.features) throw ShapeError("frame shape differs from the dataset shape");
        for (float v : fr.data) write_le<float>(os, v);
    }
    for (const auto& fr : set.frames) {
        write_le<std::int32_t>(os, fr.activity);
        write_le<std::int32_t>(os, fr.user);
        write_le<double>(os, fr.coord.x);
        write_le<double>(os, fr.coord.y);
        write_le<std::int32_t>(os, fr.stream_id);
        write_le<std::int32_t>(os, fr.start_index);
    }
}

inline FrameSet read_frames(std::istream& is) {
    using sensekit::detail::read_le;
    sensekit::detail::expect_magic(is, "FRM1", "frame dataset");
    FrameSet set;
    set.steps = static_cast<int>(read_le<std::uint32_t>(is));
    set.features = static_cast<int>(read_le<std::uint32_t>(is));
    const auto count = read_le<std::uint64_t>(is);
    const auto meta_len = read_le<std::uint32_t>(is);
    try {
        set.meta = nlohmann::json::parse(sensekit::detail::read_bytes(is, meta_len));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("frame dataset: bad metadata: ") + e.what());
    }
    const auto cells = static_cast<std::size_t>(set.steps) * static_cast<std::size_t>(set.features);
    set.frames.resize(count);
    for (auto& fr : set.frames) {
        fr.steps = set.steps;
        fr.features = set.features;
        fr.data.resize(cells);
        for (auto& v : fr.data) v = read_le<float>(is);
    }
    for (auto& fr : set.frames) {
        fr.activity = read_le<std::int32_t>(is);
        fr.user = read_le<std::int32_t>(is);
        fr.coord.x = read_le<double>(is);
        fr.coord.y = read_le<double>(is);
        fr.stream_id = read_le<std::int32_t>(is);
        fr.start_index = read_le<std::int32_t>(is);
    }
    return set;
}

inline void save_frames(const std::filesystem::path& path, const FrameSet& set) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_frames(os, set);
}

inline FrameSet load_frames(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open frame dataset " + path.string());
    return read_frames(is);
}

// ---------------------------------------------------------------------------
// Whole-dataset pipeline

struct PreprocessedDataset {
    std::vector<int> dead_subcarriers;
    std::map<csi::Split, std::vector<Frame>> splits;
    NormStats norm;
    int num_users = 0;
};

/// Two passes over the streams produced by `load(i)`: dead subcarriers are
/// estimated from training streams only, then every stream is framed and
/// each split balanced independently. Normalisation comes from the balanced
/// training frames.
inline PreprocessedDataset preprocess_dataset(std::size_t num_streams, const std::function<csi::CsiStream(std::size_t)>& load,
                                              const std::vector<csi::Split>& split_of, int num_users, const PreprocessConfig& cfg,
                                              std::uint64_t seed) {
    if (split_of.size() != num_streams) throw DataError("split assignment count differs from stream count");
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < num_streams; ++i) {
        if (split_of[i] == csi::Split::train) train_idx.push_back(i);
    }
    if (train_idx.empty()) throw DataError("no training streams");

    std::vector<SubcarrierProfile> partial(train_idx.size());
    sensekit::detail::parallel_for(train_idx.size(), [&](std::size_t k) {
        SubcarrierProfile p;
        p.add(load(train_idx[k]));
        partial[k] = std::move(p);
    });
    // Summed in index order so the result does not depend on scheduling.
    std::vector<double> mean;
    for (const auto& p : partial) {
        const auto m = p.means();
        if (mean.empty()) mean.assign(m.size(), 0.0);
        for (std::size_t s = 0; s < m.size(); ++s) mean[s] += m[s] / static_cast<double>(partial.size());
    }
    PreprocessedDataset out;
    out.num_users = num_users;
    out.dead_subcarriers = dead_from_means(mean, cfg.zero_threshold);

    std::vector<std::vector<Frame>> per_stream(num_streams);
    sensekit::detail::parallel_for(num_streams, [&](std::size_t i) { per_stream[i] = preprocess_stream(load(i), out.dead_subcarriers, cfg); });
    for (std::size_t i = 0; i < num_streams; ++i) {
        auto& dst = out.splits[split_of[i]];
        for (auto& f : per_stream[i]) dst.push_back(std::move(f));
        per_stream[i].clear();
        per_stream[i].shrink_to_fit();
    }
    for (auto& [split, frames] : out.splits) {
        frames = balance_classes(frames, named_seed(seed, std::string("balance/") + std::string(csi::split_name(split))),
                                 cfg.balance_tolerance);
    }
    out.norm = compute_norm(out.splits.at(csi::Split::train));
    return out;
}

inline nlohmann::json norm_to_json(const NormStats& n) { return {{"mean", n.mean}, {"std", n.stddev}}; }

inline NormStats norm_from_json(const nlohmann::json& j) {
    NormStats n;
    n.mean = j.at("mean").get<std::vector<double>>();
    n.stddev = j.at("std").get<std::vector<double>>();
    return n;
}

} // namespace sensekit::prep
