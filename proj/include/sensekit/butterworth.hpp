#pragma once

// Digital Butterworth low-pass: analog prototype, bilinear transform with
// cutoff prewarping, realised as cascaded second-order sections.

#include <sensekit/error.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace sensekit::dsp {

/// b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;

    std::complex<double> response(double omega) const {
        const auto z1 = std::polar(1.0, -omega);
        const auto z2 = z1 * z1;
        return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
    }
};

class SosFilter {
public:
    SosFilter() = default;
    explicit SosFilter(std::vector<Biquad> sections) : sections_(std::move(sections)) {}

    const std::vector<Biquad>& sections() const { return sections_; }

    /// Complex response at `freq` Hz for sampling rate `fs`.
    std::complex<double> response(double freq, double fs) const {
        const double omega = 2.0 * std::numbers::pi * freq / fs;
        std::complex<double> h = 1.0;
        for (const auto& s : sections_) h *= s.response(omega);
        return h;
    }

    double magnitude(double freq, double fs) const { return std::abs(response(freq, fs)); }

    /// Single forward pass (transposed direct form II). With `steady_start`
    /// the section states start at the steady state for a constant input
    /// equal to x[0], so a constant signal passes through unchanged.
    std::vector<double> apply(std::span<const double> x, bool steady_start = false) const {
        std::vector<double> y(x.begin(), x.end());
        if (y.empty()) return y;
        double level = y.front();
        for (const auto& s : sections_) {
            double s1 = 0.0, s2 = 0.0;
            if (steady_start) {
                const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
                const double out = gain * level;
                s2 = s.b2 * level - s.a2 * out;
                s1 = s.b1 * level - s.a1 * out + s2;
                level = out;
            }
            for (auto& v : y) {
                const double in = v;
                const double out = s.b0 * in + s1;
                s1 = s.b1 * in - s.a1 * out + s2;
                s2 = s.b2 * in - s.a2 * out;
                v = out;
            }
        }
        return y;
    }

    /// Zero-phase forward-backward filtering with odd-extension padding at
    /// both ends. Output length equals input length; the operation is
    /// linear in x.
    std::vector<double> filtfilt(std::span<const double> x) const {
        const std::size_t n = x.size();
        if (n == 0) return {};
        std::size_t pad = 3 * (2 * sections_.size() + 1);
        pad = std::min(pad, n - 1);
        std::vector<double> ext;
        ext.reserve(n + 2 * pad);
        for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
        ext.insert(ext.end(), x.begin(), x.end());
        for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

        auto fwd = apply(ext, true);
        std::reverse(fwd.begin(), fwd.end());
        auto bwd = apply(fwd, true);
        std::reverse(bwd.begin(), bwd.end());
        return {bwd.begin() + static_cast<std::ptrdiff_t>(pad), bwd.begin() + static_cast<std::ptrdiff_t>(pad + n)};
    }

private:
    std::vector<Biquad> sections_;
};

/// Magnitude of the analog Butterworth prototype, 1/sqrt(1 + (w/wc)^(2n)).
inline double analog_butterworth_magnitude(double omega, double omega_c, int order) {
    return 1.0 / std::sqrt(1.0 + std::pow(omega / omega_c, 2.0 * order));
}

/// Prewarped analog frequency (rad/s) matching digital frequency `freq` Hz.
inline double prewarp(double freq, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * freq / fs); }

/// Designs an `order`-th order low-pass with cutoff `cutoff` Hz. Each section
/// is normalised to unity DC gain.
inline SosFilter design_butterworth_lowpass(int order, double cutoff, double fs) {
    if (order < 1) throw ConfigError("filter order must be >= 1");
    if (!(fs > 0.0)) throw ConfigError("sampling rate must be positive");
    if (!(cutoff > 0.0 && cutoff < fs / 2.0)) {
        throw ConfigError("cutoff " + std::to_string(cutoff) + " Hz must lie in (0, fs/2 = " + std::to_string(fs / 2.0) + ") Hz");
    }
    using std::numbers::pi;
    const double wc = prewarp(cutoff, fs);
    const double k = 2.0 * fs;
    std::vector<Biquad> sections;
    for (int i = 0; i < order / 2; ++i) {
        const std::complex<double> p = wc * std::polar(1.0, pi * (2.0 * i + order + 1) / (2.0 * order));
        const std::complex<double> z = (k + p) / (k - p);
        Biquad s;
        s.a1 = -2.0 * z.real();
        s.a2 = std::norm(z);
        const double g = (1.0 + s.a1 + s.a2) / 4.0;
        s.b0 = g;
        s.b1 = 2.0 * g;
        s.b2 = g;
        sections.push_back(s);
    }
    if (order % 2 == 1) {
        const double z = (k - wc) / (k + wc);
        Biquad s;
        s.a1 = -z;
        const double g = (1.0 - z) / 2.0;
        s.b0 = g;
        s.b1 = g;
        sections.push_back(s);
    }
    return SosFilter(std::move(sections));
}

/// Zero-phase Butterworth low-pass of a real sequence.
inline std::vector<double> butterworth_lowpass(std::span<const double> signal, double fs, double cutoff, int order) {
    return design_butterworth_lowpass(order, cutoff, fs).filtfilt(signal);
}

} // namespace sensekit::dsp
