#pragma once

// Least-squares trajectory fitting and evaluation metrics.

#include <sensekit/csi_model.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

namespace sensekit::eval {

using csi::Point2;

/// Either y = slope * x + intercept, or the vertical line x = x0.
struct TrajectoryFit {
    std::vector<Point2> points;
    bool vertical = false;
    double slope = 0.0;
    double intercept = 0.0;
    double x0 = 0.0;
    std::vector<double> residuals; ///< y - fitted y, or x - x0 for a vertical fit (cm)

    /// Direction angle of the line in degrees, in [0, 180).
    double angle_deg() const {
        const double a = vertical ? 90.0 : std::atan(slope) * 180.0 / std::numbers::pi;
        return a < 0.0 ? a + 180.0 : a;
    }
};

inline TrajectoryFit fit_trajectory(const std::vector<Point2>& pts) {
    if (pts.size() < 2) throw FitError("trajectory fit needs at least 2 points, got " + std::to_string(pts.size()));
    const double n = static_cast<double>(pts.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : pts) {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& p : pts) {
        sxx += (p.x - mx) * (p.x - mx);
        syy += (p.y - my) * (p.y - my);
        sxy += (p.x - mx) * (p.y - my);
    }
    if (sxx == 0.0 && syy == 0.0) throw FitError("trajectory fit: all points are identical");
    TrajectoryFit f;
    f.points = pts;
    if (sxx < 1e-6 * syy) {
        f.vertical = true;
        f.x0 = mx;
        for (const auto& p : pts) f.residuals.push_back(p.x - mx);
        return f;
    }
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    for (const auto& p : pts) f.residuals.push_back(p.y - (f.slope * p.x + f.intercept));
    return f;
}

/// Smallest angle between two undirected line directions, degrees.
inline double angle_between_deg(double a, double b) {
    double d = std::fmod(std::abs(a - b), 180.0);
    return std::min(d, 180.0 - d);
}

struct CoordinateError {
    double rmse_x = 0.0;
    double rmse_y = 0.0;
    double mae_x = 0.0;
    double mae_y = 0.0;
};

inline CoordinateError coordinate_mse(const std::vector<Point2>& pred, const std::vector<Point2>& truth) {
    if (pred.size() != truth.size()) {
        throw DataError("coordinate_mse: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(truth.size()) + " targets");
    }
    CoordinateError e;
    if (pred.empty()) return e;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dx = pred[i].x - truth[i].x, dy = pred[i].y - truth[i].y;
        e.rmse_x += dx * dx;
        e.rmse_y += dy * dy;
        e.mae_x += std::abs(dx);
        e.mae_y += std::abs(dy);
    }
    const double n = static_cast<double>(pred.size());
    e.rmse_x = std::sqrt(e.rmse_x / n);
    e.rmse_y = std::sqrt(e.rmse_y / n);
    e.mae_x /= n;
    e.mae_y /= n;
    return e;
}

struct MetricsReport {
    int num_classes = 0;
    std::size_t total = 0;
    double accuracy = 0.0;
    double precision = 0.0; ///< macro average over classes with predictions
    double recall = 0.0;    ///< macro average over classes with support
    std::vector<double> class_precision;
    std::vector<double> class_recall;
    std::vector<double> error_rates; ///< 1 - recall per class; NaN without support
    std::vector<std::size_t> support;
    std::vector<std::vector<std::size_t>> confusion; ///< [true][pred]
};

inline MetricsReport classification_metrics(const std::vector<int>& pred, const std::vector<int>& truth, int K) {
    if (pred.empty()) throw DataError("classification_metrics: no predictions");
    if (pred.size() != truth.size()) throw DataError("classification_metrics: prediction and label counts differ");
    if (K < 1) throw ConfigError("classification_metrics: need at least one class");
    MetricsReport r;
    r.num_classes = K;
    r.total = pred.size();
    r.confusion.assign(static_cast<std::size_t>(K), std::vector<std::size_t>(static_cast<std::size_t>(K), 0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= K || truth[i] < 0 || truth[i] >= K) {
            throw RangeError("classification_metrics: label outside [0, " + std::to_string(K) + ")");
        }
        ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
    }
    std::size_t correct = 0;
    double psum = 0.0, rsum = 0.0;
    int pn = 0, rn = 0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < static_cast<std::size_t>(K); ++j) {
            row += r.confusion[k][j];
            col += r.confusion[j][k];
        }
        const auto tp = r.confusion[k][k];
        correct += tp;
        r.support.push_back(row);
        const double rec = row ? static_cast<double>(tp) / static_cast<double>(row) : nan;
        const double prec = col ? static_cast<double>(tp) / static_cast<double>(col) : nan;
        r.class_recall.push_back(rec);
        r.class_precision.push_back(prec);
        r.error_rates.push_back(row ? 1.0 - rec : nan);
        if (row) {
            rsum += rec;
            ++rn;
        }
        if (col) {
            psum += prec;
            ++pn;
        }
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
    r.precision = pn ? psum / pn : 0.0;
    r.recall = rn ? rsum / rn : 0.0;
    return r;
}

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& r, const std::vector<std::string>& class_names = {}) {
    auto nullable = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j;
    j["total"] = r.total;
    j["accuracy"] = r.accuracy;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    auto per = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < static_cast<std::size_t>(r.num_classes); ++k) {
        nlohmann::ordered_json c;
        c["class"] = k < class_names.size() ? nlohmann::ordered_json(class_names[k]) : nlohmann::ordered_json(k);
        c["support"] = r.support[k];
        c["precision"] = nullable(r.class_precision[k]);
        c["recall"] = nullable(r.class_recall[k]);
        c["error_rate"] = nullable(r.error_rates[k]);
        per.push_back(c);
    }
    j["per_class"] = per;
    j["confusion"] = r.confusion;
    return j;
}

inline nlohmann::ordered_json coordinate_error_to_json(const CoordinateError& e) {
    nlohmann::ordered_json j;
    j["rmse_x_cm"] = e.rmse_x;
    j["rmse_y_cm"] = e.rmse_y;
    j["mae_x_cm"] = e.mae_x;
    j["mae_y_cm"] = e.mae_y;
    return j;
}

// ---------------------------------------------------------------------------
// Plot output

/// CSV of the points and the fitted line coefficients (as a comment header).
inline void write_trajectory_csv(std::ostream& os, const TrajectoryFit& f, const std::vector<Point2>& truth = {}) {
    char b[160];
    if (f.vertical) {
        std::snprintf(b, sizeof b, "# fit vertical x0=%.4f\n", f.x0);
    } else {
        std::snprintf(b, sizeof b, "# fit slope=%.6f intercept=%.4f\n", f.slope, f.intercept);
    }
    os << b << "x,y,residual,true_x,true_y\n";
    for (std::size_t i = 0; i < f.points.size(); ++i) {
        std::snprintf(b, sizeof b, "%.2f,%.2f,%.3f", f.points[i].x, f.points[i].y, f.residuals[i]);
        os << b;
        if (i < truth.size()) {
            std::snprintf(b, sizeof b, ",%.2f,%.2f", truth[i].x, truth[i].y);
            os << b;
        } else {
            os << ",,";
        }
        os << '\n';
    }
}

/// SVG over the sensing area: ground-truth segment, predicted points and the
/// fitted line (dashed), clipped to the area.
inline void write_trajectory_svg(std::ostream& os, const TrajectoryFit& f, Point2 truth_a, Point2 truth_b, const std::string& title) {
    const double W = csi::area_width, H = csi::area_height, m = 30.0, s = 2.0;
    auto X = [&](double x) { return m + s * x; };
    auto Y = [&](double y) { return m + s * (H - y); };
    char b[256];
    std::snprintf(b, sizeof b, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n", 2 * m + s * W,
                  2 * m + s * H);
    os << b;
    std::snprintf(b, sizeof b, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#888\"/>\n", m, m, s * W,
                  s * H);
    os << b;
    os << "<text x=\"" << m << "\" y=\"" << m / 2 + 5 << "\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
    std::snprintf(b, sizeof b, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#2a7\" stroke-width=\"3\"/>\n", X(truth_a.x),
                  Y(truth_a.y), X(truth_b.x), Y(truth_b.y));
    os << b;
    for (const auto& p : f.points) {
        std::snprintf(b, sizeof b, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2.5\" fill=\"#c33\"/>\n", X(p.x), Y(p.y));
        os << b;
    }
    double x1, y1, x2, y2;
    if (f.vertical) {
        x1 = x2 = f.x0;
        y1 = 0.0;
        y2 = H;
    } else {
        x1 = 0.0;
        x2 = W;
        y1 = f.intercept;
        y2 = f.slope * W + f.intercept;
    }
    std::snprintf(b, sizeof b,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#235\" stroke-width=\"2\" stroke-dasharray=\"8,5\"/>\n",
                  X(x1), Y(y1), X(x2), Y(y2));
    os << "<clipPath id=\"area\"><rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << s * W << "\" height=\"" << s * H
       << "\"/></clipPath>\n<g clip-path=\"url(#area)\">" << b << "</g>\n</svg>\n";
}

} // namespace sensekit::eval
