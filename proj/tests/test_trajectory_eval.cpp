#include <sensekit/rng.hpp>
#include <sensekit/trajectory_eval.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace sensekit;
using namespace sensekit::eval;

TEST(FitTrajectory, ExactLine) {
    const auto f = fit_trajectory({{0, 1}, {1, 3}, {2, 5}});
    EXPECT_FALSE(f.vertical);
    EXPECT_NEAR(f.slope, 2.0, 1e-12);
    EXPECT_NEAR(f.intercept, 1.0, 1e-12);
    for (double r : f.residuals) EXPECT_NEAR(r, 0.0, 1e-12);
    EXPECT_NEAR(f.angle_deg(), std::atan(2.0) * 180.0 / std::numbers::pi, 1e-12);
}

TEST(FitTrajectory, HorizontalAndVerticalPaths) {
    const auto h = fit_trajectory({{40, 125}, {100, 125}, {300, 125}});
    EXPECT_NEAR(h.angle_deg(), 0.0, 1e-12);
    const auto v = fit_trajectory({{170, 40}, {170, 100}, {170, 210}});
    EXPECT_TRUE(v.vertical);
    EXPECT_DOUBLE_EQ(v.x0, 170.0);
    EXPECT_DOUBLE_EQ(v.angle_deg(), 90.0);
    const auto neg = fit_trajectory({{0, 0}, {1, -1}});
    EXPECT_NEAR(neg.angle_deg(), 135.0, 1e-12);
}

TEST(FitTrajectory, Errors) {
    EXPECT_THROW(fit_trajectory({}), FitError);
    EXPECT_THROW(fit_trajectory({{1, 1}}), FitError);
    EXPECT_THROW(fit_trajectory({{2, 3}, {2, 3}, {2, 3}}), FitError);
}

TEST(FitTrajectory, ResidualsOrthogonalToRegressors) {
    Rng rng(4);
    std::normal_distribution<double> n(0.0, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<csi::Point2> pts;
        for (int i = 0; i < 30; ++i) pts.push_back({10.0 * i, 0.3 * 10.0 * i + 40.0 + n(rng)});
        const auto f = fit_trajectory(pts);
        double sr = 0.0, sxr = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            sr += f.residuals[i];
            sxr += pts[i].x * f.residuals[i];
        }
        EXPECT_NEAR(sr, 0.0, 1e-8);
        EXPECT_NEAR(sxr, 0.0, 1e-6);
    }
}

TEST(AngleBetween, UndirectedLines) {
    EXPECT_DOUBLE_EQ(angle_between_deg(178.0, 1.0), 3.0);
    EXPECT_DOUBLE_EQ(angle_between_deg(90.0, 0.0), 90.0);
    EXPECT_DOUBLE_EQ(angle_between_deg(45.0, 225.0), 0.0);
}

TEST(CoordinateError, HandComputed) {
    const auto e = coordinate_mse({{1, 2}, {3, 4}}, {{1, 0}, {0, 4}});
    EXPECT_DOUBLE_EQ(e.rmse_x, std::sqrt(9.0 / 2.0));
    EXPECT_DOUBLE_EQ(e.rmse_y, std::sqrt(4.0 / 2.0));
    EXPECT_DOUBLE_EQ(e.mae_x, 1.5);
    EXPECT_DOUBLE_EQ(e.mae_y, 1.0);
    EXPECT_THROW(coordinate_mse({{0, 0}}, {}), DataError);
    EXPECT_EQ(coordinate_mse({}, {}).rmse_x, 0.0);
}

TEST(ClassificationMetrics, ConfusionAndMacroAverages) {
    const std::vector<int> truth{0, 0, 1, 1, 1, 2};
    const std::vector<int> pred{0, 1, 1, 1, 0, 2};
    const auto m = classification_metrics(pred, truth, 4);
    EXPECT_DOUBLE_EQ(m.accuracy, 4.0 / 6.0);
    EXPECT_EQ(m.confusion[1][0], 1u);
    EXPECT_EQ(m.confusion[0][1], 1u);
    EXPECT_DOUBLE_EQ(m.class_recall[1], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.class_precision[1], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.error_rates[0], 0.5);
    EXPECT_TRUE(std::isnan(m.error_rates[3]));
    EXPECT_TRUE(std::isnan(m.class_precision[3]));
    EXPECT_DOUBLE_EQ(m.recall, (0.5 + 2.0 / 3.0 + 1.0) / 3.0);
    EXPECT_DOUBLE_EQ(m.precision, (0.5 + 2.0 / 3.0 + 1.0) / 3.0);
    std::size_t sum = 0;
    for (const auto& row : m.confusion)
        for (auto v : row) sum += v;
    EXPECT_EQ(sum, truth.size());

    const auto j = metrics_to_json(m, {"a", "b", "c", "d"});
    EXPECT_TRUE(j["per_class"][3]["recall"].is_null());
    EXPECT_EQ(j["per_class"][1]["class"], "b");
}

TEST(ClassificationMetrics, Errors) {
    EXPECT_THROW(classification_metrics({}, {}, 2), DataError);
    EXPECT_THROW(classification_metrics({0}, {0, 1}, 2), DataError);
    EXPECT_THROW(classification_metrics({2}, {0}, 2), RangeError);
    EXPECT_THROW(classification_metrics({0}, {0}, 0), ConfigError);
}

TEST(Plot, CsvAndSvg) {
    const auto f = fit_trajectory({{40, 40}, {170, 41}, {300, 42}});
    std::ostringstream csv;
    write_trajectory_csv(csv, f, {{40, 40}, {170, 40}, {300, 40}});
    EXPECT_EQ(csv.str().rfind("# fit slope=", 0), 0u);
    EXPECT_NE(csv.str().find("x,y,residual,true_x,true_y\n40.00,40.00,"), std::string::npos);
    std::ostringstream svg;
    write_trajectory_svg(svg, f, {40, 40}, {300, 40}, "path 1");
    EXPECT_EQ(svg.str().rfind("<svg", 0), 0u);
    EXPECT_NE(svg.str().find("stroke-dasharray"), std::string::npos);
    EXPECT_NE(svg.str().find("</svg>"), std::string::npos);
}
