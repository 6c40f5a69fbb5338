#include <sensekit/tasks.hpp>

#include <gtest/gtest.h>

#include <cstdio>
#include <random>
#include <sstream>

using namespace sensekit;
using namespace sensekit::tasks;

namespace {

Prediction dist(std::vector<double> act, std::vector<double> id = {}) {
    Prediction p;
    p.activity = std::move(act);
    p.identity = std::move(id);
    return p;
}

/// Small frames whose first feature encodes the activity and second the user.
std::vector<Frame> synthetic_frames(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<float> noise(0.0f, 0.1f);
    std::vector<Frame> out;
    for (int i = 0; i < n; ++i) {
        Frame f;
        f.steps = 5;
        f.features = 3;
        f.activity = i % csi::num_activities;
        f.user = f.activity == csi::noac_id ? -1 : (i / csi::num_activities) % 3;
        f.coord = {40.0 + 20.0 * (i % 13), 40.0 + 10.0 * (i % 17)};
        f.stream_id = i / 4;
        f.start_index = 80 * (i % 4);
        for (int t = 0; t < f.steps; ++t) {
            f.data.push_back(static_cast<float>(f.activity) + noise(rng));
            f.data.push_back(static_cast<float>(f.user) + noise(rng));
            f.data.push_back(static_cast<float>(f.coord.x / 100.0) + noise(rng));
        }
        out.push_back(std::move(f));
    }
    return out;
}

} // namespace

TEST(MultiTaskLoss, WeightedSum) {
    EXPECT_NEAR(multitask_loss(1.0, 0.5, 0.8, {}), 0.15 * 1.0 + 0.15 * 0.5 + 0.70 * 0.8, 1e-12);
    EXPECT_NEAR(multitask_loss(1.0, 0.5, 0.8, {}), 0.785, 1e-12);
    EXPECT_DOUBLE_EQ(multitask_loss(2.0, 9.0, 9.0, {1.0, 0.0, 0.0}), 2.0);
    for (double l : {0.0, 0.3, 7.5}) EXPECT_NEAR(multitask_loss(l, l, l, {}), l, 1e-12);
}

TEST(MultiTaskLoss, RejectsBadWeightsAndLosses) {
    EXPECT_THROW(multitask_loss(1, 1, 1, {0.5, 0.5, 0.5}), ConfigError);
    EXPECT_THROW(multitask_loss(1, 1, 1, {1.2, -0.2, 0.0}), ConfigError);
    EXPECT_THROW(multitask_loss(std::numeric_limits<double>::quiet_NaN(), 1, 1, {}), NumericError);
}

TEST(TaskModelSpec, LossWeightsAndBigruRule) {
    TaskModelSpec s;
    s.task = TaskKind::track;
    EXPECT_EQ(s.loss_weights().track, 1.0);
    EXPECT_EQ(s.loss_weights().activity, 0.0);
    s.task = TaskKind::activity;
    s.cell = nn::CellType::bigru;
    EXPECT_THROW(s.validate(), ConfigError);
    s.allow_bigru_classification = true;
    EXPECT_NO_THROW(s.validate());
    s.task = TaskKind::combined;
    s.weights = {0.2, 0.2, 0.2};
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_EQ(task_from_name("auth"), TaskKind::auth);
    EXPECT_THROW(task_from_name("walk"), ConfigError);
}

TEST(Coordinates, NormaliseRoundTrip) {
    for (csi::Point2 p : {csi::Point2{0, 0}, csi::Point2{340, 250}, csi::Point2{170, 125}, csi::Point2{40.5, 210.25}}) {
        const auto n = normalise_coord(p);
        const auto back = denormalise_coord(n[0], n[1]);
        EXPECT_NEAR(back.x, p.x, 1e-4);
        EXPECT_NEAR(back.y, p.y, 1e-4);
    }
    const auto c = normalise_coord({170, 125});
    EXPECT_EQ(c[0], 0.0f);
    EXPECT_EQ(c[1], 0.0f);
    const auto corner = normalise_coord({340, 250});
    EXPECT_NEAR(std::hypot(corner[0], corner[1]), 0.5, 1e-6);
}

TEST(FrameSelection, TaskSpecificLabels) {
    const auto frames = synthetic_frames(90, 1);
    for (const auto& f : select_frames(frames, TaskKind::track, 3)) EXPECT_TRUE(csi::is_walk(f.activity));
    const auto auth = select_frames(frames, TaskKind::auth, 2);
    for (const auto& f : auth) {
        EXPECT_NE(f.activity, csi::noac_id);
        EXPECT_LT(f.user, 2);
        EXPECT_GE(f.user, 0);
    }
    EXPECT_EQ(select_frames(frames, TaskKind::activity, 3).size(), frames.size());
    EXPECT_EQ(select_frames(frames, TaskKind::track, 3).size(), 40u);
}

TEST(Ensemble, WeightedSoftVoting) {
    // member A leans to class 1, member B strongly to class 0
    const auto a = dist({0.40, 0.60});
    const auto b = dist({0.90, 0.10});
    const auto out = ensemble_combine({a, b}, {0.62, 0.38});
    EXPECT_NEAR(out.activity[0], 0.62 * 0.40 + 0.38 * 0.90, 1e-12);
    EXPECT_NEAR(out.activity[1], 0.62 * 0.60 + 0.38 * 0.10, 1e-12);
    // the confident member outvotes the heavier but unsure one
    EXPECT_EQ(out.activity_class(), 0);
    EXPECT_EQ(ensemble_combine({a, b}, {0.9, 0.1}).activity_class(), 1);
    double s = 0.0;
    for (double v : out.activity) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Ensemble, ScaleInvariantWeights) {
    const auto a = dist({0.2, 0.5, 0.3}, {0.7, 0.3});
    const auto b = dist({0.6, 0.1, 0.3}, {0.1, 0.9});
    const auto x = ensemble_combine({a, b}, {0.3, 0.7});
    const auto y = ensemble_combine({a, b}, {3.0, 7.0});
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(x.activity[k], y.activity[k], 1e-12);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(x.identity[k], y.identity[k], 1e-12);
}

TEST(Ensemble, SingleMemberIsIdentity) {
    auto a = dist({0.1, 0.2, 0.7}, {0.4, 0.6});
    a.coord = csi::Point2{12.5, 99.0};
    const auto out = ensemble_combine({a}, {2.5});
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(out.activity[k], a.activity[k], 1e-15);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(out.identity[k], a.identity[k], 1e-15);
    ASSERT_TRUE(out.coord.has_value());
    EXPECT_NEAR(out.coord->x, 12.5, 1e-12);
    EXPECT_NEAR(out.coord->y, 99.0, 1e-12);
}

TEST(Ensemble, MixedHeadsAndErrors) {
    auto act_only = dist({0.3, 0.7});
    Prediction track_only;
    track_only.coord = csi::Point2{100, 50};
    Prediction track_two;
    track_two.coord = csi::Point2{200, 150};
    const auto out = ensemble_combine({act_only, track_only, track_two}, {0.5, 0.25, 0.75});
    EXPECT_NEAR(out.activity[1], 0.7, 1e-12);
    EXPECT_TRUE(out.identity.empty());
    EXPECT_NEAR(out.coord->x, 175.0, 1e-12);
    EXPECT_NEAR(out.coord->y, 125.0, 1e-12);

    EXPECT_THROW(ensemble_combine({}, {}), ConfigError);
    EXPECT_THROW(ensemble_predict({}, {}), ConfigError);
    EXPECT_THROW(ensemble_combine({act_only}, {-1.0}), ConfigError);
    EXPECT_THROW(ensemble_combine({act_only}, {0.0}), ConfigError);
    EXPECT_THROW(ensemble_combine({act_only, act_only}, {1.0}), ConfigError);
    EXPECT_THROW(ensemble_combine({act_only, dist({0.2, 0.3, 0.5})}, {1.0, 1.0}), ShapeError);
}

TEST(Thresholds, Authentication) {
    Prediction p;
    p.identity = {0.80, 0.15, 0.05};
    EXPECT_FALSE(authenticate(p, 0.999).has_value());
    p.identity = {0.0003, 0.9995, 0.0002};
    ASSERT_TRUE(authenticate(p, 0.999).has_value());
    EXPECT_EQ(*authenticate(p, 0.999), 1);
    p.identity = {0.001, 0.999, 0.0};
    EXPECT_EQ(authenticate(p, 0.999), 1);  // the margin itself is accepted
    EXPECT_THROW(authenticate(p, 0.0), ConfigError);
    EXPECT_THROW(authenticate(p, 1.5), ConfigError);
    EXPECT_FALSE(authenticate(Prediction{}, 0.5).has_value());
}

TEST(Thresholds, ActivityAbstention) {
    Prediction p;
    p.activity = {0.75, 0.25};
    EXPECT_EQ(classify_activity(p, 0.75), 0);
    p.activity = {0.60, 0.40};
    EXPECT_FALSE(classify_activity(p, 0.75).has_value());
    EXPECT_EQ(classify_activity(p, 0.5), 0);
    EXPECT_THROW(classify_activity(p, -0.1), ConfigError);
}

TEST(Robustness, AcceptanceIsMonotoneInThreshold) {
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Prediction> seen, unseen;
    for (int i = 0; i < 200; ++i) {
        const double c = u(rng);
        (i % 2 ? seen : unseen).push_back(dist({c, 1.0 - c}, {c, 1.0 - c}));
    }
    const auto t = threshold_sweep(0.0, 1.0, 21);
    ASSERT_EQ(t.size(), 21u);
    EXPECT_DOUBLE_EQ(t.front(), 0.0);
    EXPECT_DOUBLE_EQ(t.back(), 1.0);
    const auto rows = robustness_report(seen, {0, 1, 2}, unseen, {3}, t);
    ASSERT_EQ(rows.size(), t.size());
    EXPECT_DOUBLE_EQ(rows.front().seen_identity, 1.0);
    EXPECT_DOUBLE_EQ(rows.front().unseen_activity, 1.0);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_LE(rows[i].seen_identity, rows[i - 1].seen_identity);
        EXPECT_LE(rows[i].unseen_identity, rows[i - 1].unseen_identity);
        EXPECT_LE(rows[i].seen_activity, rows[i - 1].seen_activity);
    }
    // max(c, 1 - c) never reaches 1 for continuous c
    EXPECT_DOUBLE_EQ(rows.back().seen_identity, 0.0);

    EXPECT_THROW(robustness_report(seen, {0, 1}, unseen, {1}, t), DataError);
    EXPECT_THROW(threshold_sweep(0.5, 0.9, 1), ConfigError);
}

TEST(Robustness, HandComputedRates) {
    std::vector<Prediction> seen{dist({}, {0.95, 0.05}), dist({}, {0.5, 0.5}), dist({}, {0.999, 0.001})};
    std::vector<Prediction> unseen{dist({}, {0.6, 0.4})};
    const auto rows = robustness_report(seen, {0}, unseen, {4}, {0.9, 0.999});
    EXPECT_DOUBLE_EQ(rows[0].seen_identity, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(rows[0].unseen_identity, 0.0);
    EXPECT_DOUBLE_EQ(rows[1].seen_identity, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(rows[0].seen_activity, 0.0);  // no activity heads
}

TEST(TaskModel, CombinedModelEmitsAllHeadsAndRoundTrips) {
    const auto train = synthetic_frames(120, 1);
    const auto val = synthetic_frames(30, 2);
    TaskModelSpec spec;
    spec.task = TaskKind::combined;
    spec.hidden = 6;
    spec.layers = 1;
    nn::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 11;
    auto trained = train_task_model(spec, train, val, prep::compute_norm(train), 3, cfg);
    EXPECT_EQ(trained.history.size(), 2u);
    auto& model = trained.model;
    const auto preds = model.predict(val);
    ASSERT_EQ(preds.size(), val.size());
    for (const auto& p : preds) {
        EXPECT_EQ(p.activity.size(), static_cast<std::size_t>(csi::num_activities));
        EXPECT_EQ(p.identity.size(), 3u);
        EXPECT_TRUE(p.coord.has_value());
        double s = 0.0;
        for (double v : p.activity) s += v;
        EXPECT_NEAR(s, 1.0, 1e-5);
    }

    const std::string path = ::testing::TempDir() + "combined.nnck";
    model.save(path);
    auto loaded = TaskModel::load(path);
    EXPECT_EQ(loaded.spec.task, TaskKind::combined);
    EXPECT_EQ(loaded.num_users, 3);
    const auto again = loaded.predict(val);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        EXPECT_EQ(again[i].activity, preds[i].activity);
        EXPECT_EQ(again[i].coord->x, preds[i].coord->x);
    }
    std::remove(path.c_str());

    // a one-member ensemble reproduces the model
    std::vector<EnsembleMember> members{{&model, 0.4}};
    const auto ens = ensemble_predict(members, val);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (std::size_t k = 0; k < preds[i].activity.size(); ++k) EXPECT_NEAR(ens[i].activity[k], preds[i].activity[k], 1e-12);
    }

    auto wrong = val;
    wrong[0].features = 4;
    wrong[0].data.resize(20);
    EXPECT_THROW(model.predict(wrong), CompatibilityError);
}

TEST(TaskModel, SingleTaskHeadsAndErrors) {
    const auto train = synthetic_frames(90, 3);
    TaskModelSpec spec;
    spec.task = TaskKind::track;
    spec.cell = nn::CellType::bigru;
    spec.hidden = 4;
    spec.layers = 1;
    nn::TrainConfig cfg;
    cfg.epochs = 1;
    auto tr = train_task_model(spec, train, {}, prep::compute_norm(train), 3, cfg);
    const auto p = tr.model.predict(train).front();
    EXPECT_TRUE(p.activity.empty());
    EXPECT_TRUE(p.identity.empty());
    EXPECT_TRUE(p.coord.has_value());

    std::vector<Frame> still;
    for (const auto& f : train) {
        if (!csi::is_walk(f.activity)) still.push_back(f);
    }
    EXPECT_THROW(train_task_model(spec, still, {}, prep::compute_norm(still), 3, cfg), DataError);
    spec.task = TaskKind::auth;
    spec.cell = nn::CellType::gru;
    EXPECT_THROW(train_task_model(spec, train, {}, prep::compute_norm(train), 1, cfg), ConfigError);
}

TEST(Records, CsvAndJsonl) {
    std::vector<Frame> frames(2);
    frames[0].stream_id = 3;
    frames[0].start_index = 40;
    frames[1].stream_id = 3;
    frames[1].start_index = 120;
    Prediction a = dist({0.9, 0.1, 0, 0, 0, 0, 0, 0, 0}, {0.9995, 0.0005});
    a.coord = csi::Point2{100.123, 50.0};
    Prediction b = dist({0.5, 0.5, 0, 0, 0, 0, 0, 0, 0}, {0.6, 0.4});
    const auto recs = make_records({a, b}, frames, 100.0, 0.999, 0.75);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_DOUBLE_EQ(recs[1].timestamp, 1.2);

    std::ostringstream csv;
    write_records_csv(csv, recs);
    EXPECT_EQ(csv.str(),
              "frame_id,stream_id,timestamp,activity,activity_confidence,user,user_confidence,x,y\n"
              "0,3,0.400,sit,0.900000,0,0.999500,100.12,50.00\n"
              "1,3,1.200,ABSTAIN,0.500000,REJECTED,0.600000,,\n");

    std::ostringstream jl;
    write_records_jsonl(jl, recs);
    std::istringstream in(jl.str());
    std::string line;
    std::getline(in, line);
    const auto j0 = nlohmann::json::parse(line);
    EXPECT_EQ(j0["activity"], "sit");
    EXPECT_EQ(j0["user"], 0);
    EXPECT_DOUBLE_EQ(j0["x"].get<double>(), 100.12);
    std::getline(in, line);
    const auto j1 = nlohmann::json::parse(line);
    EXPECT_EQ(j1["user"], "REJECTED");
    EXPECT_TRUE(j1["x"].is_null());

    EXPECT_THROW(make_records({a}, frames, 100.0, 0.999, 0.75), ShapeError);
}
