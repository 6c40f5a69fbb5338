#include <sensekit/nn/checkpoint.hpp>
#include <sensekit/nn/train.hpp>

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace sensekit;
using namespace sensekit::nn;

namespace {

/// Two classes whose sequences drift up or down; feature 1 is noise.
TrainData toy(int n, std::uint64_t seed, bool with_track = false) {
    TrainData d;
    d.steps = 6;
    d.features = 2;
    Rng rng(seed);
    std::normal_distribution<float> noise(0.0f, 0.3f);
    std::vector<float> s(12);
    for (int i = 0; i < n; ++i) {
        const int c = i % 2;
        for (int t = 0; t < 6; ++t) {
            s[static_cast<std::size_t>(2 * t)] = (c ? 1.0f : -1.0f) * 0.2f * static_cast<float>(t) + noise(rng);
            s[static_cast<std::size_t>(2 * t + 1)] = noise(rng);
        }
        const float y = c ? 0.25f : -0.25f;
        d.push_back(s.data(), c, -1, {y, -y}, with_track);
    }
    return d;
}

ModelSpec toy_spec(CellType cell = CellType::gru, bool track = false) {
    ModelSpec s;
    s.cell = cell;
    s.input = 2;
    s.hidden = 8;
    s.layers = 1;
    s.activity_classes = 2;
    s.track = track;
    s.seed = 3;
    return s;
}

std::vector<float> flatten(Network<float>& net) {
    std::vector<float> out;
    net.visit([&](const std::string&, Mat<float>& v, Mat<float>&) { out.insert(out.end(), v.data(), v.data() + v.size()); });
    return out;
}

} // namespace

TEST(Training, ZeroLearningRateLeavesParametersUnchanged) {
    Network<float> net(toy_spec());
    const auto before = flatten(net);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.adam.lr = 0.0;
    train(net, toy(64, 1), nullptr, cfg);
    EXPECT_EQ(flatten(net), before);
}

TEST(Training, SeparableToyReachesNearPerfectAccuracy) {
    for (CellType cell : {CellType::rnn, CellType::lstm, CellType::gru, CellType::bigru}) {
        Network<float> net(toy_spec(cell));
        TrainConfig cfg;
        cfg.epochs = 25;
        cfg.batch = 16;
        cfg.adam.lr = 1e-2;
        const auto val = toy(200, 2);
        const auto hist = train(net, toy(400, 1), &val, cfg);
        ASSERT_EQ(hist.size(), 25u);
        EXPECT_LT(hist.back().train.total, hist.front().train.total);
        EXPECT_GE(evaluate(net, toy(400, 3), cfg.weights).activity_accuracy, 0.99) << cell_name(cell);
    }
}

TEST(Training, TrackHeadLearnsRegression) {
    Network<float> net(toy_spec(CellType::gru, true));
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.adam.lr = 1e-2;
    cfg.weights = {0.0, 0.0, 1.0};
    const auto before = evaluate(net, toy(200, 3, true), cfg.weights).track_rmse;
    train(net, toy(400, 1, true), nullptr, cfg);
    const auto after = evaluate(net, toy(200, 3, true), cfg.weights).track_rmse;
    EXPECT_LT(after, 0.05);
    EXPECT_LT(after, before);
}

TEST(Training, DeterministicUnderFixedSeed) {
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 42;
    Network<float> a(toy_spec()), b(toy_spec());
    const auto ha = train(a, toy(100, 1), nullptr, cfg);
    const auto hb = train(b, toy(100, 1), nullptr, cfg);
    EXPECT_EQ(flatten(a), flatten(b));
    for (std::size_t i = 0; i < ha.size(); ++i) EXPECT_EQ(ha[i].train.total, hb[i].train.total);
    cfg.seed = 43;
    Network<float> c(toy_spec());
    train(c, toy(100, 1), nullptr, cfg);
    EXPECT_NE(flatten(a), flatten(c));
}

TEST(Training, DivergenceIsNumericError) {
    auto data = toy(32, 1);
    data.x[5] = std::numeric_limits<float>::quiet_NaN();
    Network<float> net(toy_spec());
    TrainConfig cfg;
    cfg.epochs = 2;
    try {
        train(net, data, nullptr, cfg);
        FAIL() << "expected divergence";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("diverged at epoch 1"), std::string::npos);
    }

    Network<float> wild(toy_spec(CellType::gru, true));
    cfg.adam.lr = 1e20;
    cfg.adam.clip_norm = 0.0;
    cfg.epochs = 5;
    EXPECT_THROW(train(wild, toy(64, 1, true), nullptr, cfg), NumericError);
}

TEST(Training, ConfigAndDataErrors) {
    Network<float> net(toy_spec());
    TrainConfig cfg;
    cfg.batch = 0;
    EXPECT_THROW(train(net, toy(8, 1), nullptr, cfg), ConfigError);
    cfg = {};
    cfg.epochs = -1;
    EXPECT_THROW(train(net, toy(8, 1), nullptr, cfg), ConfigError);
    cfg = {};
    cfg.adam.lr = -1.0;
    EXPECT_THROW(train(net, toy(8, 1), nullptr, cfg), ConfigError);
    cfg = {};
    EXPECT_THROW(train(net, TrainData{6, 2}, nullptr, cfg), DataError);
}

TEST(Training, PatienceRestoresBestValidationModel) {
    Network<float> net(toy_spec());
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.patience = 3;
    cfg.adam.lr = 5e-2;
    const auto val = toy(20, 9);
    const auto hist = train(net, toy(40, 1), &val, cfg);
    double best = 1e30;
    for (const auto& r : hist) best = std::min(best, r.val.loss.total);
    EXPECT_NEAR(evaluate(net, val, cfg.weights).loss.total, best, 1e-5);
    if (hist.size() < 40u) {
        // stopped: the last `patience` epochs did not improve on the best
        for (std::size_t i = hist.size() - 3; i < hist.size(); ++i) EXPECT_GE(hist[i].val.loss.total, best);
    }
}

TEST(Adam, FirstStepMovesEachWeightByLearningRate) {
    ModelSpec s = toy_spec();
    Network<double> net(s);
    std::vector<Mat<double>> before, grads;
    net.zero_grad();
    Sequence<double> x(2, 3, 2);
    x.data.setConstant(0.5);
    Targets<double> y;
    y.activity = {0, 1};
    y.identity = {-1, -1};
    y.track = Mat<double>::Zero(2, 2);
    y.track_mask = {0, 0};
    net.loss(net.forward(x), y, {}, true);
    net.visit([&](const std::string&, Mat<double>& v, Mat<double>& g) {
        before.push_back(v);
        grads.push_back(g);
    });
    AdamConfig cfg;
    cfg.lr = 0.01;
    cfg.clip_norm = 0.0;
    Adam<double> opt(cfg);
    opt.step(net);
    std::size_t k = 0;
    net.visit([&](const std::string&, Mat<double>& v, Mat<double>&) {
        const Mat<double> d = v - before[k];
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            const double g = grads[k].data()[i];
            const double want = std::abs(g) > 1e-6 ? -0.01 * g / (std::abs(g) + 1e-8) : d.data()[i];
            EXPECT_NEAR(d.data()[i], want, 1e-6);
        }
        ++k;
    });
}

TEST(Adam, ClippingBoundsTheGlobalNorm) {
    Network<double> a(toy_spec()), b(toy_spec());
    for (auto* net : {&a, &b}) {
        net->zero_grad();
        net->visit([](const std::string&, Mat<double>&, Mat<double>& g) { g.setConstant(1000.0); });
    }
    AdamConfig clipped;
    clipped.clip_norm = 5.0;
    AdamConfig raw = clipped;
    raw.clip_norm = 0.0;
    Adam<double>(clipped).step(a);
    Adam<double>(raw).step(b);
    // Adam's first step is scale-invariant, so clipping a uniform gradient leaves the update unchanged.
    const auto fa = [&] {
        std::vector<double> v;
        a.visit([&](const std::string&, Mat<double>& m, Mat<double>&) { v.insert(v.end(), m.data(), m.data() + m.size()); });
        return v;
    }();
    std::vector<double> fb;
    b.visit([&](const std::string&, Mat<double>& m, Mat<double>&) { fb.insert(fb.end(), m.data(), m.data() + m.size()); });
    for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(fa[i], fb[i], 1e-9);

    Network<double> c(toy_spec());
    c.zero_grad();
    c.visit([](const std::string&, Mat<double>&, Mat<double>& g) { g(0, 0) = std::numeric_limits<double>::infinity(); });
    EXPECT_THROW(Adam<double>().step(c), NumericError);
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
    for (CellType cell : {CellType::rnn, CellType::lstm, CellType::gru, CellType::bigru}) {
        ModelSpec s = toy_spec(cell, true);
        s.identity_classes = 3;
        s.layers = 2;
        Network<float> net(s);
        std::stringstream ss;
        write_checkpoint(ss, net, {{"note", "x"}});
        auto ck = read_checkpoint<float>(ss);
        EXPECT_EQ(flatten(ck.network), flatten(net));
        EXPECT_EQ(ck.extra["note"], "x");
        const auto data = toy(4, 1);
        std::vector<std::size_t> idx{0, 1, 2, 3};
        const auto o1 = net.forward(make_inputs<float>(data, idx));
        const auto o2 = ck.network.forward(make_inputs<float>(data, idx));
        EXPECT_EQ(o1.activity, o2.activity);
        EXPECT_EQ(o1.track, o2.track);
    }
}

TEST(Checkpoint, RejectsCorruptFiles) {
    std::stringstream bad("NOPE");
    EXPECT_THROW(read_checkpoint<float>(bad), DataError);

    Network<float> net(toy_spec());
    std::stringstream ss;
    write_checkpoint(ss, net);
    std::string bytes = ss.str();
    const auto pos = bytes.find("\"hidden\":8");
    ASSERT_NE(pos, std::string::npos);
    bytes.replace(pos, 10, "\"hidden\":9");
    std::stringstream tampered(bytes);
    EXPECT_THROW(read_checkpoint<float>(tampered), CompatibilityError);

    std::stringstream cut(ss.str().substr(0, ss.str().size() - 10));
    EXPECT_THROW(read_checkpoint<float>(cut), DataError);
}
