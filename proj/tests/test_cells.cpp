#include <sensekit/nn/layers.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace sensekit;
using namespace sensekit::nn;
using M = Mat<double>;

namespace {

M scalar(double v) { return M::Constant(1, 1, v); }
M Z(int r, int c) { return M::Zero(r, c); }
M O(int r, int c) { return M::Ones(r, c); }

M random_mat(int r, int c, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    M m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = d(rng);
    return m;
}

double sig(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Naive element-by-element GRU step used as the oracle.
std::vector<double> naive_gru(const GruParams<double>& p, const std::vector<double>& x, const std::vector<double>& h) {
    const int H = p.hidden_size(), I = p.input_size();
    std::vector<double> z(H), r(H), out(H);
    for (int i = 0; i < H; ++i) {
        double az = p.use_bias ? p.b_z(i, 0) : 0.0, ar = p.use_bias ? p.b_r(i, 0) : 0.0;
        for (int k = 0; k < I; ++k) {
            az += p.W_z(i, k) * x[k];
            ar += p.W_r(i, k) * x[k];
        }
        for (int k = 0; k < H; ++k) {
            az += p.U_z(i, k) * h[k];
            ar += p.U_r(i, k) * h[k];
        }
        z[i] = sig(az);
        r[i] = sig(ar);
    }
    for (int i = 0; i < H; ++i) {
        double a = p.use_bias ? p.b_h(i, 0) : 0.0;
        for (int k = 0; k < I; ++k) a += p.W(i, k) * x[k];
        for (int k = 0; k < H; ++k) a += p.U(i, k) * r[k] * h[k];
        out[i] = (1.0 - z[i]) * h[i] + z[i] * std::tanh(a);
    }
    return out;
}

GruParams<double> random_gru(int in, int hidden, Rng& rng, bool bias = true) {
    auto p = GruParams<double>::zeros(in, hidden, bias);
    p.visit([&](const char*, M& m) { m = random_mat(static_cast<int>(m.rows()), static_cast<int>(m.cols()), rng, 0.7); });
    return p;
}

} // namespace

TEST(GruStep, ZeroWeightsGiveZeroState) {
    auto p = GruParams<double>::zeros(3, 4);
    const M h = gru_step(p, Z(3, 1), Z(4, 1));
    EXPECT_TRUE(h.isZero(0.0));
    const auto s = gru_step_full(p, Z(3, 1), Z(4, 1));
    EXPECT_DOUBLE_EQ(s.z(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(s.r(0, 0), 0.5);
}

TEST(GruStep, ScalarHandEvaluation) {
    auto p = GruParams<double>::zeros(1, 1);
    p.visit([](const char*, M& m) { m.setOnes(); });
    p.b_z.setZero();
    p.b_r.setZero();
    p.b_h.setZero();
    const double h = gru_step(p, scalar(1.0), scalar(0.0))(0, 0);
    EXPECT_NEAR(h, 0.55677, 5e-6);
    EXPECT_NEAR(h, sig(1.0) * std::tanh(1.0), 1e-15);
}

TEST(GruStep, ClosedUpdateGateKeepsPreviousState) {
    Rng rng(3);
    auto p = random_gru(2, 3, rng);
    p.b_z.setConstant(-60.0);
    const M hp = random_mat(3, 1, rng);
    const M h = gru_step(p, random_mat(2, 1, rng), hp);
    EXPECT_LT((h - hp).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GruStep, MatchesNaiveOracle) {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const int in = 1 + trial % 4, hid = 1 + (trial / 4) % 5;
        const auto p = random_gru(in, hid, rng, trial % 3 != 0);
        const M x = random_mat(in, 1, rng), h = random_mat(hid, 1, rng, 0.5);
        const M got = gru_step(p, x, h);
        const auto want = naive_gru(p, std::vector<double>(x.data(), x.data() + in), std::vector<double>(h.data(), h.data() + hid));
        for (int i = 0; i < hid; ++i) EXPECT_NEAR(got(i, 0), want[static_cast<std::size_t>(i)], 1e-12);
    }
}

TEST(GruStep, ShapeMismatchThrows) {
    auto p = GruParams<double>::zeros(3, 4);
    EXPECT_THROW(gru_step(p, Z(2, 1), Z(4, 1)), ShapeError);
    EXPECT_THROW(gru_step(p, Z(3, 1), Z(5, 1)), ShapeError);
    p.U_z = Z(3, 3);
    EXPECT_THROW(gru_step(p, Z(3, 1), Z(4, 1)), ShapeError);
}

TEST(RnnStep, Examples) {
    auto p = RnnParams<double>::zeros(2, 3);
    EXPECT_TRUE(rnn_step(p, O(2, 1), O(3, 1)).isZero(0.0));

    auto id = RnnParams<double>::zeros(2, 3, false);
    id.activation = Activation::identity;
    id.W_hh = M::Identity(3, 3);
    const M hp = (M(3, 1) << 0.3, -1.2, 2.0).finished();
    EXPECT_EQ(rnn_step(id, O(2, 1), hp), hp);

    auto s = RnnParams<double>::zeros(1, 1, false);
    s.W_hh = scalar(0.5);
    s.W_xh = scalar(0.5);
    EXPECT_NEAR(rnn_step(s, scalar(1.0), scalar(1.0))(0, 0), 0.76159, 5e-6);
    EXPECT_THROW(rnn_step(s, Z(2, 1), scalar(0.0)), ShapeError);
}

TEST(LstmStep, ZeroWeightsAndForgetBias) {
    auto p = LstmParams<double>::zeros(2, 2);
    LstmState<double> s{Z(2, 1), Z(2, 1)};
    const auto n = lstm_step(p, O(2, 1), s);
    EXPECT_TRUE(n.h.isZero(0.0));
    Rng rng(1);
    p.init(rng);
    EXPECT_TRUE(p.b_f.isOnes());
}

TEST(RunSequence, SingleStepAndZeroInputs) {
    Rng rng(5);
    const auto p = random_gru(3, 2, rng);
    const M x = random_mat(1, 3, rng);
    EXPECT_EQ(run_sequence(p, x), M(gru_step(p, M(x.transpose()), Z(2, 1)).transpose()));
    const auto z = GruParams<double>::zeros(3, 2);
    EXPECT_TRUE(run_sequence(z, Z(6, 3)).isZero(0.0));
    EXPECT_THROW(run_sequence(p, Z(0, 3)), ShapeError);
}

TEST(RunSequence, MatchesStepByStepOracle) {
    Rng rng(8);
    const auto p = random_gru(4, 3, rng);
    const M x = random_mat(7, 4, rng);
    const M got = run_sequence(p, x);
    std::vector<double> h(3, 0.0);
    for (int t = 0; t < 7; ++t) {
        h = naive_gru(p, {x(t, 0), x(t, 1), x(t, 2), x(t, 3)}, h);
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(got(t, i), h[static_cast<std::size_t>(i)], 1e-12);
    }
}

TEST(BiGru, PalindromeSymmetry) {
    Rng rng(13);
    const auto p = random_gru(2, 3, rng);
    M x = random_mat(5, 2, rng);
    for (int t = 0; t < 5; ++t) x.row(4 - t) = x.row(t);
    const M y = bigru_sequence(p, p, x);
    for (int t = 0; t < 5; ++t) EXPECT_LT((y.row(t).head(3) - y.row(4 - t).tail(3)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(BiGru, SingleStepAndMismatch) {
    Rng rng(17);
    const auto f = random_gru(2, 3, rng), b = random_gru(2, 3, rng);
    const M x = random_mat(1, 2, rng);
    const M y = bigru_sequence(f, b, x);
    EXPECT_EQ(M(y.row(0).head(3).transpose()), gru_step(f, M(x.transpose()), Z(3, 1)));
    EXPECT_EQ(M(y.row(0).tail(3).transpose()), gru_step(b, M(x.transpose()), Z(3, 1)));
    EXPECT_THROW(bigru_sequence(f, random_gru(2, 4, rng), x), ShapeError);
}

TEST(BiGru, DecomposesIntoForwardAndReversedBackward) {
    Rng rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        const auto f = random_gru(3, 4, rng), b = random_gru(3, 4, rng);
        const M x = random_mat(2 + trial % 6, 3, rng);
        const M y = bigru_sequence(f, b, x);
        const M yf = run_sequence(f, x);
        const M yb = run_sequence(b, M(x.colwise().reverse())).colwise().reverse();
        EXPECT_LT((y.leftCols(4) - yf).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((y.rightCols(4) - yb).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Properties, GruStateStaysInUnitInterval) {
    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        auto p = random_gru(3, 5, rng);
        p.visit([](const char*, M& m) { m *= 4.0; });
        const M y = run_sequence(p, random_mat(40, 3, rng, 5.0));
        EXPECT_LE(y.cwiseAbs().maxCoeff(), 1.0);
    }
}

TEST(Properties, SoftmaxIsProbabilityVector) {
    Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const M p = softmax(random_mat(9, 4, rng, 30.0));
        EXPECT_GE(p.minCoeff(), 0.0);
        for (int c = 0; c < 4; ++c) EXPECT_NEAR(p.col(c).sum(), 1.0, 1e-9);
    }
}

TEST(Properties, BatchedLayerMatchesOneAtATime) {
    Rng rng(31);
    for (CellType cell : {CellType::rnn, CellType::lstm, CellType::gru, CellType::bigru}) {
        auto layer = make_layer<double>(cell, 3, 4, true);
        layer->init(rng);
        const int B = 5, T = 6;
        Sequence<double> x(3, T, B);
        x.data = random_mat(3, T * B, rng);
        const auto batched = layer->forward(x);
        for (int b = 0; b < B; ++b) {
            const auto single = layer->forward(Sequence<double>::from_rows(x.rows(b)));
            const M diff = single.rows(0) - batched.rows(b);
            EXPECT_LE(diff.cwiseAbs().maxCoeff(), 1e-6 * (1.0 + single.data.cwiseAbs().maxCoeff())) << cell_name(cell);
        }
    }
}

TEST(Layers, GruLayerMatchesRunSequence) {
    Rng rng(37);
    GruLayer<double> layer(3, 4, true);
    layer.init(rng);
    const M x = random_mat(5, 3, rng);
    const auto y = layer.forward(Sequence<double>::from_rows(x));
    EXPECT_LT((y.rows(0) - run_sequence(layer.params(), x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Layers, CellNames) {
    EXPECT_EQ(cell_from_name("bigru"), CellType::bigru);
    EXPECT_EQ(cell_name(CellType::lstm), "lstm");
    EXPECT_THROW(cell_from_name("transformer"), ConfigError);
}
