#pragma once

// Recurrent cell parameters and single-step evaluation. Inputs and states are
// column-per-sample matrices, so a column vector is the unbatched case.

#include <sensekit/nn/tensor.hpp>
#include <sensekit/rng.hpp>

#include <cmath>
#include <random>
#include <string>

namespace sensekit::nn {

enum class Activation { tanh, identity };

namespace detail {

template <typename T>
void glorot(Mat<T>& m, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<T>(dist(rng));
    }
}

template <typename T>
void add_bias(Mat<T>& a, const Mat<T>& b, bool enabled) {
    if (enabled) a.colwise() += b.col(0);
}

} // namespace detail

/// h_t = psi(W_hh h_{t-1} + W_xh x_t + b)
template <typename T>
struct RnnParams {
    Mat<T> W_hh, W_xh, b;
    Activation activation = Activation::tanh;
    bool use_bias = true;

    static RnnParams zeros(int input, int hidden, bool bias = true) {
        RnnParams p;
        p.W_hh = Mat<T>::Zero(hidden, hidden);
        p.W_xh = Mat<T>::Zero(hidden, input);
        p.b = Mat<T>::Zero(hidden, 1);
        p.use_bias = bias;
        return p;
    }

    int input_size() const { return static_cast<int>(W_xh.cols()); }
    int hidden_size() const { return static_cast<int>(W_hh.rows()); }

    void validate() const {
        const auto H = W_hh.rows();
        require_shape(W_hh.cols() == H && W_xh.rows() == H && b.rows() == H && b.cols() == 1, "RnnParams: inconsistent shapes");
    }

    template <typename F>
    void visit(F&& f) {
        f("W_hh", W_hh);
        f("W_xh", W_xh);
        if (use_bias) f("b", b);
    }

    void init(Rng& rng) {
        detail::glorot(W_hh, rng);
        detail::glorot(W_xh, rng);
        b.setZero();
    }
};

/// Gated recurrent unit. W_* are [hidden x input], U_* are [hidden x hidden].
template <typename T>
struct GruParams {
    Mat<T> W_z, U_z, W_r, U_r, W, U;
    Mat<T> b_z, b_r, b_h;
    bool use_bias = true;

    static GruParams zeros(int input, int hidden, bool bias = true) {
        GruParams p;
        for (auto* m : {&p.W_z, &p.W_r, &p.W}) *m = Mat<T>::Zero(hidden, input);
        for (auto* m : {&p.U_z, &p.U_r, &p.U}) *m = Mat<T>::Zero(hidden, hidden);
        for (auto* m : {&p.b_z, &p.b_r, &p.b_h}) *m = Mat<T>::Zero(hidden, 1);
        p.use_bias = bias;
        return p;
    }

    int input_size() const { return static_cast<int>(W.cols()); }
    int hidden_size() const { return static_cast<int>(U.rows()); }

    void validate() const {
        const auto H = U.rows(), I = W.cols();
        bool ok = true;
        for (const auto* m : {&W_z, &W_r, &W}) ok = ok && m->rows() == H && m->cols() == I;
        for (const auto* m : {&U_z, &U_r, &U}) ok = ok && m->rows() == H && m->cols() == H;
        for (const auto* m : {&b_z, &b_r, &b_h}) ok = ok && m->rows() == H && m->cols() == 1;
        require_shape(ok, "GruParams: inconsistent shapes");
    }

    template <typename F>
    void visit(F&& f) {
        f("W_z", W_z);
        f("U_z", U_z);
        f("W_r", W_r);
        f("U_r", U_r);
        f("W", W);
        f("U", U);
        if (use_bias) {
            f("b_z", b_z);
            f("b_r", b_r);
            f("b_h", b_h);
        }
    }

    void init(Rng& rng) {
        for (auto* m : {&W_z, &U_z, &W_r, &U_r, &W, &U}) detail::glorot(*m, rng);
        for (auto* m : {&b_z, &b_r, &b_h}) m->setZero();
    }
};

/// Long short-term memory: input (i), forget (f), output (o) gates and
/// candidate (g).
template <typename T>
struct LstmParams {
    Mat<T> W_i, U_i, W_f, U_f, W_o, U_o, W_g, U_g;
    Mat<T> b_i, b_f, b_o, b_g;
    bool use_bias = true;

    static LstmParams zeros(int input, int hidden, bool bias = true) {
        LstmParams p;
        for (auto* m : {&p.W_i, &p.W_f, &p.W_o, &p.W_g}) *m = Mat<T>::Zero(hidden, input);
        for (auto* m : {&p.U_i, &p.U_f, &p.U_o, &p.U_g}) *m = Mat<T>::Zero(hidden, hidden);
        for (auto* m : {&p.b_i, &p.b_f, &p.b_o, &p.b_g}) *m = Mat<T>::Zero(hidden, 1);
        p.use_bias = bias;
        return p;
    }

    int input_size() const { return static_cast<int>(W_i.cols()); }
    int hidden_size() const { return static_cast<int>(U_i.rows()); }

    void validate() const {
        const auto H = U_i.rows(), I = W_i.cols();
        bool ok = true;
        for (const auto* m : {&W_i, &W_f, &W_o, &W_g}) ok = ok && m->rows() == H && m->cols() == I;
        for (const auto* m : {&U_i, &U_f, &U_o, &U_g}) ok = ok && m->rows() == H && m->cols() == H;
        for (const auto* m : {&b_i, &b_f, &b_o, &b_g}) ok = ok && m->rows() == H && m->cols() == 1;
        require_shape(ok, "LstmParams: inconsistent shapes");
    }

    template <typename F>
    void visit(F&& f) {
        f("W_i", W_i);
        f("U_i", U_i);
        f("W_f", W_f);
        f("U_f", U_f);
        f("W_o", W_o);
        f("U_o", U_o);
        f("W_g", W_g);
        f("U_g", U_g);
        if (use_bias) {
            f("b_i", b_i);
            f("b_f", b_f);
            f("b_o", b_o);
            f("b_g", b_g);
        }
    }

    void init(Rng& rng) {
        for (auto* m : {&W_i, &U_i, &W_f, &U_f, &W_o, &U_o, &W_g, &U_g}) detail::glorot(*m, rng);
        for (auto* m : {&b_i, &b_o, &b_g}) m->setZero();
        b_f.setOnes();
    }
};

namespace detail {

template <typename T>
void check_step(int input, int hidden, const Mat<T>& x, const Mat<T>& h_prev, const char* cell) {
    require_shape(x.rows() == input, std::string(cell) + ": input has " + std::to_string(x.rows()) + " rows, expected " +
                                         std::to_string(input));
    require_shape(h_prev.rows() == hidden && h_prev.cols() == x.cols(),
                  std::string(cell) + ": previous state shape does not match");
}

} // namespace detail

template <typename T>
Mat<T> rnn_step(const RnnParams<T>& p, const Mat<T>& x, const Mat<T>& h_prev) {
    p.validate();
    detail::check_step(p.input_size(), p.hidden_size(), x, h_prev, "rnn_step");
    Mat<T> a = p.W_hh * h_prev + p.W_xh * x;
    detail::add_bias(a, p.b, p.use_bias);
    return p.activation == Activation::tanh ? Mat<T>(tanh_of(a)) : a;
}

/// Gate activations of one GRU step, kept for backpropagation.
template <typename T>
struct GruStep {
    Mat<T> z, r, candidate, h;
};

template <typename T>
GruStep<T> gru_step_full(const GruParams<T>& p, const Mat<T>& x, const Mat<T>& h_prev) {
    GruStep<T> s;
    Mat<T> az = p.W_z * x + p.U_z * h_prev;
    Mat<T> ar = p.W_r * x + p.U_r * h_prev;
    detail::add_bias(az, p.b_z, p.use_bias);
    detail::add_bias(ar, p.b_r, p.use_bias);
    s.z = sigmoid(az);
    s.r = sigmoid(ar);
    Mat<T> ah = p.W * x + p.U * s.r.cwiseProduct(h_prev);
    detail::add_bias(ah, p.b_h, p.use_bias);
    s.candidate = tanh_of(ah);
    s.h = (Mat<T>::Ones(s.z.rows(), s.z.cols()) - s.z).cwiseProduct(h_prev) + s.z.cwiseProduct(s.candidate);
    return s;
}

/// z = sig(W_z x + U_z h + b_z), r = sig(W_r x + U_r h + b_r),
/// c = tanh(W x + U (r . h) + b_h), h' = (1 - z) . h + z . c
template <typename T>
Mat<T> gru_step(const GruParams<T>& p, const Mat<T>& x, const Mat<T>& h_prev) {
    p.validate();
    detail::check_step(p.input_size(), p.hidden_size(), x, h_prev, "gru_step");
    return gru_step_full(p, x, h_prev).h;
}

template <typename T>
struct LstmState {
    Mat<T> h, c;
};

template <typename T>
LstmState<T> lstm_step(const LstmParams<T>& p, const Mat<T>& x, const LstmState<T>& prev) {
    p.validate();
    detail::check_step(p.input_size(), p.hidden_size(), x, prev.h, "lstm_step");
    auto gate = [&](const Mat<T>& W, const Mat<T>& U, const Mat<T>& b) {
        Mat<T> a = W * x + U * prev.h;
        detail::add_bias(a, b, p.use_bias);
        return a;
    };
    const Mat<T> i = sigmoid(gate(p.W_i, p.U_i, p.b_i));
    const Mat<T> f = sigmoid(gate(p.W_f, p.U_f, p.b_f));
    const Mat<T> o = sigmoid(gate(p.W_o, p.U_o, p.b_o));
    const Mat<T> g = tanh_of(gate(p.W_g, p.U_g, p.b_g));
    LstmState<T> next;
    next.c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
    next.h = o.cwiseProduct(Mat<T>(tanh_of(next.c)));
    return next;
}

// ---------------------------------------------------------------------------
// Whole sequences, rows are time steps: inputs [steps x input] ->
// states [steps x hidden], starting from h_0 = 0.

namespace detail {

template <typename T>
void check_sequence(const Mat<T>& inputs, int input_size) {
    require_shape(inputs.rows() >= 1, "run_sequence: empty sequence");
    require_shape(inputs.cols() == input_size, "run_sequence: input width " + std::to_string(inputs.cols()) +
                                                   " does not match the cell input size " + std::to_string(input_size));
}

} // namespace detail

template <typename T>
Mat<T> run_sequence(const RnnParams<T>& p, const Mat<T>& inputs) {
    detail::check_sequence(inputs, p.input_size());
    Mat<T> out(inputs.rows(), p.hidden_size());
    Mat<T> h = Mat<T>::Zero(p.hidden_size(), 1);
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
        h = rnn_step(p, Mat<T>(inputs.row(t).transpose()), h);
        out.row(t) = h.transpose();
    }
    return out;
}

template <typename T>
Mat<T> run_sequence(const GruParams<T>& p, const Mat<T>& inputs) {
    detail::check_sequence(inputs, p.input_size());
    Mat<T> out(inputs.rows(), p.hidden_size());
    Mat<T> h = Mat<T>::Zero(p.hidden_size(), 1);
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
        h = gru_step(p, Mat<T>(inputs.row(t).transpose()), h);
        out.row(t) = h.transpose();
    }
    return out;
}

template <typename T>
Mat<T> run_sequence(const LstmParams<T>& p, const Mat<T>& inputs) {
    detail::check_sequence(inputs, p.input_size());
    Mat<T> out(inputs.rows(), p.hidden_size());
    LstmState<T> s{Mat<T>::Zero(p.hidden_size(), 1), Mat<T>::Zero(p.hidden_size(), 1)};
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
        s = lstm_step(p, Mat<T>(inputs.row(t).transpose()), s);
        out.row(t) = s.h.transpose();
    }
    return out;
}

/// Bidirectional GRU: output[t] = [forward(x)[t], backward(reverse x)[T-1-t]].
template <typename T>
Mat<T> bigru_sequence(const GruParams<T>& fwd, const GruParams<T>& bwd, const Mat<T>& inputs) {
    require_shape(fwd.hidden_size() == bwd.hidden_size(), "bigru_sequence: forward and backward hidden sizes differ");
    require_shape(fwd.input_size() == bwd.input_size(), "bigru_sequence: forward and backward input sizes differ");
    const Mat<T> f = run_sequence(fwd, inputs);
    const Mat<T> reversed = inputs.colwise().reverse();
    const Mat<T> b = run_sequence(bwd, reversed);
    const auto T_ = inputs.rows();
    const auto H = fwd.hidden_size();
    Mat<T> out(T_, 2 * H);
    for (Eigen::Index t = 0; t < T_; ++t) {
        out.row(t).head(H) = f.row(t);
        out.row(t).tail(H) = b.row(T_ - 1 - t);
    }
    return out;
}

} // namespace sensekit::nn
