#pragma once

// Trainable layers over batched sequences, with exact reverse-mode gradients.
// forward() caches what backward() needs; backward() accumulates into the
// gradient buffers and returns the gradient with respect to the input.

#include <sensekit/nn/cells.hpp>
#include <sensekit/nn/tensor.hpp>

#include <functional>
#include <memory>
#include <string>

namespace sensekit::nn {

enum class CellType { rnn, lstm, gru, bigru };

inline std::string cell_name(CellType c) {
    switch (c) {
    case CellType::rnn: return "rnn";
    case CellType::lstm: return "lstm";
    case CellType::gru: return "gru";
    case CellType::bigru: return "bigru";
    }
    return "gru";
}

inline CellType cell_from_name(const std::string& s) {
    if (s == "rnn") return CellType::rnn;
    if (s == "lstm") return CellType::lstm;
    if (s == "gru") return CellType::gru;
    if (s == "bigru" || s == "bi-gru" || s == "b-gru") return CellType::bigru;
    throw ConfigError("unknown cell type \"" + s + "\" (expected rnn|lstm|gru|bigru)");
}

/// Called with (name, value, gradient) for every trainable matrix.
template <typename T>
using ParamVisitor = std::function<void(const std::string&, Mat<T>&, Mat<T>&)>;

template <typename T>
class RecurrentLayer {
public:
    virtual ~RecurrentLayer() = default;
    virtual int input_size() const = 0;
    virtual int output_size() const = 0;
    virtual Sequence<T> forward(const Sequence<T>& x) = 0;
    virtual Sequence<T> backward(const Sequence<T>& dy) = 0;
    virtual void visit(const ParamVisitor<T>& f) = 0;
    virtual void init(Rng& rng) = 0;
    virtual std::unique_ptr<RecurrentLayer> clone() const = 0;
};

namespace detail {

template <typename P>
void visit_pair(P& value, P& grad, const std::string& prefix, const auto& f) {
    std::vector<std::pair<std::string, void*>> grads;
    grad.visit([&](const char*, auto& g) { grads.emplace_back("", &g); });
    std::size_t k = 0;
    value.visit([&](const char* name, auto& v) {
        using M = std::remove_reference_t<decltype(v)>;
        f(prefix + name, v, *static_cast<M*>(grads[k++].second));
    });
}

template <typename T>
Mat<T> one_minus(const Mat<T>& m) {
    return (T(1) - m.array()).matrix();
}

} // namespace detail

template <typename T>
class RnnLayer final : public RecurrentLayer<T> {
public:
    RnnLayer(int input, int hidden, bool bias, Activation act = Activation::tanh)
        : p_(RnnParams<T>::zeros(input, hidden, bias)), g_(RnnParams<T>::zeros(input, hidden, bias)) {
        p_.activation = act;
    }

    RnnParams<T>& params() { return p_; }
    int input_size() const override { return p_.input_size(); }
    int output_size() const override { return p_.hidden_size(); }

    Sequence<T> forward(const Sequence<T>& x) override {
        require_shape(x.dim() == input_size(), "rnn layer: input width mismatch");
        x_ = x;
        const int H = output_size(), B = x.batch;
        Mat<T> xa = p_.W_xh * x.data;
        detail::add_bias(xa, p_.b, p_.use_bias);
        h_ = Sequence<T>(H, x.steps + 1, B);
        for (int t = 0; t < x.steps; ++t) {
            Mat<T> a = xa.middleCols(static_cast<Eigen::Index>(t) * B, B) + p_.W_hh * h_.step(t);
            h_.step(t + 1) = p_.activation == Activation::tanh ? Mat<T>(tanh_of(a)) : a;
        }
        Sequence<T> y(H, x.steps, B);
        y.data = h_.data.rightCols(static_cast<Eigen::Index>(x.steps) * B);
        return y;
    }

    Sequence<T> backward(const Sequence<T>& dy) override {
        const int H = output_size(), B = x_.batch, TT = x_.steps;
        Mat<T> da_all(H, static_cast<Eigen::Index>(TT) * B);
        Mat<T> dh_next = Mat<T>::Zero(H, B);
        for (int t = TT - 1; t >= 0; --t) {
            Mat<T> dh = dy.step(t) + dh_next;
            const auto h = h_.step(t + 1);
            Mat<T> da = p_.activation == Activation::tanh ? Mat<T>(dh.cwiseProduct(detail::one_minus<T>(h.cwiseProduct(h)))) : dh;
            g_.W_hh.noalias() += da * h_.step(t).transpose();
            dh_next.noalias() = p_.W_hh.transpose() * da;
            da_all.middleCols(static_cast<Eigen::Index>(t) * B, B) = da;
        }
        g_.W_xh.noalias() += da_all * x_.data.transpose();
        if (p_.use_bias) g_.b += da_all.rowwise().sum();
        Sequence<T> dx(input_size(), TT, B);
        dx.data.noalias() = p_.W_xh.transpose() * da_all;
        return dx;
    }

    void visit(const ParamVisitor<T>& f) override { detail::visit_pair(p_, g_, "", f); }
    void init(Rng& rng) override { p_.init(rng); }
    std::unique_ptr<RecurrentLayer<T>> clone() const override { return std::make_unique<RnnLayer>(*this); }

private:
    RnnParams<T> p_, g_;
    Sequence<T> x_, h_;
};

template <typename T>
class GruLayer final : public RecurrentLayer<T> {
public:
    GruLayer(int input, int hidden, bool bias)
        : p_(GruParams<T>::zeros(input, hidden, bias)), g_(GruParams<T>::zeros(input, hidden, bias)) {}

    GruParams<T>& params() { return p_; }
    int input_size() const override { return p_.input_size(); }
    int output_size() const override { return p_.hidden_size(); }

    Sequence<T> forward(const Sequence<T>& x) override {
        require_shape(x.dim() == input_size(), "gru layer: input width mismatch");
        x_ = x;
        const int H = output_size(), B = x.batch, TT = x.steps;
        Mat<T> xz = p_.W_z * x.data, xr = p_.W_r * x.data, xh = p_.W * x.data;
        detail::add_bias(xz, p_.b_z, p_.use_bias);
        detail::add_bias(xr, p_.b_r, p_.use_bias);
        detail::add_bias(xh, p_.b_h, p_.use_bias);
        h_ = Sequence<T>(H, TT + 1, B);
        z_ = Sequence<T>(H, TT, B);
        r_ = Sequence<T>(H, TT, B);
        c_ = Sequence<T>(H, TT, B);
        for (int t = 0; t < TT; ++t) {
            const auto cols = [&](Mat<T>& m) { return m.middleCols(static_cast<Eigen::Index>(t) * B, B); };
            const Mat<T> hp = h_.step(t);
            const Mat<T> z = sigmoid(Mat<T>(cols(xz) + p_.U_z * hp));
            const Mat<T> r = sigmoid(Mat<T>(cols(xr) + p_.U_r * hp));
            const Mat<T> c = tanh_of(Mat<T>(cols(xh) + p_.U * r.cwiseProduct(hp)));
            h_.step(t + 1) = hp + z.cwiseProduct(c - hp);
            z_.step(t) = z;
            r_.step(t) = r;
            c_.step(t) = c;
        }
        Sequence<T> y(H, TT, B);
        y.data = h_.data.rightCols(static_cast<Eigen::Index>(TT) * B);
        return y;
    }

    Sequence<T> backward(const Sequence<T>& dy) override {
        const int H = output_size(), B = x_.batch, TT = x_.steps;
        Mat<T> daz(H, static_cast<Eigen::Index>(TT) * B), dar(H, daz.cols()), dah(H, daz.cols());
        Mat<T> dh_next = Mat<T>::Zero(H, B);
        for (int t = TT - 1; t >= 0; --t) {
            const Mat<T> dh = dy.step(t) + dh_next;
            const Mat<T> hp = h_.step(t);
            const auto z = z_.step(t);
            const auto r = r_.step(t);
            const auto c = c_.step(t);
            const auto cols = [&](Mat<T>& m) { return m.middleCols(static_cast<Eigen::Index>(t) * B, B); };

            Mat<T> dhp = dh.cwiseProduct(detail::one_minus<T>(z));
            const Mat<T> a_h = dh.cwiseProduct(z).cwiseProduct(detail::one_minus<T>(c.cwiseProduct(c)));
            const Mat<T> rh = r.cwiseProduct(hp);
            g_.U.noalias() += a_h * rh.transpose();
            const Mat<T> drh = p_.U.transpose() * a_h;
            dhp += drh.cwiseProduct(r);
            const Mat<T> a_z = dh.cwiseProduct(c - hp).cwiseProduct(z.cwiseProduct(detail::one_minus<T>(z)));
            const Mat<T> a_r = drh.cwiseProduct(hp).cwiseProduct(r.cwiseProduct(detail::one_minus<T>(r)));
            g_.U_z.noalias() += a_z * hp.transpose();
            g_.U_r.noalias() += a_r * hp.transpose();
            dhp.noalias() += p_.U_z.transpose() * a_z;
            dhp.noalias() += p_.U_r.transpose() * a_r;
            cols(daz) = a_z;
            cols(dar) = a_r;
            cols(dah) = a_h;
            dh_next = dhp;
        }
        g_.W_z.noalias() += daz * x_.data.transpose();
        g_.W_r.noalias() += dar * x_.data.transpose();
        g_.W.noalias() += dah * x_.data.transpose();
        if (p_.use_bias) {
            g_.b_z += daz.rowwise().sum();
            g_.b_r += dar.rowwise().sum();
            g_.b_h += dah.rowwise().sum();
        }
        Sequence<T> dx(input_size(), TT, B);
        dx.data.noalias() = p_.W_z.transpose() * daz;
        dx.data.noalias() += p_.W_r.transpose() * dar;
        dx.data.noalias() += p_.W.transpose() * dah;
        return dx;
    }

    void visit(const ParamVisitor<T>& f) override { detail::visit_pair(p_, g_, "", f); }
    void visit_prefixed(const std::string& prefix, const ParamVisitor<T>& f) { detail::visit_pair(p_, g_, prefix, f); }
    void init(Rng& rng) override { p_.init(rng); }
    std::unique_ptr<RecurrentLayer<T>> clone() const override { return std::make_unique<GruLayer>(*this); }

private:
    GruParams<T> p_, g_;
    Sequence<T> x_, h_, z_, r_, c_;
};

template <typename T>
class LstmLayer final : public RecurrentLayer<T> {
public:
    LstmLayer(int input, int hidden, bool bias)
        : p_(LstmParams<T>::zeros(input, hidden, bias)), g_(LstmParams<T>::zeros(input, hidden, bias)) {}

    LstmParams<T>& params() { return p_; }
    int input_size() const override { return p_.input_size(); }
    int output_size() const override { return p_.hidden_size(); }

    Sequence<T> forward(const Sequence<T>& x) override {
        require_shape(x.dim() == input_size(), "lstm layer: input width mismatch");
        x_ = x;
        const int H = output_size(), B = x.batch, TT = x.steps;
        Mat<T> xi = p_.W_i * x.data, xf = p_.W_f * x.data, xo = p_.W_o * x.data, xg = p_.W_g * x.data;
        detail::add_bias(xi, p_.b_i, p_.use_bias);
        detail::add_bias(xf, p_.b_f, p_.use_bias);
        detail::add_bias(xo, p_.b_o, p_.use_bias);
        detail::add_bias(xg, p_.b_g, p_.use_bias);
        h_ = Sequence<T>(H, TT + 1, B);
        c_ = Sequence<T>(H, TT + 1, B);
        i_ = f_ = o_ = g_gate_ = Sequence<T>(H, TT, B);
        for (int t = 0; t < TT; ++t) {
            const auto cols = [&](Mat<T>& m) { return m.middleCols(static_cast<Eigen::Index>(t) * B, B); };
            const Mat<T> hp = h_.step(t);
            const Mat<T> i = sigmoid(Mat<T>(cols(xi) + p_.U_i * hp));
            const Mat<T> f = sigmoid(Mat<T>(cols(xf) + p_.U_f * hp));
            const Mat<T> o = sigmoid(Mat<T>(cols(xo) + p_.U_o * hp));
            const Mat<T> g = tanh_of(Mat<T>(cols(xg) + p_.U_g * hp));
            const Mat<T> c = f.cwiseProduct(c_.step(t)) + i.cwiseProduct(g);
            c_.step(t + 1) = c;
            h_.step(t + 1) = o.cwiseProduct(Mat<T>(tanh_of(c)));
            i_.step(t) = i;
            f_.step(t) = f;
            o_.step(t) = o;
            g_gate_.step(t) = g;
        }
        Sequence<T> y(H, TT, B);
        y.data = h_.data.rightCols(static_cast<Eigen::Index>(TT) * B);
        return y;
    }

    Sequence<T> backward(const Sequence<T>& dy) override {
        const int H = output_size(), B = x_.batch, TT = x_.steps;
        const auto n = static_cast<Eigen::Index>(TT) * B;
        Mat<T> dai(H, n), daf(H, n), dao(H, n), dag(H, n);
        Mat<T> dh_next = Mat<T>::Zero(H, B), dc_next = Mat<T>::Zero(H, B);
        for (int t = TT - 1; t >= 0; --t) {
            const auto cols = [&](Mat<T>& m) { return m.middleCols(static_cast<Eigen::Index>(t) * B, B); };
            const Mat<T> dh = dy.step(t) + dh_next;
            const Mat<T> hp = h_.step(t);
            const Mat<T> cp = c_.step(t);
            const auto i = i_.step(t);
            const auto f = f_.step(t);
            const auto o = o_.step(t);
            const auto g = g_gate_.step(t);
            const Mat<T> tc = tanh_of(Mat<T>(c_.step(t + 1)));
            const Mat<T> dc = dc_next + dh.cwiseProduct(o).cwiseProduct(detail::one_minus<T>(tc.cwiseProduct(tc)));
            const Mat<T> a_o = dh.cwiseProduct(tc).cwiseProduct(o.cwiseProduct(detail::one_minus<T>(o)));
            const Mat<T> a_i = dc.cwiseProduct(g).cwiseProduct(i.cwiseProduct(detail::one_minus<T>(i)));
            const Mat<T> a_f = dc.cwiseProduct(cp).cwiseProduct(f.cwiseProduct(detail::one_minus<T>(f)));
            const Mat<T> a_g = dc.cwiseProduct(i).cwiseProduct(detail::one_minus<T>(g.cwiseProduct(g)));
            dc_next = dc.cwiseProduct(f);
            g_.U_i.noalias() += a_i * hp.transpose();
            g_.U_f.noalias() += a_f * hp.transpose();
            g_.U_o.noalias() += a_o * hp.transpose();
            g_.U_g.noalias() += a_g * hp.transpose();
            dh_next.noalias() = p_.U_i.transpose() * a_i;
            dh_next.noalias() += p_.U_f.transpose() * a_f;
            dh_next.noalias() += p_.U_o.transpose() * a_o;
            dh_next.noalias() += p_.U_g.transpose() * a_g;
            cols(dai) = a_i;
            cols(daf) = a_f;
            cols(dao) = a_o;
            cols(dag) = a_g;
        }
        g_.W_i.noalias() += dai * x_.data.transpose();
        g_.W_f.noalias() += daf * x_.data.transpose();
        g_.W_o.noalias() += dao * x_.data.transpose();
        g_.W_g.noalias() += dag * x_.data.transpose();
        if (p_.use_bias) {
            g_.b_i += dai.rowwise().sum();
            g_.b_f += daf.rowwise().sum();
            g_.b_o += dao.rowwise().sum();
            g_.b_g += dag.rowwise().sum();
        }
        Sequence<T> dx(input_size(), TT, B);
        dx.data.noalias() = p_.W_i.transpose() * dai;
        dx.data.noalias() += p_.W_f.transpose() * daf;
        dx.data.noalias() += p_.W_o.transpose() * dao;
        dx.data.noalias() += p_.W_g.transpose() * dag;
        return dx;
    }

    void visit(const ParamVisitor<T>& f) override { detail::visit_pair(p_, g_, "", f); }
    void init(Rng& rng) override { p_.init(rng); }
    std::unique_ptr<RecurrentLayer<T>> clone() const override { return std::make_unique<LstmLayer>(*this); }

private:
    LstmParams<T> p_, g_;
    Sequence<T> x_, h_, c_, i_, f_, o_, g_gate_;
};

/// Forward GRU over the sequence and backward GRU over its time reversal;
/// outputs are concatenated per step, [forward; backward].
template <typename T>
class BiGruLayer final : public RecurrentLayer<T> {
public:
    BiGruLayer(int input, int hidden, bool bias) : fwd_(input, hidden, bias), bwd_(input, hidden, bias) {}

    GruParams<T>& forward_params() { return fwd_.params(); }
    GruParams<T>& backward_params() { return bwd_.params(); }
    int input_size() const override { return fwd_.input_size(); }
    int output_size() const override { return 2 * fwd_.output_size(); }

    Sequence<T> forward(const Sequence<T>& x) override {
        const auto yf = fwd_.forward(x);
        const auto yb = bwd_.forward(reverse_time(x));
        const int H = fwd_.output_size();
        Sequence<T> y(2 * H, x.steps, x.batch);
        for (int t = 0; t < x.steps; ++t) {
            y.step(t).topRows(H) = yf.step(t);
            y.step(t).bottomRows(H) = yb.step(x.steps - 1 - t);
        }
        return y;
    }

    Sequence<T> backward(const Sequence<T>& dy) override {
        const int H = fwd_.output_size();
        Sequence<T> dyf(H, dy.steps, dy.batch), dyb(H, dy.steps, dy.batch);
        for (int t = 0; t < dy.steps; ++t) {
            dyf.step(t) = dy.step(t).topRows(H);
            dyb.step(dy.steps - 1 - t) = dy.step(t).bottomRows(H);
        }
        auto dx = fwd_.backward(dyf);
        const auto dxb = bwd_.backward(dyb);
        for (int t = 0; t < dy.steps; ++t) dx.step(t) += dxb.step(dy.steps - 1 - t);
        return dx;
    }

    void visit(const ParamVisitor<T>& f) override {
        fwd_.visit_prefixed("fwd.", f);
        bwd_.visit_prefixed("bwd.", f);
    }
    void init(Rng& rng) override {
        fwd_.init(rng);
        bwd_.init(rng);
    }
    std::unique_ptr<RecurrentLayer<T>> clone() const override { return std::make_unique<BiGruLayer>(*this); }

private:
    GruLayer<T> fwd_, bwd_;
};

template <typename T>
std::unique_ptr<RecurrentLayer<T>> make_layer(CellType cell, int input, int hidden, bool bias) {
    switch (cell) {
    case CellType::rnn: return std::make_unique<RnnLayer<T>>(input, hidden, bias);
    case CellType::lstm: return std::make_unique<LstmLayer<T>>(input, hidden, bias);
    case CellType::gru: return std::make_unique<GruLayer<T>>(input, hidden, bias);
    case CellType::bigru: return std::make_unique<BiGruLayer<T>>(input, hidden, bias);
    }
    throw ConfigError("unknown cell type");
}

/// y = W x + b over a [in x batch] matrix.
template <typename T>
class Dense {
public:
    Dense() = default;
    Dense(int input, int output) : W_(Mat<T>::Zero(output, input)), b_(Mat<T>::Zero(output, 1)), gW_(W_), gb_(b_) {}

    int input_size() const { return static_cast<int>(W_.cols()); }
    int output_size() const { return static_cast<int>(W_.rows()); }

    Mat<T> forward(const Mat<T>& x) {
        require_shape(x.rows() == input_size(), "dense: input width mismatch");
        x_ = x;
        Mat<T> y = W_ * x;
        y.colwise() += b_.col(0);
        return y;
    }

    Mat<T> backward(const Mat<T>& dy) {
        gW_.noalias() += dy * x_.transpose();
        gb_ += dy.rowwise().sum();
        return W_.transpose() * dy;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& f) {
        f(prefix + "W", W_, gW_);
        f(prefix + "b", b_, gb_);
    }

    void init(Rng& rng) {
        detail::glorot(W_, rng);
        b_.setZero();
    }

    Mat<T>& weight() { return W_; }
    Mat<T>& bias() { return b_; }

private:
    Mat<T> W_, b_, gW_, gb_, x_;
};

} // namespace sensekit::nn
