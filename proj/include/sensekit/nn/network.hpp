#pragma once

// Recurrent trunk + mean pooling over time + up to three dense heads
// (activity softmax, identity softmax, 2-D coordinate regressor).

#include <sensekit/nn/layers.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace sensekit::nn {

struct ModelSpec {
    CellType cell = CellType::gru;
    int input = 0;
    int hidden = 128;
    int layers = 2;
    bool bias = true;
    int activity_classes = 0; ///< 0 disables the head
    int identity_classes = 0;
    bool track = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (input < 1) throw ConfigError("model input size must be >= 1");
        if (hidden < 1) throw ConfigError("model hidden size must be >= 1");
        if (layers < 1) throw ConfigError("model needs at least one recurrent layer");
        if (activity_classes < 0 || identity_classes < 0) throw ConfigError("class counts must be non-negative");
        if (activity_classes == 0 && identity_classes == 0 && !track) throw ConfigError("model has no output head");
    }
};

inline nlohmann::json model_spec_to_json(const ModelSpec& s) {
    return {{"cell", cell_name(s.cell)}, {"input", s.input}, {"hidden", s.hidden}, {"layers", s.layers}, {"bias", s.bias},
            {"activity_classes", s.activity_classes}, {"identity_classes", s.identity_classes}, {"track", s.track},
            {"seed", s.seed}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.cell = cell_from_name(j.at("cell").get<std::string>());
    s.input = j.at("input").get<int>();
    s.hidden = j.at("hidden").get<int>();
    s.layers = j.at("layers").get<int>();
    s.bias = j.value("bias", true);
    s.activity_classes = j.value("activity_classes", 0);
    s.identity_classes = j.value("identity_classes", 0);
    s.track = j.value("track", false);
    s.seed = j.value("seed", std::uint64_t{0});
    s.validate();
    return s;
}

/// Head outputs for a batch, column per sample. Empty when the head is absent.
template <typename T>
struct Outputs {
    Mat<T> activity; ///< [K x B] probabilities
    Mat<T> identity; ///< [U x B] probabilities
    Mat<T> track;    ///< [2 x B] normalised coordinates
};

/// Labels for one batch. Class labels < 0 and track_mask = 0 exclude a sample
/// from that loss.
template <typename T>
struct Targets {
    std::vector<int> activity;
    std::vector<int> identity;
    Mat<T> track; ///< [2 x B]
    std::vector<std::uint8_t> track_mask;
};

struct LossWeights {
    double activity = 1.0;
    double identity = 1.0;
    double track = 1.0;
};

struct LossParts {
    double activity = 0.0;
    double identity = 0.0;
    double track = 0.0;
    double total = 0.0;
};

namespace detail {

/// Mean cross-entropy over labelled columns; writes d(loss)/d(logits) scaled by `w`.
template <typename T>
double cross_entropy(const Mat<T>& probs, const std::vector<int>& labels, double w, Mat<T>* dlogits) {
    int n = 0;
    for (int y : labels) n += y >= 0;
    if (dlogits) *dlogits = Mat<T>::Zero(probs.rows(), probs.cols());
    if (n == 0) return 0.0;
    double loss = 0.0;
    for (Eigen::Index b = 0; b < probs.cols(); ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0) continue;
        if (y >= probs.rows()) throw DataError("label " + std::to_string(y) + " outside the head's " + std::to_string(probs.rows()) + " classes");
        loss -= std::log(std::max(static_cast<double>(probs(y, b)), 1e-300));
        if (dlogits) {
            dlogits->col(b) = probs.col(b) * static_cast<T>(w / n);
            (*dlogits)(y, b) -= static_cast<T>(w / n);
        }
    }
    return loss / n;
}

} // namespace detail

template <typename T>
class Network {
public:
    Network() = default;
    explicit Network(const ModelSpec& spec) : spec_(spec) {
        spec_.validate();
        int in = spec_.input;
        for (int l = 0; l < spec_.layers; ++l) {
            layers_.push_back(make_layer<T>(spec_.cell, in, spec_.hidden, spec_.bias));
            in = layers_.back()->output_size();
        }
        if (spec_.activity_classes > 0) act_ = Dense<T>(in, spec_.activity_classes);
        if (spec_.identity_classes > 0) id_ = Dense<T>(in, spec_.identity_classes);
        if (spec_.track) track_ = Dense<T>(in, 2);
        Rng rng(named_seed(spec_.seed, "init"));
        for (auto& l : layers_) l->init(rng);
        if (has_activity()) act_.init(rng);
        if (has_identity()) id_.init(rng);
        if (has_track()) track_.init(rng);
    }

    Network(const Network& o) : spec_(o.spec_), act_(o.act_), id_(o.id_), track_(o.track_) {
        for (const auto& l : o.layers_) layers_.push_back(l->clone());
    }
    Network& operator=(const Network& o) {
        if (this != &o) *this = Network(o);
        return *this;
    }
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    const ModelSpec& spec() const { return spec_; }
    bool has_activity() const { return spec_.activity_classes > 0; }
    bool has_identity() const { return spec_.identity_classes > 0; }
    bool has_track() const { return spec_.track; }

    /// Every trainable matrix in declaration order.
    void visit(const ParamVisitor<T>& f) {
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const std::string prefix = "layer" + std::to_string(l) + ".";
            layers_[l]->visit([&](const std::string& name, Mat<T>& v, Mat<T>& g) { f(prefix + name, v, g); });
        }
        if (has_activity()) act_.visit("activity.", f);
        if (has_identity()) id_.visit("identity.", f);
        if (has_track()) track_.visit("track.", f);
    }

    void zero_grad() {
        visit([](const std::string&, Mat<T>&, Mat<T>& g) { g.setZero(); });
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        visit([&](const std::string&, Mat<T>& v, Mat<T>&) { n += static_cast<std::size_t>(v.size()); });
        return n;
    }

    Outputs<T> forward(const Sequence<T>& x) {
        require_shape(x.dim() == spec_.input, "network: input has " + std::to_string(x.dim()) + " features, model expects " +
                                                  std::to_string(spec_.input));
        require_shape(x.steps >= 1, "network: empty sequence");
        Sequence<T> h = x;
        for (auto& l : layers_) h = l->forward(h);
        steps_ = x.steps;
        last_dim_ = h.dim();
        pooled_ = Mat<T>::Zero(h.dim(), x.batch);
        for (int t = 0; t < x.steps; ++t) pooled_ += h.step(t);
        pooled_ /= static_cast<T>(x.steps);
        Outputs<T> out;
        if (has_activity()) out.activity = softmax(act_.forward(pooled_));
        if (has_identity()) out.identity = softmax(id_.forward(pooled_));
        if (has_track()) out.track = track_.forward(pooled_);
        return out;
    }

    /// Loss of `out` (from the last forward) against `y`. When `backprop` is
    /// set the weighted total's gradient is accumulated into the parameters.
    LossParts loss(const Outputs<T>& out, const Targets<T>& y, const LossWeights& w, bool backprop) {
        LossParts parts;
        const auto B = pooled_.cols();
        Mat<T> dpooled = Mat<T>::Zero(pooled_.rows(), B);
        if (has_activity() && w.activity != 0.0) {
            Mat<T> d;
            parts.activity = detail::cross_entropy(out.activity, y.activity, w.activity, backprop ? &d : nullptr);
            if (backprop) dpooled += act_.backward(d);
        }
        if (has_identity() && w.identity != 0.0) {
            Mat<T> d;
            parts.identity = detail::cross_entropy(out.identity, y.identity, w.identity, backprop ? &d : nullptr);
            if (backprop) dpooled += id_.backward(d);
        }
        if (has_track() && w.track != 0.0) {
            int n = 0;
            for (auto m : y.track_mask) n += m != 0;
            Mat<T> d = Mat<T>::Zero(2, B);
            if (n > 0) {
                double s = 0.0;
                for (Eigen::Index b = 0; b < B; ++b) {
                    if (!y.track_mask[static_cast<std::size_t>(b)]) continue;
                    const Mat<T> e = out.track.col(b) - y.track.col(b);
                    s += static_cast<double>(e.squaredNorm());
                    d.col(b) = e * static_cast<T>(w.track / n);
                }
                parts.track = s / (2.0 * n);
            }
            if (backprop) dpooled += track_.backward(d);
        }
        parts.total = w.activity * parts.activity + w.identity * parts.identity + w.track * parts.track;
        if (!std::isfinite(parts.total)) throw NumericError("non-finite loss");
        if (backprop) backward_trunk(dpooled);
        return parts;
    }

private:
    void backward_trunk(const Mat<T>& dpooled) {
        Sequence<T> dh(last_dim_, steps_, static_cast<int>(dpooled.cols()));
        const Mat<T> share = dpooled / static_cast<T>(steps_);
        for (int t = 0; t < steps_; ++t) dh.step(t) = share;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dh = (*it)->backward(dh);
    }

    ModelSpec spec_;
    std::vector<std::unique_ptr<RecurrentLayer<T>>> layers_;
    Dense<T> act_, id_, track_;
    Mat<T> pooled_;
    int steps_ = 0;
    int last_dim_ = 0;
};

} // namespace sensekit::nn
