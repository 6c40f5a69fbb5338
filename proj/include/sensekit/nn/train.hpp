#pragma once

// Mini-batch training with Adam and global-norm gradient clipping.

#include <sensekit/nn/network.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <vector>

namespace sensekit::nn {

/// Flat training set: sample i occupies x[i*steps*features ...] row-major by
/// step. Labels < 0 / track_mask 0 mark a missing label.
struct TrainData {
    int steps = 0;
    int features = 0;
    std::vector<float> x;
    std::vector<int> activity;
    std::vector<int> identity;
    std::vector<std::array<float, 2>> track;
    std::vector<std::uint8_t> track_mask;

    std::size_t size() const { return activity.size(); }

    void push_back(const float* sample, int act, int id, std::array<float, 2> xy, bool has_xy) {
        x.insert(x.end(), sample, sample + static_cast<std::ptrdiff_t>(steps) * features);
        activity.push_back(act);
        identity.push_back(id);
        track.push_back(xy);
        track_mask.push_back(has_xy ? 1 : 0);
    }
};

template <typename T>
Sequence<T> make_inputs(const TrainData& d, const std::vector<std::size_t>& idx) {
    const int B = static_cast<int>(idx.size());
    Sequence<T> s(d.features, d.steps, B);
    const std::size_t stride = static_cast<std::size_t>(d.steps) * d.features;
    for (int b = 0; b < B; ++b) {
        const float* src = d.x.data() + idx[static_cast<std::size_t>(b)] * stride;
        for (int t = 0; t < d.steps; ++t) {
            auto col = s.data.col(static_cast<Eigen::Index>(t) * B + b);
            for (int f = 0; f < d.features; ++f) col(f) = static_cast<T>(src[static_cast<std::size_t>(t) * d.features + f]);
        }
    }
    return s;
}

template <typename T>
Targets<T> make_targets(const TrainData& d, const std::vector<std::size_t>& idx) {
    Targets<T> y;
    y.track = Mat<T>::Zero(2, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto i = idx[b];
        y.activity.push_back(d.activity[i]);
        y.identity.push_back(d.identity[i]);
        y.track(0, static_cast<Eigen::Index>(b)) = static_cast<T>(d.track[i][0]);
        y.track(1, static_cast<Eigen::Index>(b)) = static_cast<T>(d.track[i][1]);
        y.track_mask.push_back(d.track_mask[i]);
    }
    return y;
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0; ///< global gradient norm cap; <= 0 disables
};

template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// Applies one update from the gradients currently held by `net`.
    void step(Network<T>& net) {
        ++t_;
        double sq = 0.0;
        net.visit([&](const std::string&, Mat<T>&, Mat<T>& g) { sq += static_cast<double>(g.squaredNorm()); });
        if (!std::isfinite(sq)) throw NumericError("non-finite gradient");
        const double norm = std::sqrt(sq);
        const double scale = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        std::size_t k = 0;
        net.visit([&](const std::string&, Mat<T>& v, Mat<T>& g) {
            if (k == m_.size()) {
                m_.push_back(Mat<T>::Zero(v.rows(), v.cols()));
                s_.push_back(Mat<T>::Zero(v.rows(), v.cols()));
            }
            auto& m = m_[k];
            auto& s = s_[k];
            ++k;
            const auto gs = (g.array() * static_cast<T>(scale)).eval();
            m.array() = static_cast<T>(cfg_.beta1) * m.array() + static_cast<T>(1.0 - cfg_.beta1) * gs;
            s.array() = static_cast<T>(cfg_.beta2) * s.array() + static_cast<T>(1.0 - cfg_.beta2) * gs.square();
            v.array() -= static_cast<T>(cfg_.lr) * (m.array() / static_cast<T>(c1)) /
                         ((s.array() / static_cast<T>(c2)).sqrt() + static_cast<T>(cfg_.eps));
        });
    }

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<Mat<T>> m_, s_;
};

struct TrainConfig {
    int epochs = 60;
    int batch = 32;
    AdamConfig adam;
    LossWeights weights;
    int patience = 0; ///< early stop after this many epochs without val improvement; 0 = off
    std::uint64_t seed = 0;
};

struct EvalResult {
    LossParts loss;
    double activity_accuracy = std::numeric_limits<double>::quiet_NaN();
    double identity_accuracy = std::numeric_limits<double>::quiet_NaN();
    double track_rmse = std::numeric_limits<double>::quiet_NaN(); ///< normalised units, both axes pooled
};

struct EpochRecord {
    int epoch = 0;
    LossParts train;
    EvalResult val;
};

namespace detail {

inline int argmax_col(const auto& m, Eigen::Index c) {
    Eigen::Index r = 0;
    m.col(c).maxCoeff(&r);
    return static_cast<int>(r);
}

} // namespace detail

/// Loss and accuracy over a whole set, without touching gradients.
template <typename T>
EvalResult evaluate(Network<T>& net, const TrainData& d, const LossWeights& w, int batch = 256) {
    EvalResult r;
    if (d.size() == 0) return r;
    double la = 0, li = 0, lt = 0;
    long na = 0, ca = 0, ni = 0, ci = 0, nt = 0;
    double se = 0.0;
    for (std::size_t start = 0; start < d.size(); start += static_cast<std::size_t>(batch)) {
        std::vector<std::size_t> idx(std::min<std::size_t>(static_cast<std::size_t>(batch), d.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto out = net.forward(make_inputs<T>(d, idx));
        const auto y = make_targets<T>(d, idx);
        const auto parts = net.loss(out, y, w, false);
        long ba = 0, bi = 0, bt = 0;
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const auto c = static_cast<Eigen::Index>(b);
            if (net.has_activity() && y.activity[b] >= 0) {
                ++ba;
                ca += detail::argmax_col(out.activity, c) == y.activity[b];
            }
            if (net.has_identity() && y.identity[b] >= 0) {
                ++bi;
                ci += detail::argmax_col(out.identity, c) == y.identity[b];
            }
            if (net.has_track() && y.track_mask[b]) {
                ++bt;
                se += static_cast<double>((out.track.col(c) - y.track.col(c)).squaredNorm());
            }
        }
        la += parts.activity * static_cast<double>(ba);
        li += parts.identity * static_cast<double>(bi);
        lt += parts.track * static_cast<double>(bt);
        na += ba;
        ni += bi;
        nt += bt;
    }
    if (na > 0) {
        r.loss.activity = la / static_cast<double>(na);
        r.activity_accuracy = static_cast<double>(ca) / static_cast<double>(na);
    }
    if (ni > 0) {
        r.loss.identity = li / static_cast<double>(ni);
        r.identity_accuracy = static_cast<double>(ci) / static_cast<double>(ni);
    }
    if (nt > 0) {
        r.loss.track = lt / static_cast<double>(nt);
        r.track_rmse = std::sqrt(se / (2.0 * static_cast<double>(nt)));
    }
    r.loss.total = w.activity * r.loss.activity + w.identity * r.loss.identity + w.track * r.loss.track;
    return r;
}

/// Trains `net` in place and returns the per-epoch history. Deterministic for
/// a given config seed and network initialisation.
template <typename T>
std::vector<EpochRecord> train(Network<T>& net, const TrainData& train_set, const TrainData* val_set, const TrainConfig& cfg) {
    if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (cfg.batch < 1) throw ConfigError("batch size must be >= 1");
    if (!(cfg.adam.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (cfg.epochs > 0 && train_set.size() == 0) throw DataError("training set is empty");
    Adam<T> opt(cfg.adam);
    Rng rng(named_seed(cfg.seed, "shuffle"));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<EpochRecord> history;
    std::optional<Network<T>> best;
    double best_val = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord rec;
        rec.epoch = epoch;
        double weight_sum = 0.0;
        try {
            for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
                const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch)));
                net.zero_grad();
                const auto out = net.forward(make_inputs<T>(train_set, idx));
                const auto parts = net.loss(out, make_targets<T>(train_set, idx), cfg.weights, true);
                opt.step(net);
                const double n = static_cast<double>(idx.size());
                rec.train.activity += parts.activity * n;
                rec.train.identity += parts.identity * n;
                rec.train.track += parts.track * n;
                rec.train.total += parts.total * n;
                weight_sum += n;
            }
            rec.train.activity /= weight_sum;
            rec.train.identity /= weight_sum;
            rec.train.track /= weight_sum;
            rec.train.total /= weight_sum;
            if (val_set && val_set->size() > 0) rec.val = evaluate(net, *val_set, cfg.weights);
        } catch (const NumericError& e) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(rec.train.total) || !std::isfinite(rec.val.loss.total)) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": non-finite loss");
        }
        history.push_back(rec);
        if (cfg.patience > 0 && val_set && val_set->size() > 0) {
            if (rec.val.loss.total < best_val) {
                best_val = rec.val.loss.total;
                best = net;
                stale = 0;
            } else if (++stale >= cfg.patience) {
                break;
            }
        }
    }
    if (best) net = std::move(*best);
    return history;
}

} // namespace sensekit::nn
