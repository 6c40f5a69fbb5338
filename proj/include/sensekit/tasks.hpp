#pragma once

// Activity recognition, authentication and tracking models, the combined
// multi-task model, weighted-voting ensembles and confidence thresholds.

#include <sensekit/csi_model.hpp>
#include <sensekit/nn/checkpoint.hpp>
#include <sensekit/nn/train.hpp>
#include <sensekit/preprocess.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace sensekit::tasks {

using csi::Frame;

enum class TaskKind { activity, auth, track, combined };

inline std::string task_name(TaskKind t) {
    switch (t) {
    case TaskKind::activity: return "activity";
    case TaskKind::auth: return "auth";
    case TaskKind::track: return "track";
    case TaskKind::combined: return "combined";
    }
    return "activity";
}

inline TaskKind task_from_name(const std::string& s) {
    if (s == "activity") return TaskKind::activity;
    if (s == "auth") return TaskKind::auth;
    if (s == "track") return TaskKind::track;
    if (s == "combined") return TaskKind::combined;
    throw ConfigError("unknown task \"" + s + "\" (expected activity|auth|track|combined)");
}

struct MultiTaskWeights {
    double alpha = 0.15; ///< activity
    double beta = 0.15;  ///< authentication
    double gamma = 0.70; ///< tracking

    void validate() const {
        if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) throw ConfigError("multi-task weights must be non-negative");
        if (std::abs(alpha + beta + gamma - 1.0) > 1e-9) throw ConfigError("multi-task weights must sum to 1");
    }
};

inline double multitask_loss(double act_loss, double auth_loss, double track_loss, const MultiTaskWeights& w) {
    w.validate();
    if (!std::isfinite(act_loss) || !std::isfinite(auth_loss) || !std::isfinite(track_loss)) {
        throw NumericError("multitask_loss: non-finite component loss");
    }
    return w.alpha * act_loss + w.beta * auth_loss + w.gamma * track_loss;
}

struct TaskModelSpec {
    TaskKind task = TaskKind::activity;
    nn::CellType cell = nn::CellType::gru;
    int hidden = 128;
    int layers = 2;
    bool bias = true;
    bool allow_bigru_classification = false;
    MultiTaskWeights weights;

    void validate() const {
        if (cell == nn::CellType::bigru && (task == TaskKind::activity || task == TaskKind::auth) && !allow_bigru_classification) {
            throw ConfigError("bigru is only used for the tracking and combined models");
        }
        if (task == TaskKind::combined) weights.validate();
    }

    nn::LossWeights loss_weights() const {
        switch (task) {
        case TaskKind::activity: return {1.0, 0.0, 0.0};
        case TaskKind::auth: return {0.0, 1.0, 0.0};
        case TaskKind::track: return {0.0, 0.0, 1.0};
        case TaskKind::combined: return {weights.alpha, weights.beta, weights.gamma};
        }
        return {};
    }
};

// ---------------------------------------------------------------------------
// Coordinates are regressed in units of the area diagonal around its centre,
// so the squared error is cm^2 / diagonal^2.

inline std::array<float, 2> normalise_coord(csi::Point2 p) {
    const auto c = csi::area_center();
    const double d = csi::area_diagonal();
    return {static_cast<float>((p.x - c.x) / d), static_cast<float>((p.y - c.y) / d)};
}

inline csi::Point2 denormalise_coord(double u, double v) {
    const auto c = csi::area_center();
    const double d = csi::area_diagonal();
    return {c.x + d * u, c.y + d * v};
}

/// Whether `f` carries a usable label for `task`. Authentication uses frames
/// in which one of the first `num_users` users is active; tracking uses
/// walking frames.
inline bool frame_has_label(const Frame& f, TaskKind task, int num_users) {
    switch (task) {
    case TaskKind::activity: return true;
    case TaskKind::auth: return f.user >= 0 && f.user < num_users && f.activity != csi::noac_id;
    case TaskKind::track: return csi::is_walk(f.activity);
    case TaskKind::combined: return true;
    }
    return false;
}

inline std::vector<Frame> select_frames(const std::vector<Frame>& frames, TaskKind task, int num_users) {
    std::vector<Frame> out;
    for (const auto& f : frames) {
        if (frame_has_label(f, task, num_users)) out.push_back(f);
    }
    return out;
}

inline void normalise_into(const Frame& f, const prep::NormStats& norm, std::vector<float>& buf) {
    if (norm.mean.size() != static_cast<std::size_t>(f.features)) {
        throw CompatibilityError("normalisation has " + std::to_string(norm.mean.size()) + " features, frame has " +
                                 std::to_string(f.features));
    }
    buf.resize(f.data.size());
    const auto F = static_cast<std::size_t>(f.features);
    for (std::size_t i = 0; i < f.data.size(); ++i) {
        const std::size_t k = i % F;
        buf[i] = static_cast<float>((f.data[i] - norm.mean[k]) / norm.stddev[k]);
    }
}

/// Training set for `task`; frames without the task's label are skipped.
inline nn::TrainData make_train_data(const std::vector<Frame>& frames, TaskKind task, const prep::NormStats& norm, int num_users) {
    nn::TrainData d;
    std::vector<float> buf;
    for (const auto& f : frames) {
        if (!frame_has_label(f, task, num_users)) continue;
        if (d.steps == 0) {
            d.steps = f.steps;
            d.features = f.features;
        } else if (f.steps != d.steps || f.features != d.features) {
            throw ShapeError("frames of differing shapes in one dataset");
        }
        normalise_into(f, norm, buf);
        const bool has_id = frame_has_label(f, TaskKind::auth, num_users);
        const bool has_xy = csi::is_walk(f.activity);
        const int act = task == TaskKind::activity || task == TaskKind::combined ? f.activity : -1;
        const int id = (task == TaskKind::auth || task == TaskKind::combined) && has_id ? f.user : -1;
        d.push_back(buf.data(), act, id, normalise_coord(f.coord), has_xy && (task == TaskKind::track || task == TaskKind::combined));
    }
    return d;
}

// ---------------------------------------------------------------------------

struct Prediction {
    std::vector<double> activity; ///< empty when the model has no activity head
    std::vector<double> identity;
    std::optional<csi::Point2> coord;

    static double confidence_of(const std::vector<double>& p) { return p.empty() ? 0.0 : *std::max_element(p.begin(), p.end()); }
    static int argmax_of(const std::vector<double>& p) {
        return p.empty() ? -1 : static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }
    double activity_confidence() const { return confidence_of(activity); }
    double identity_confidence() const { return confidence_of(identity); }
    int activity_class() const { return argmax_of(activity); }
    int identity_class() const { return argmax_of(identity); }
};

/// A trained network with the normalisation and labelling it was trained with.
struct TaskModel {
    TaskModelSpec spec;
    nn::Network<float> net;
    prep::NormStats norm;
    int num_users = 0; ///< identity classes
    int steps = 0;
    int features = 0;

    nlohmann::json metadata() const {
        return {{"task", task_name(spec.task)},
                {"norm", prep::norm_to_json(norm)},
                {"num_users", num_users},
                {"steps", steps},
                {"features", features},
                {"weights", {spec.weights.alpha, spec.weights.beta, spec.weights.gamma}}};
    }

    void save(const std::string& path) { nn::save_checkpoint(path, net, metadata()); }

    static TaskModel load(const std::string& path) {
        auto ck = nn::load_checkpoint<float>(path);
        TaskModel m;
        try {
            const auto& e = ck.extra;
            m.spec.task = task_from_name(e.at("task").get<std::string>());
            m.norm = prep::norm_from_json(e.at("norm"));
            m.num_users = e.at("num_users").get<int>();
            m.steps = e.at("steps").get<int>();
            m.features = e.at("features").get<int>();
            const auto w = e.at("weights").get<std::vector<double>>();
            if (w.size() == 3) m.spec.weights = {w[0], w[1], w[2]};
        } catch (const nlohmann::json::exception& ex) {
            throw DataError(std::string("checkpoint metadata is incomplete: ") + ex.what());
        }
        m.spec.cell = ck.network.spec().cell;
        m.spec.hidden = ck.network.spec().hidden;
        m.spec.layers = ck.network.spec().layers;
        m.spec.bias = ck.network.spec().bias;
        m.spec.allow_bigru_classification = true;
        m.net = std::move(ck.network);
        return m;
    }

    void check_compatible(const std::vector<Frame>& frames) const {
        for (const auto& f : frames) {
            if (f.steps != steps || f.features != features) {
                throw CompatibilityError("model expects frames of " + std::to_string(steps) + " x " + std::to_string(features) +
                                         ", dataset has " + std::to_string(f.steps) + " x " + std::to_string(f.features));
            }
        }
    }

    /// One forward pass per batch; every head present in the model is reported.
    std::vector<Prediction> predict(const std::vector<Frame>& frames, int batch = 256) {
        check_compatible(frames);
        std::vector<Prediction> out;
        out.reserve(frames.size());
        nn::TrainData d;
        d.steps = steps;
        d.features = features;
        std::vector<float> buf;
        for (std::size_t start = 0; start < frames.size(); start += static_cast<std::size_t>(batch)) {
            const std::size_t n = std::min(frames.size() - start, static_cast<std::size_t>(batch));
            d.x.clear();
            std::vector<std::size_t> idx(n);
            for (std::size_t i = 0; i < n; ++i) {
                normalise_into(frames[start + i], norm, buf);
                d.x.insert(d.x.end(), buf.begin(), buf.end());
                idx[i] = i;
            }
            const auto o = net.forward(nn::make_inputs<float>(d, idx));
            for (std::size_t i = 0; i < n; ++i) {
                const auto c = static_cast<Eigen::Index>(i);
                Prediction p;
                if (net.has_activity()) p.activity.assign(o.activity.col(c).data(), o.activity.col(c).data() + o.activity.rows());
                if (net.has_identity()) p.identity.assign(o.identity.col(c).data(), o.identity.col(c).data() + o.identity.rows());
                if (net.has_track()) p.coord = denormalise_coord(o.track(0, c), o.track(1, c));
                out.push_back(std::move(p));
            }
        }
        return out;
    }
};

inline nn::ModelSpec network_spec(const TaskModelSpec& s, int features, int num_users, std::uint64_t seed) {
    nn::ModelSpec m;
    m.cell = s.cell;
    m.input = features;
    m.hidden = s.hidden;
    m.layers = s.layers;
    m.bias = s.bias;
    m.seed = seed;
    m.activity_classes = s.task == TaskKind::activity || s.task == TaskKind::combined ? csi::num_activities : 0;
    m.identity_classes = s.task == TaskKind::auth || s.task == TaskKind::combined ? num_users : 0;
    m.track = s.task == TaskKind::track || s.task == TaskKind::combined;
    return m;
}

struct TrainedTask {
    TaskModel model;
    std::vector<nn::EpochRecord> history;
};

inline TrainedTask train_task_model(const TaskModelSpec& spec, const std::vector<Frame>& train_frames, const std::vector<Frame>& val_frames,
                                    const prep::NormStats& norm, int num_users, nn::TrainConfig cfg) {
    spec.validate();
    if ((spec.task == TaskKind::auth || spec.task == TaskKind::combined) && num_users < 2) {
        throw ConfigError("authentication needs at least two enrolled users");
    }
    const auto train = make_train_data(train_frames, spec.task, norm, num_users);
    if (train.size() == 0) {
        const char* what = spec.task == TaskKind::track ? "position labels (walking frames)"
                           : spec.task == TaskKind::auth ? "user labels" : "activity labels";
        throw DataError(std::string("training split has no frames with ") + what + " for task " + task_name(spec.task));
    }
    const auto val = make_train_data(val_frames, spec.task, norm, num_users);
    TrainedTask out;
    out.model.spec = spec;
    out.model.norm = norm;
    out.model.num_users = num_users;
    out.model.steps = train.steps;
    out.model.features = train.features;
    out.model.net = nn::Network<float>(network_spec(spec, train.features, num_users, named_seed(cfg.seed, "init")));
    cfg.weights = spec.loss_weights();
    out.history = nn::train(out.model.net, train, &val, cfg);
    return out;
}

/// History CSV: one row per epoch with component and weighted losses.
inline void write_history_csv(std::ostream& os, const std::vector<nn::EpochRecord>& h, TaskKind task) {
    os << "epoch,train_loss,train_activity_loss,train_auth_loss,train_track_loss,val_loss,val_activity_loss,val_auth_loss,"
          "val_track_loss,val_activity_acc,val_auth_acc,val_track_rmse_cm,val_metric\n";
    auto num = [](double v) {
        if (!std::isfinite(v)) return std::string();
        char b[32];
        std::snprintf(b, sizeof b, "%.6g", v);
        return std::string(b);
    };
    for (const auto& r : h) {
        const double rmse_cm = r.val.track_rmse * csi::area_diagonal();
        const double metric = task == TaskKind::track ? rmse_cm : task == TaskKind::auth ? r.val.identity_accuracy : r.val.activity_accuracy;
        os << r.epoch << ',' << num(r.train.total) << ',' << num(r.train.activity) << ',' << num(r.train.identity) << ','
           << num(r.train.track) << ',' << num(r.val.loss.total) << ',' << num(r.val.loss.activity) << ',' << num(r.val.loss.identity)
           << ',' << num(r.val.loss.track) << ',' << num(r.val.activity_accuracy) << ',' << num(r.val.identity_accuracy) << ','
           << num(rmse_cm) << ',' << num(metric) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Weighted soft voting

namespace detail {

inline std::vector<double> vote(const std::vector<const std::vector<double>*>& dists, const std::vector<double>& w) {
    std::vector<double> acc;
    double total = 0.0;
    for (std::size_t m = 0; m < dists.size(); ++m) {
        const auto& d = *dists[m];
        if (acc.empty()) acc.assign(d.size(), 0.0);
        if (d.size() != acc.size()) throw ShapeError("ensemble members disagree on the number of classes");
        for (std::size_t k = 0; k < d.size(); ++k) acc[k] += w[m] * d[k];
        total += w[m];
    }
    if (total > 0.0) {
        for (auto& v : acc) v /= total;
    }
    return acc;
}

inline void check_weights(const std::vector<double>& w) {
    if (w.empty()) throw ConfigError("ensemble has no members");
    double s = 0.0;
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("ensemble weights must be finite and non-negative");
        s += v;
    }
    if (!(s > 0.0)) throw ConfigError("ensemble weights are all zero");
}

} // namespace detail

/// Combines one prediction per member. Each head is voted over the members
/// that have it; distributions are the weight-normalised sums.
inline Prediction ensemble_combine(const std::vector<Prediction>& members, const std::vector<double>& weights) {
    detail::check_weights(weights);
    if (members.size() != weights.size()) throw ConfigError("ensemble weight count differs from member count");
    Prediction out;
    std::vector<const std::vector<double>*> act, id;
    std::vector<double> wa, wi;
    double wx = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t m = 0; m < members.size(); ++m) {
        const auto& p = members[m];
        if (!p.activity.empty()) {
            act.push_back(&p.activity);
            wa.push_back(weights[m]);
        }
        if (!p.identity.empty()) {
            id.push_back(&p.identity);
            wi.push_back(weights[m]);
        }
        if (p.coord) {
            wx += weights[m];
            sx += weights[m] * p.coord->x;
            sy += weights[m] * p.coord->y;
        }
    }
    if (!act.empty()) out.activity = detail::vote(act, wa);
    if (!id.empty()) out.identity = detail::vote(id, wi);
    if (wx > 0.0) out.coord = csi::Point2{sx / wx, sy / wx};
    return out;
}

struct EnsembleMember {
    TaskModel* model = nullptr;
    double weight = 1.0;
};

inline std::vector<Prediction> ensemble_predict(const std::vector<EnsembleMember>& members, const std::vector<Frame>& frames) {
    if (members.empty()) throw ConfigError("ensemble has no members");
    std::vector<double> w;
    for (const auto& m : members) w.push_back(m.weight);
    detail::check_weights(w);
    std::vector<std::vector<Prediction>> per;
    for (const auto& m : members) per.push_back(m.model->predict(frames));
    std::vector<Prediction> out;
    out.reserve(frames.size());
    std::vector<Prediction> row(members.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        for (std::size_t m = 0; m < members.size(); ++m) row[m] = per[m][i];
        out.push_back(ensemble_combine(row, w));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Confidence thresholds

inline void check_threshold(double t) {
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("confidence threshold must lie in (0, 1], got " + std::to_string(t));
}

/// Accepted user id, or nullopt for a rejected (unknown) person.
inline std::optional<int> authenticate(const Prediction& p, double threshold = 0.999) {
    check_threshold(threshold);
    if (p.identity.empty()) return std::nullopt;
    if (p.identity_confidence() >= threshold) return p.identity_class();
    return std::nullopt;
}

/// Activity id, or nullopt to abstain.
inline std::optional<int> classify_activity(const Prediction& p, double threshold = 0.75) {
    check_threshold(threshold);
    if (p.activity.empty()) return std::nullopt;
    if (p.activity_confidence() >= threshold) return p.activity_class();
    return std::nullopt;
}

struct RobustnessRow {
    double threshold = 0.0;
    double seen_identity = 0.0;   ///< fraction of seen-user predictions accepted
    double unseen_identity = 0.0;
    double seen_activity = 0.0;   ///< fraction of activity predictions emitted (not abstained)
    double unseen_activity = 0.0;
};

namespace detail {

inline double accept_rate(const std::vector<Prediction>& preds, double t, bool identity) {
    std::size_t n = 0, k = 0;
    for (const auto& p : preds) {
        const auto& d = identity ? p.identity : p.activity;
        if (d.empty()) continue;
        ++n;
        k += Prediction::confidence_of(d) >= t;
    }
    return n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n);
}

} // namespace detail

/// Per-threshold fraction of predictions whose confidence reaches the margin,
/// on seen and unseen users. Thresholds need not be inside (0, 1].
inline std::vector<RobustnessRow> robustness_report(const std::vector<Prediction>& seen, const std::vector<int>& seen_users,
                                                    const std::vector<Prediction>& unseen, const std::vector<int>& unseen_users,
                                                    const std::vector<double>& thresholds) {
    const std::set<int> a(seen_users.begin(), seen_users.end());
    for (int u : unseen_users) {
        if (u >= 0 && a.count(u)) throw DataError("user " + std::to_string(u) + " appears in both the seen and unseen sets");
    }
    std::vector<RobustnessRow> rows;
    for (double t : thresholds) {
        RobustnessRow r;
        r.threshold = t;
        r.seen_identity = detail::accept_rate(seen, t, true);
        r.unseen_identity = detail::accept_rate(unseen, t, true);
        r.seen_activity = detail::accept_rate(seen, t, false);
        r.unseen_activity = detail::accept_rate(unseen, t, false);
        rows.push_back(r);
    }
    return rows;
}

/// `count` thresholds evenly spaced over [lo, hi].
inline std::vector<double> threshold_sweep(double lo, double hi, int count) {
    if (count < 2) throw ConfigError("a sweep needs at least two thresholds");
    std::vector<double> t(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) t[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
    return t;
}

// ---------------------------------------------------------------------------
// Prediction records

struct PredictionRecord {
    std::size_t frame_id = 0;
    double timestamp = 0.0; ///< window start within its stream, s
    int stream_id = 0;
    std::optional<int> activity;
    double activity_confidence = 0.0;
    std::optional<int> user; ///< nullopt: rejected
    double user_confidence = 0.0;
    std::optional<csi::Point2> coord;
};

inline std::vector<PredictionRecord> make_records(const std::vector<Prediction>& preds, const std::vector<Frame>& frames, double fs,
                                                  double auth_threshold, double activity_threshold) {
    if (preds.size() != frames.size()) throw ShapeError("prediction count differs from frame count");
    std::vector<PredictionRecord> out;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        PredictionRecord r;
        r.frame_id = i;
        r.stream_id = frames[i].stream_id;
        r.timestamp = frames[i].start_index / fs;
        r.activity = classify_activity(preds[i], activity_threshold);
        r.activity_confidence = preds[i].activity_confidence();
        r.user = authenticate(preds[i], auth_threshold);
        r.user_confidence = preds[i].identity_confidence();
        r.coord = preds[i].coord;
        out.push_back(r);
    }
    return out;
}

namespace detail {

inline std::string fmt(double v, const char* f = "%.6f") {
    char b[48];
    std::snprintf(b, sizeof b, f, v);
    return b;
}

} // namespace detail

inline void write_records_csv(std::ostream& os, const std::vector<PredictionRecord>& recs) {
    os << "frame_id,stream_id,timestamp,activity,activity_confidence,user,user_confidence,x,y\n";
    for (const auto& r : recs) {
        os << r.frame_id << ',' << r.stream_id << ',' << detail::fmt(r.timestamp, "%.3f") << ','
           << (r.activity ? std::string(csi::activity_name(*r.activity)) : std::string("ABSTAIN")) << ','
           << detail::fmt(r.activity_confidence) << ',' << (r.user ? std::to_string(*r.user) : std::string("REJECTED")) << ','
           << detail::fmt(r.user_confidence) << ',' << (r.coord ? detail::fmt(r.coord->x, "%.2f") : "") << ','
           << (r.coord ? detail::fmt(r.coord->y, "%.2f") : "") << '\n';
    }
}

inline void write_records_jsonl(std::ostream& os, const std::vector<PredictionRecord>& recs) {
    auto round = [](double v, double scale) { return std::round(v * scale) / scale; };
    for (const auto& r : recs) {
        nlohmann::ordered_json j;
        j["frame_id"] = r.frame_id;
        j["stream_id"] = r.stream_id;
        j["timestamp"] = round(r.timestamp, 1e3);
        j["activity"] = r.activity ? nlohmann::ordered_json(std::string(csi::activity_name(*r.activity))) : nlohmann::ordered_json("ABSTAIN");
        j["activity_confidence"] = round(r.activity_confidence, 1e6);
        j["user"] = r.user ? nlohmann::ordered_json(*r.user) : nlohmann::ordered_json("REJECTED");
        j["user_confidence"] = round(r.user_confidence, 1e6);
        j["x"] = r.coord ? nlohmann::ordered_json(round(r.coord->x, 1e2)) : nlohmann::ordered_json(nullptr);
        j["y"] = r.coord ? nlohmann::ordered_json(round(r.coord->y, 1e2)) : nlohmann::ordered_json(nullptr);
        os << j.dump() << '\n';
    }
}

} // namespace sensekit::tasks
