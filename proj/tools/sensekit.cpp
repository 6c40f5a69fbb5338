// sensekit: simulate, preprocess, train, eval, infer, robustness, plot.
//
// Stages talk only through files: a stream directory (manifest.json +
// streams/*.csi), a frame directory (<split>.frm + preprocess.json) and
// checkpoints (.nnck). Exit codes: 0 ok, 2 usage/config, 3 data, 4 numeric.

#include <sensekit/channel_sim.hpp>
#include <sensekit/preprocess.hpp>
#include <sensekit/tasks.hpp>
#include <sensekit/trajectory_eval.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sensekit;
using json = nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::string data;
    std::string model;
    std::string ensemble;
    std::string out;
    std::string split = "test";
    std::string task = "activity";
    std::string cell = "gru";
    std::string format = "csv";
    std::uint64_t seed = 7;
    int epochs = 60;
    std::optional<double> threshold;
    std::vector<std::string> sets;
};

// ---------------------------------------------------------------------------
// --set key=value overrides

json parse_value(const std::string& s) {
    try {
        return json::parse(s);
    } catch (const json::exception&) {
        return s;
    }
}

/// Applies dotted-key overrides. With `strict`, keys must already exist in `j`.
void apply_sets(json& j, const std::vector<std::string>& sets, bool strict) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got \"" + kv + "\"");
        const std::string key = kv.substr(0, eq);
        json* node = &j;
        std::stringstream ks(key);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ks, part, '.')) parts.push_back(part);
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (!node->is_object()) throw ConfigError("--set " + key + ": \"" + parts[i - 1] + "\" is not an object");
            if (strict && !node->contains(parts[i])) throw ConfigError("unknown setting \"" + key + "\"");
            node = &(*node)[parts[i]];
        }
        *node = parse_value(kv.substr(eq + 1));
    }
}

template <typename T>
T setting(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("setting \"" + key + "\": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Files

json read_json_file(const fs::path& p, bool config) {
    std::ifstream is(p);
    if (!is) {
        const std::string msg = "cannot open " + p.string();
        if (config) throw ConfigError(msg);
        throw DataError(msg);
    }
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        const std::string msg = p.string() + ": " + e.what();
        if (config) throw ConfigError(msg);
        throw DataError(msg);
    }
}

void require_path(const std::string& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("--") + what + " is required");
    if (!fs::exists(p)) throw DataError(std::string(what) + " path does not exist: " + p);
}

/// Output directory built under a temporary name and renamed into place.
class StagedDir {
public:
    explicit StagedDir(const std::string& out) : final_(out) {
        if (out.empty()) throw ConfigError("--out is required");
        const fs::path p(out);
        tmp_ = (p.has_parent_path() ? p.parent_path() : fs::path(".")) / ("." + p.filename().string() + ".partial");
        fs::remove_all(tmp_);
        fs::create_directories(tmp_);
    }
    ~StagedDir() {
        if (!done_) {
            std::error_code ec;
            fs::remove_all(tmp_, ec);
        }
    }
    const fs::path& path() const { return tmp_; }
    void commit() {
        fs::remove_all(final_);
        fs::rename(tmp_, final_);
        done_ = true;
    }

private:
    fs::path final_, tmp_;
    bool done_ = false;
};

/// Writes `content` to `out` (or stdout when empty) via a temporary file.
void write_output(const std::string& out, const std::string& content) {
    if (out.empty()) {
        std::cout << content;
        return;
    }
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const fs::path tmp = p.string() + ".partial";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("cannot open " + tmp.string() + " for writing");
        os << content;
    }
    fs::rename(tmp, p);
}

struct FrameDir {
    json meta;
    prep::NormStats norm;
    int num_users = 0;
    std::vector<int> unseen_users;
};

FrameDir load_frame_dir(const std::string& dir) {
    require_path(dir, "data");
    FrameDir d;
    d.meta = read_json_file(fs::path(dir) / "preprocess.json", false);
    try {
        d.norm = prep::norm_from_json(d.meta.at("norm"));
        d.num_users = d.meta.at("num_users").get<int>();
        d.unseen_users = d.meta.at("unseen_users").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("preprocess.json: ") + e.what());
    }
    return d;
}

/// Frames of one split from a frame directory, or every frame of a .frm file.
std::vector<csi::Frame> load_split(const std::string& data, const std::string& split) {
    if (fs::is_regular_file(data)) return prep::load_frames(data).frames;
    csi::split_from_name(split);
    const auto p = fs::path(data) / (split + ".frm");
    if (!fs::exists(p)) throw DataError("frame file missing: " + p.string());
    return prep::load_frames(p).frames;
}

// ---------------------------------------------------------------------------
// Models

struct LoadedModels {
    std::vector<tasks::TaskModel> models;
    std::vector<double> weights;
};

LoadedModels load_models(const Options& o) {
    LoadedModels m;
    std::vector<std::pair<std::string, double>> specs;
    if (!o.ensemble.empty()) {
        std::stringstream ss(o.ensemble);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            double w = 1.0;
            const auto colon = item.rfind(':');
            if (colon != std::string::npos) {
                try {
                    std::size_t used = 0;
                    w = std::stod(item.substr(colon + 1), &used);
                    if (used != item.size() - colon - 1) throw std::invalid_argument("trailing characters");
                    item = item.substr(0, colon);
                } catch (const std::exception&) {
                    throw ConfigError("--ensemble: bad weight in \"" + item + "\"");
                }
            }
            specs.emplace_back(item, w);
        }
    } else if (!o.model.empty()) {
        specs.emplace_back(o.model, 1.0);
    } else {
        throw ConfigError("one of --model or --ensemble is required");
    }
    for (const auto& [path, w] : specs) {
        require_path(path, "model");
        m.models.push_back(tasks::TaskModel::load(path));
        m.weights.push_back(w);
    }
    tasks::detail::check_weights(m.weights);
    return m;
}

std::vector<tasks::Prediction> predict(LoadedModels& m, const std::vector<csi::Frame>& frames) {
    std::vector<tasks::EnsembleMember> members;
    for (std::size_t i = 0; i < m.models.size(); ++i) members.push_back({&m.models[i], m.weights[i]});
    return tasks::ensemble_predict(members, frames);
}

bool has_head(const LoadedModels& m, tasks::TaskKind k) {
    for (const auto& x : m.models) {
        if (x.spec.task == k || x.spec.task == tasks::TaskKind::combined) return true;
    }
    return false;
}

int identity_classes(const LoadedModels& m) {
    for (const auto& x : m.models) {
        if (x.net.has_identity()) return x.num_users;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const Options& o) {
    json cj = json::object();
    if (!o.config.empty()) {
        if (!fs::exists(o.config)) throw ConfigError("config file not found: " + o.config);
        cj = read_json_file(o.config, true);
    }
    apply_sets(cj, o.sets, false);
    const auto cfg = sim::dataset_config_from_json(cj, o.seed);
    const auto trials = sim::plan_trials(cfg, o.seed);

    StagedDir out(o.out);
    fs::create_directories(out.path() / "streams");
    detail::parallel_for(trials.size(), [&](std::size_t i) {
        csi::save_stream(out.path() / "streams" / sim::stream_file_name(trials[i].stream_id), sim::simulate(cfg, trials[i]));
    });
    csi::save_manifest(out.path() / "manifest.json", sim::make_manifest(cfg, trials, o.seed));
    {
        std::ofstream os(out.path() / "config.json");
        os << sim::dataset_config_to_json(cfg).dump(2) << '\n';
    }
    out.commit();

    std::array<int, csi::num_activities> counts{};
    for (const auto& t : trials) ++counts[static_cast<std::size_t>(t.activity)];
    std::cout << "simulated " << trials.size() << " trials for " << cfg.users.size() << " users\n";
    for (int k = 0; k < csi::num_activities; ++k) {
        if (k == csi::noac_id) continue;
        std::cout << "  " << csi::activity_name(k) << ": " << counts[static_cast<std::size_t>(k)] << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// preprocess

int cmd_preprocess(const Options& o) {
    require_path(o.data, "data");
    const fs::path root(o.data);
    const auto manifest = csi::load_manifest(root / "manifest.json");
    prep::PreprocessConfig defaults;
    json pj = {{"zero_threshold", defaults.zero_threshold}, {"filter_order", defaults.filter_order},
               {"cutoff", defaults.cutoff},                 {"window", defaults.window},
               {"hop", defaults.hop},                       {"balance_tolerance", defaults.balance_tolerance}};
    if (!o.config.empty()) {
        if (!fs::exists(o.config)) throw ConfigError("config file not found: " + o.config);
        const auto file = read_json_file(o.config, true);
        for (const auto& [k, v] : file.value("preprocess", file).items()) {
            if (!pj.contains(k)) throw ConfigError("unknown preprocess setting \"" + k + "\"");
            pj[k] = v;
        }
    }
    apply_sets(pj, o.sets, true);
    prep::PreprocessConfig cfg;
    cfg.zero_threshold = setting<double>(pj, "zero_threshold");
    cfg.filter_order = setting<int>(pj, "filter_order");
    cfg.cutoff = setting<double>(pj, "cutoff");
    cfg.window = setting<double>(pj, "window");
    cfg.hop = setting<int>(pj, "hop");
    cfg.balance_tolerance = setting<double>(pj, "balance_tolerance");
    cfg.validate(manifest.simo.sampling_rate);

    std::vector<csi::Split> split_of;
    for (const auto& e : manifest.entries) {
        if (!fs::exists(root / e.file)) throw DataError("stream listed in manifest is missing: " + e.file);
        split_of.push_back(e.split);
    }
    const int enrolled = manifest.num_users - static_cast<int>(manifest.unseen_users.size());
    auto ds = prep::preprocess_dataset(
        manifest.entries.size(), [&](std::size_t i) { return csi::load_stream(root / manifest.entries[i].file); }, split_of, enrolled, cfg,
        named_seed(o.seed, "preprocess"));

    StagedDir out(o.out);
    for (csi::Split split : {csi::Split::train, csi::Split::val, csi::Split::test, csi::Split::unseen}) {
        const auto& frames = ds.splits[split];
        prep::FrameSet set;
        set.frames = frames;
        if (!frames.empty()) {
            set.steps = frames.front().steps;
            set.features = frames.front().features;
        }
        set.meta = {{"split", std::string(csi::split_name(split))}};
        prep::save_frames(out.path() / (std::string(csi::split_name(split)) + ".frm"), set);
    }
    json meta = {{"seed", o.seed},
                 {"config", pj},
                 {"sample_rate", manifest.simo.sampling_rate},
                 {"dead_subcarriers", ds.dead_subcarriers},
                 {"num_users", enrolled},
                 {"unseen_users", manifest.unseen_users},
                 {"norm", prep::norm_to_json(ds.norm)}};
    {
        std::ofstream os(out.path() / "preprocess.json");
        os << meta.dump(2) << '\n';
    }
    out.commit();

    std::cout << "dead subcarriers: " << ds.dead_subcarriers.size() << '\n';
    for (const auto& [split, frames] : ds.splits) {
        std::cout << "  " << csi::split_name(split) << ": " << frames.size() << " frames\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const Options& o) {
    const auto dir = load_frame_dir(o.data);
    tasks::TaskModelSpec spec;
    spec.task = tasks::task_from_name(o.task);
    spec.cell = nn::cell_from_name(o.cell);
    nn::TrainConfig tc;
    json tj = {{"hidden", spec.hidden},
               {"layers", spec.layers},
               {"bias", spec.bias},
               {"allow_bigru_classification", spec.allow_bigru_classification},
               {"alpha", spec.weights.alpha},
               {"beta", spec.weights.beta},
               {"gamma", spec.weights.gamma},
               {"lr", tc.adam.lr},
               {"clip", tc.adam.clip_norm},
               {"batch", tc.batch},
               {"patience", tc.patience}};
    apply_sets(tj, o.sets, true);
    spec.hidden = setting<int>(tj, "hidden");
    spec.layers = setting<int>(tj, "layers");
    spec.bias = setting<bool>(tj, "bias");
    spec.allow_bigru_classification = setting<bool>(tj, "allow_bigru_classification");
    spec.weights = {setting<double>(tj, "alpha"), setting<double>(tj, "beta"), setting<double>(tj, "gamma")};
    if (spec.hidden < 1 || spec.layers < 1) throw ConfigError("hidden and layers must be >= 1");
    tc.epochs = o.epochs;
    tc.seed = named_seed(o.seed, "train");
    tc.adam.lr = setting<double>(tj, "lr");
    tc.adam.clip_norm = setting<double>(tj, "clip");
    tc.batch = setting<int>(tj, "batch");
    tc.patience = setting<int>(tj, "patience");

    const auto train = load_split(o.data, "train");
    const auto val = load_split(o.data, "val");
    const auto t0 = std::chrono::steady_clock::now();
    auto trained = tasks::train_task_model(spec, train, val, dir.norm, dir.num_users, tc);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    StagedDir out(o.out);
    trained.model.save((out.path() / "model.nnck").string());
    {
        std::ofstream os(out.path() / "history.csv");
        tasks::write_history_csv(os, trained.history, spec.task);
    }
    {
        // wall-clock data lives only in this sidecar
        std::ofstream os(out.path() / "run.log");
        os << "task " << o.task << " cell " << o.cell << " epochs " << trained.history.size() << " seconds " << secs << '\n';
    }
    out.commit();
    std::cout << "trained " << o.task << "/" << o.cell << " for " << trained.history.size() << " epochs\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const Options& o) {
    const auto dir = load_frame_dir(o.data);
    auto models = load_models(o);
    const auto frames = load_split(o.data, o.split);
    nlohmann::ordered_json report;
    report["split"] = o.split;
    report["frames"] = frames.size();

    if (has_head(models, tasks::TaskKind::activity)) {
        const auto preds = predict(models, frames);
        std::vector<int> p, t;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            p.push_back(preds[i].activity_class());
            t.push_back(frames[i].activity);
        }
        if (!frames.empty()) {
            report["activity"] = eval::metrics_to_json(eval::classification_metrics(p, t, csi::num_activities),
                                                       {csi::activity_names.begin(), csi::activity_names.end()});
        }
    }
    if (has_head(models, tasks::TaskKind::auth)) {
        const int K = identity_classes(models);
        const auto sel = tasks::select_frames(frames, tasks::TaskKind::auth, K);
        const auto preds = predict(models, sel);
        std::vector<int> p, t;
        for (std::size_t i = 0; i < sel.size(); ++i) {
            p.push_back(preds[i].identity_class());
            t.push_back(sel[i].user);
        }
        if (!sel.empty()) {
            std::vector<std::string> names;
            for (int u = 0; u < K; ++u) names.push_back("user" + std::to_string(u));
            report["identity"] = eval::metrics_to_json(eval::classification_metrics(p, t, K), names);
        }
    }
    if (has_head(models, tasks::TaskKind::track)) {
        const auto sel = tasks::select_frames(frames, tasks::TaskKind::track, dir.num_users);
        const auto preds = predict(models, sel);
        std::vector<csi::Point2> p, t;
        for (std::size_t i = 0; i < sel.size(); ++i) {
            p.push_back(*preds[i].coord);
            t.push_back(sel[i].coord);
        }
        report["tracking"] = eval::coordinate_error_to_json(eval::coordinate_mse(p, t));
    }
    write_output(o.out, report.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// infer

int cmd_infer(const Options& o) {
    if (o.data.empty()) throw ConfigError("--data is required");
    if (!fs::exists(o.data)) throw DataError("data path does not exist: " + o.data);
    auto models = load_models(o);
    const auto frames = load_split(o.data, o.split);
    double fs_hz = 100.0;
    if (fs::is_directory(o.data)) fs_hz = load_frame_dir(o.data).meta.value("sample_rate", fs_hz);
    const auto preds = predict(models, frames);
    const double auth_t = o.threshold.value_or(0.999);
    const auto recs = tasks::make_records(preds, frames, fs_hz, auth_t, 0.75);
    std::ostringstream os;
    if (o.format == "csv") {
        tasks::write_records_csv(os, recs);
    } else {
        tasks::write_records_jsonl(os, recs);
    }
    write_output(o.out, os.str());
    return 0;
}

// ---------------------------------------------------------------------------
// robustness

int cmd_robustness(const Options& o) {
    const auto dir = load_frame_dir(o.data);
    auto models = load_models(o);
    json rj = {{"lo", 0.5}, {"hi", 0.999}, {"points", 20}};
    apply_sets(rj, o.sets, true);
    const auto thresholds = tasks::threshold_sweep(setting<double>(rj, "lo"), setting<double>(rj, "hi"), setting<int>(rj, "points"));

    std::vector<csi::Frame> seen, unseen;
    for (auto& f : load_split(o.data, o.split)) {
        if (f.activity != csi::noac_id && f.user >= 0) seen.push_back(std::move(f));
    }
    for (auto& f : load_split(o.data, "unseen")) {
        if (f.activity != csi::noac_id) unseen.push_back(std::move(f));
    }
    std::vector<int> seen_users, unseen_users;
    for (const auto& f : seen) seen_users.push_back(f.user);
    for (const auto& f : unseen) unseen_users.push_back(f.user);
    const auto rows = tasks::robustness_report(predict(models, seen), seen_users, predict(models, unseen), unseen_users, thresholds);

    std::ostringstream os;
    os << "threshold,seen_identity,unseen_identity,seen_activity,unseen_activity\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f\n", r.threshold, r.seen_identity, r.unseen_identity, r.seen_activity,
                      r.unseen_activity);
        os << buf;
    }
    write_output(o.out, os.str());
    if (o.threshold && !o.out.empty()) {
        const auto at = tasks::robustness_report(predict(models, seen), seen_users, predict(models, unseen), unseen_users, {*o.threshold});
        std::cout << "threshold " << *o.threshold << ": seen " << at[0].seen_identity << ", unseen " << at[0].unseen_identity << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// plot

int cmd_plot(const Options& o) {
    load_frame_dir(o.data);
    auto models = load_models(o);
    if (!has_head(models, tasks::TaskKind::track)) throw ConfigError("plot needs a model with a tracking head");
    const auto frames = load_split(o.data, o.split);
    const auto paths = sim::walk_paths();

    StagedDir out(o.out);
    nlohmann::ordered_json summary = nlohmann::ordered_json::array();
    for (int p = 0; p < 4; ++p) {
        const int activity = static_cast<int>(csi::Activity::walk1) + p;
        std::vector<csi::Frame> sel;
        for (const auto& f : frames) {
            if (f.activity == activity) sel.push_back(f);
        }
        const auto preds = predict(models, sel);
        std::vector<csi::Point2> pts, truth;
        for (std::size_t i = 0; i < sel.size(); ++i) {
            pts.push_back(*preds[i].coord);
            truth.push_back(sel[i].coord);
        }
        eval::TrajectoryFit fit;
        try {
            fit = eval::fit_trajectory(pts);
        } catch (const FitError& e) {
            throw FitError("path " + std::to_string(p + 1) + ": " + e.what());
        }
        const auto a = paths[static_cast<std::size_t>(p)][0], b = paths[static_cast<std::size_t>(p)][1];
        const double true_angle = eval::fit_trajectory({a, b}).angle_deg();
        const std::string stem = "path" + std::to_string(p + 1);
        {
            std::ofstream os(out.path() / (stem + ".svg"));
            eval::write_trajectory_svg(os, fit, a, b, "path " + std::to_string(p + 1));
        }
        {
            std::ofstream os(out.path() / (stem + ".csv"));
            eval::write_trajectory_csv(os, fit, truth);
        }
        nlohmann::ordered_json row;
        row["path"] = p + 1;
        row["points"] = pts.size();
        row["fitted_angle_deg"] = std::round(fit.angle_deg() * 1e4) / 1e4;
        row["true_angle_deg"] = true_angle;
        row["angle_error_deg"] = std::round(eval::angle_between_deg(fit.angle_deg(), true_angle) * 1e4) / 1e4;
        summary.push_back(row);
    }
    {
        std::ofstream os(out.path() / "summary.json");
        os << summary.dump(2) << '\n';
    }
    out.commit();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sensekit: WiFi CSI sensing toolkit"};
    app.require_subcommand(1);
    Options o;
    std::string threshold_str;

    auto add_common = [&](CLI::App* c) {
        c->add_option("--seed", o.seed, "Root seed")->capture_default_str();
        c->add_option("--set", o.sets, "Override a setting, key=value (repeatable)");
    };
    auto add_models = [&](CLI::App* c) {
        c->add_option("--model", o.model, "Checkpoint (.nnck)");
        c->add_option("--ensemble", o.ensemble, "Comma-separated checkpoints with optional :weight suffixes");
        c->add_option("--split", o.split, "Split to read from a frame directory")->capture_default_str();
    };

    auto* sim = app.add_subcommand("simulate", "Simulate CSI streams and write a manifest");
    sim->add_option("--config", o.config, "Scene/user/trial config (JSON)");
    sim->add_option("--out", o.out, "Output directory")->required();
    add_common(sim);

    auto* pre = app.add_subcommand("preprocess", "Turn simulated streams into frame datasets");
    pre->add_option("--data", o.data, "Stream directory from simulate")->required();
    pre->add_option("--config", o.config, "Preprocess settings (JSON)");
    pre->add_option("--out", o.out, "Output directory")->required();
    add_common(pre);

    auto* train = app.add_subcommand("train", "Train a task model");
    train->add_option("--data", o.data, "Frame directory from preprocess")->required();
    train->add_option("--task", o.task, "activity|auth|track|combined")->capture_default_str();
    train->add_option("--cell", o.cell, "rnn|lstm|gru|bigru")->capture_default_str();
    train->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
    train->add_option("--out", o.out, "Output directory")->required();
    add_common(train);

    auto* ev = app.add_subcommand("eval", "Metrics report (JSON)");
    ev->add_option("--data", o.data, "Frame directory")->required();
    ev->add_option("--out", o.out, "Output file (default stdout)");
    add_models(ev);
    add_common(ev);

    auto* inf = app.add_subcommand("infer", "Per-frame predictions");
    inf->add_option("--data", o.data, "Frame directory or .frm file")->required();
    inf->add_option("--out", o.out, "Output file (default stdout)");
    inf->add_option("--threshold", threshold_str, "Authentication confidence threshold");
    inf->add_option("--format", o.format, "csv|json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    add_models(inf);
    add_common(inf);

    auto* rob = app.add_subcommand("robustness", "Acceptance rates over a threshold sweep (CSV)");
    rob->add_option("--data", o.data, "Frame directory")->required();
    rob->add_option("--out", o.out, "Output file (default stdout)");
    rob->add_option("--threshold", threshold_str, "Also report this threshold");
    add_models(rob);
    add_common(rob);

    auto* plot = app.add_subcommand("plot", "Fitted trajectory per walking path (SVG + CSV)");
    plot->add_option("--data", o.data, "Frame directory")->required();
    plot->add_option("--out", o.out, "Output directory")->required();
    add_models(plot);
    add_common(plot);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (!threshold_str.empty()) {
            try {
                o.threshold = std::stod(threshold_str);
            } catch (const std::exception&) {
                throw ConfigError("--threshold: not a number: " + threshold_str);
            }
            tasks::check_threshold(*o.threshold);
        }
        if (sim->parsed()) return cmd_simulate(o);
        if (pre->parsed()) return cmd_preprocess(o);
        if (train->parsed()) return cmd_train(o);
        if (ev->parsed()) return cmd_eval(o);
        if (inf->parsed()) return cmd_infer(o);
        if (rob->parsed()) return cmd_robustness(o);
        if (plot->parsed()) return cmd_plot(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
