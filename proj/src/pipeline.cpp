#include "agedetect/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "agedetect/error.hpp"
#include "agedetect/log.hpp"
#include "agedetect/parallel.hpp"

namespace agedetect {

namespace {

using Grid = std::vector<std::pair<std::size_t, std::size_t>>;

[[noreturn]] void bad_config(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

template <typename T>
T config_value(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        bad_config(std::string("config key '") + key + "' has the wrong type");
    }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            bad_config("unknown key '" + key + "' in " + where);
        }
    }
}

std::string selection_string(const ExperimentConfig& cfg) {
    switch (cfg.selection) {
        case SelectionKind::Stat: return "stat";
        case SelectionKind::Sfs: return "sfs";
        case SelectionKind::Manual: {
            std::string s = "manual:";
            for (std::size_t i = 0; i < cfg.manual_channels.size(); ++i) {
                if (i) s += ',';
                s += channel_name(cfg.manual_channels[i]);
            }
            return s;
        }
    }
    return "sfs";
}

void canonical_into(const nlohmann::json& j, std::string& out) {
    switch (j.type()) {
        case nlohmann::json::value_t::object: {
            out += '{';
            bool first = true;
            for (const auto& [key, value] : j.items()) {
                if (!first) out += ',';
                first = false;
                out += nlohmann::json(key).dump();
                out += ':';
                canonical_into(value, out);
            }
            out += '}';
            break;
        }
        case nlohmann::json::value_t::array: {
            out += '[';
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += ',';
                canonical_into(j[i], out);
            }
            out += ']';
            break;
        }
        case nlohmann::json::value_t::number_float: {
            const double v = j.get<double>();
            if (!std::isfinite(v)) {
                out += "null";
                break;
            }
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", v);
            std::string s = buf;
            if (s == "-0.000000") s = "0.000000";
            out += s;
            break;
        }
        default: out += j.dump(); break;
    }
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

nlohmann::json scores_json(const std::array<double, kGroupCount>& scores) {
    nlohmann::json j = nlohmann::json::object();
    for (int g = kMinGroup; g <= kMaxGroup; ++g) j[std::to_string(g)] = scores[group_index(g)];
    return j;
}

nlohmann::json with_tags(nlohmann::json j, const std::string& fingerprint, nlohmann::json provenance) {
    j["config_fingerprint"] = fingerprint;
    j["provenance"] = std::move(provenance);
    return j;
}

}  // namespace

int agd(int true_group, int predicted_group) {
    if (!is_valid_group(true_group) || !is_valid_group(predicted_group)) {
        throw Error(ErrorCode::OutOfRangeGroup,
                    "groups must lie in [2, 8]: " + std::to_string(true_group) + ", " + std::to_string(predicted_group));
    }
    return std::abs(true_group - predicted_group);
}

EvalReport evaluate(std::span<const Prediction> predictions) {
    if (predictions.empty()) throw Error(ErrorCode::EmptyPredictions, "no predictions to evaluate");
    EvalReport r;
    long total_agd = 0;
    long correct = 0;
    std::array<long, kGroupCount> group_agd{};
    std::array<long, kGroupCount> group_count{};
    for (const auto& p : predictions) {
        const int d = agd(p.true_group, p.predicted_group);
        total_agd += d;
        correct += d == 0;
        group_agd[group_index(p.true_group)] += d;
        ++group_count[group_index(p.true_group)];
        ++r.confusion[group_index(p.true_group)][group_index(p.predicted_group)];
    }
    const auto n = static_cast<double>(predictions.size());
    r.accuracy = 100.0 * static_cast<double>(correct) / n;
    r.avg_agd = static_cast<double>(total_agd) / n;
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        const auto k = group_index(g);
        if (group_count[k] > 0) r.per_group_agd[g] = static_cast<double>(group_agd[k]) / static_cast<double>(group_count[k]);
    }
    return r;
}

std::vector<Prediction> per_child_vote(std::span<const Prediction> predictions) {
    std::map<std::string, std::vector<const Prediction*>> by_child;
    for (const auto& p : predictions) by_child[p.child_id].push_back(&p);
    std::vector<Prediction> out;
    for (const auto& [child, preds] : by_child) {
        Prediction v;
        v.child_id = child;
        v.true_group = preds.front()->true_group;
        std::array<int, kGroupCount> votes{};
        for (const auto* p : preds) {
            ++votes[group_index(p->predicted_group)];
            for (int g = 0; g < kGroupCount; ++g) v.scores[g] += p->scores[g] / static_cast<double>(preds.size());
        }
        const auto winner = std::max_element(votes.begin(), votes.end()) - votes.begin();
        v.predicted_group = kMinGroup + static_cast<int>(winner);
        out.push_back(std::move(v));
    }
    return out;
}

Grid default_hmm_grid() {
    Grid g;
    for (std::size_t n : {8, 16, 32, 64}) {
        for (std::size_t m : {4, 8, 16, 32}) g.emplace_back(n, m);
    }
    return g;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) bad_config("config must be a JSON object");
    reject_unknown(j,
                   {"data_dir", "out_dir", "classifier", "selection", "seed", "hmm", "dba", "refit_on_development",
                    "per_child_vote"},
                   "config");
    ExperimentConfig cfg;
    if (!j.contains("data_dir")) bad_config("config needs data_dir");
    cfg.data_dir = config_value<std::string>(j, "data_dir", "");
    cfg.out_dir = config_value<std::string>(j, "out_dir", "");
    if (!j.contains("classifier")) bad_config("config needs classifier");
    cfg.classifier = parse_classifier_name(config_value<std::string>(j, "classifier", ""));
    const auto sel = config_value<std::string>(j, "selection", "sfs");
    if (sel == "stat") {
        cfg.selection = SelectionKind::Stat;
    } else if (sel == "sfs") {
        cfg.selection = SelectionKind::Sfs;
    } else if (sel.rfind("manual:", 0) == 0) {
        cfg.selection = SelectionKind::Manual;
        try {
            cfg.manual_channels = parse_channel_list(sel.substr(7));
        } catch (const Error& e) {
            bad_config(e.what());
        }
        if (cfg.manual_channels.empty()) bad_config("manual selection lists no channels");
    } else {
        bad_config("selection must be stat, sfs or manual:<channels>");
    }
    cfg.seed = config_value<std::uint64_t>(j, "seed", 1);
    cfg.grid = default_hmm_grid();
    if (j.contains("hmm")) {
        const auto& h = j["hmm"];
        if (!h.is_object()) bad_config("hmm must be an object");
        reject_unknown(h,
                       {"n_states", "n_mix", "cov_floor", "max_em_iter", "em_tol", "normalize_by_length", "grid_search",
                        "grid"},
                       "hmm");
        try {
            cfg.hmm = hmm_params_from_json(h, cfg.hmm);
        } catch (const nlohmann::json::exception&) {
            bad_config("hmm block has a value of the wrong type");
        }
        cfg.grid_search = config_value<bool>(h, "grid_search", false);
        if (h.contains("grid")) cfg.grid = config_value<Grid>(h, "grid", {});
    }
    cfg.hmm.seed = cfg.seed;
    if (cfg.hmm.n_states < 1 || cfg.hmm.n_mix < 1) bad_config("n_states and n_mix must be >= 1");
    if (!(cfg.hmm.cov_floor > 0.0)) bad_config("cov_floor must be positive");
    if (!(cfg.hmm.em_tol >= 0.0)) bad_config("em_tol must be non-negative");
    if (cfg.grid.empty()) bad_config("hmm grid is empty");
    for (const auto& [n, m] : cfg.grid) {
        if (n < 1 || m < 1) bad_config("grid entries must be >= 1");
    }
    if (j.contains("dba")) {
        const auto& d = j["dba"];
        if (!d.is_object()) bad_config("dba must be an object");
        reject_unknown(d, {"max_iter", "tol"}, "dba");
        cfg.dba.max_iter = config_value<std::size_t>(d, "max_iter", cfg.dba.max_iter);
        cfg.dba.tol = config_value<double>(d, "tol", cfg.dba.tol);
        if (!(cfg.dba.tol >= 0.0)) bad_config("dba tol must be non-negative");
    }
    cfg.refit_on_development = config_value<bool>(j, "refit_on_development", false);
    cfg.per_child_vote = config_value<bool>(j, "per_child_vote", false);
    return cfg;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
    auto hmm = to_json(cfg.hmm);
    hmm.erase("seed");
    hmm["grid_search"] = cfg.grid_search;
    hmm["grid"] = cfg.grid;
    return {{"data_dir", cfg.data_dir.generic_string()},
            {"out_dir", cfg.out_dir.generic_string()},
            {"classifier", classifier_name(cfg.classifier)},
            {"selection", selection_string(cfg)},
            {"seed", cfg.seed},
            {"hmm", hmm},
            {"dba", {{"max_iter", cfg.dba.max_iter}, {"tol", cfg.dba.tol}}},
            {"refit_on_development", cfg.refit_on_development},
            {"per_child_vote", cfg.per_child_vote}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = read_json(path);
    } catch (const Error& e) {
        bad_config(e.what());
    }
    return config_from_json(j);
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
    auto j = to_json(cfg);
    j.erase("out_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_dump(j))));
    return buf;
}

std::string canonical_dump(const nlohmann::json& j) {
    std::string out;
    canonical_into(j, out);
    return out;
}

nlohmann::json to_json(const Prediction& p) {
    return {{"child_id", p.child_id},
            {"session_index", p.session_index},
            {"true_group", p.true_group},
            {"predicted_group", p.predicted_group},
            {"scores", scores_json(p.scores)}};
}

Prediction prediction_from_json(const nlohmann::json& j) {
    Prediction p;
    p.child_id = j.at("child_id").get<std::string>();
    p.session_index = j.at("session_index").get<std::size_t>();
    p.true_group = j.at("true_group").get<int>();
    p.predicted_group = j.at("predicted_group").get<int>();
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        p.scores[group_index(g)] = j.at("scores").at(std::to_string(g)).get<double>();
    }
    return p;
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per_group = nlohmann::json::object();
    for (const auto& [g, v] : r.per_group_agd) per_group[std::to_string(g)] = v;
    return {{"accuracy", r.accuracy},
            {"avg_agd", r.avg_agd},
            {"per_group_agd", per_group},
            {"confusion", r.confusion},
            {"config_fingerprint", r.config_fingerprint},
            {"versions",
             {{"tool", kToolVersion}, {"dba_format", kDbaFormatVersion}, {"hmm_format", kHmmFormatVersion}}}};
}

EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    try {
        r.accuracy = j.at("accuracy").get<double>();
        r.avg_agd = j.at("avg_agd").get<double>();
        for (const auto& [k, v] : j.at("per_group_agd").items()) r.per_group_agd[std::stoi(k)] = v.get<double>();
        r.confusion = j.at("confusion").get<decltype(r.confusion)>();
        r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ModelFormatError, std::string("report: ") + e.what());
    }
    return r;
}

AnyModel model_from_json(const nlohmann::json& j) {
    const std::string format = j.is_object() ? j.value("format", "") : "";
    if (format == "agedetect-dba") return dba_model_from_json(j);
    if (format == "agedetect-hmm") return hmm_model_from_json(j);
    throw Error(ErrorCode::ModelFormatError, "unrecognised model format '" + format + "'");
}

nlohmann::json to_json(const AnyModel& model) {
    return std::visit([](const auto& m) { return to_json(m); }, model);
}

AnyModel load_model(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = read_json(path);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Io) throw;
        throw Error(ErrorCode::ModelFormatError, e.what());
    }
    return model_from_json(j);
}

Classification classify(const AnyModel& model, const ChannelSet& cs) {
    if (const auto* d = std::get_if<DbaModel>(&model)) return classify_dba(*d, cs);
    return classify_hmm(std::get<HmmModel>(model), cs);
}

std::vector<Labeled> extract_all(std::span<const RawSession> sessions) {
    std::vector<std::size_t> index(sessions.size());
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < sessions.size(); ++i) index[i] = seen[sessions[i].child_id]++;
    std::vector<Labeled> out(sessions.size());
    parallel_for(sessions.size(), [&](std::size_t i) {
        out[i].channels = extract_channels(sessions[i], index[i]);
        out[i].group = sessions[i].group;
    });
    return out;
}

Partition partition(std::span<const Labeled> data, const SplitPlan& plan) {
    Partition p;
    for (const auto& l : data) {
        const auto it = plan.assignment.find(l.channels.child_id);
        if (it == plan.assignment.end()) {
            throw Error(ErrorCode::ModelFormatError, "split plan does not cover child " + l.channels.child_id);
        }
        switch (it->second) {
            case Split::Train: p.train.push_back(l); break;
            case Split::Validation: p.val.push_back(l); break;
            case Split::Evaluation: p.eval.push_back(l); break;
        }
    }
    return p;
}

SelectionResult select_channels(const Partition& part, const NormStats& norm, const ExperimentConfig& cfg) {
    HmmParams hp = cfg.hmm;
    hp.seed = cfg.seed;
    SelectionResult sel;
    std::vector<GridPoint> grid_record;
    const bool hmm = cfg.classifier == ClassifierKind::HMM;
    if (hmm && cfg.grid_search && cfg.selection != SelectionKind::Stat) {
        hp = grid_search_hmm(part.train, part.val, cfg.grid, hp, norm, grid_record);
    }
    switch (cfg.selection) {
        case SelectionKind::Manual:
            sel.method = SelectionMethod::Manual;
            sel.selected = cfg.manual_channels;
            break;
        case SelectionKind::Stat:
            if (hmm) {
                const Grid grid = cfg.grid_search ? cfg.grid : Grid{{hp.n_states, hp.n_mix}};
                sel = stat_select_hmm(part.train, part.val, grid, hp, norm);
                hp = *sel.hmm_params;
            } else {
                sel = stat_select_dba(part.train, cfg.dba, norm);
            }
            break;
        case SelectionKind::Sfs: {
            SfsOptions opts;
            opts.classifier = cfg.classifier;
            opts.hmm = hp;
            opts.dba = cfg.dba;
            sel = sfs(part.train, part.val, opts, norm);
            break;
        }
    }
    if (!grid_record.empty()) sel.grid = grid_record;
    if (hmm) sel.hmm_params = hp;
    log_event(LogLevel::Info, "selection_done", {{"method", method_name(sel.method)}, {"count", sel.selected.size()}});
    return sel;
}

AnyModel fit_model(const Partition& part, const NormStats& norm, const ExperimentConfig& cfg,
                   const SelectionResult& sel) {
    std::vector<Labeled> fit_set = part.train;
    if (cfg.refit_on_development) fit_set.insert(fit_set.end(), part.val.begin(), part.val.end());
    if (cfg.classifier == ClassifierKind::HMM) {
        HmmParams hp = sel.hmm_params ? *sel.hmm_params : cfg.hmm;
        hp.seed = cfg.seed;
        return train_hmm(fit_set, sel.selected, hp, norm);
    }
    return train_dba(fit_set, sel.selected, cfg.dba, norm);
}

std::vector<Prediction> predict_all(const AnyModel& model, std::span<const Labeled> data) {
    std::vector<Prediction> preds(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        const auto& l = data[i];
        const auto c = classify(model, l.channels);
        preds[i] = {l.channels.child_id, l.channels.session_index, l.group, c.group, c.scores};
    });
    return preds;
}

ExperimentResult run_partition(const Partition& part, const SplitPlan& plan, const ExperimentConfig& cfg) {
    if (part.train.empty() || part.eval.empty()) throw Error(ErrorCode::EmptyInput, "empty train or evaluation subset");
    const NormStats norm = fit_norm(part.train);
    ExperimentResult res{plan, select_channels(part, norm, cfg), AnyModel{DbaModel{}}, {}, {}};
    res.model = fit_model(part, norm, cfg, res.selection);
    auto preds = predict_all(res.model, part.eval);
    res.predictions = cfg.per_child_vote ? per_child_vote(preds) : std::move(preds);
    res.report = evaluate(res.predictions);
    res.report.config_fingerprint = config_fingerprint(cfg);
    return res;
}

Partition load_partition(const ExperimentConfig& cfg, SplitPlan* plan_out) {
    const auto sessions = load_directory(cfg.data_dir);
    if (sessions.empty()) throw Error(ErrorCode::EmptyInput, "no sessions in " + cfg.data_dir.string());
    const auto plan = make_split(sessions, cfg.seed);
    const auto data = extract_all(sessions);
    auto part = partition(data, plan);
    log_event(LogLevel::Info, "split_done",
              {{"train", part.train.size()}, {"validation", part.val.size()}, {"evaluation", part.eval.size()}});
    if (plan_out) *plan_out = plan;
    return part;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    SplitPlan plan;
    const auto part = load_partition(cfg, &plan);
    auto res = run_partition(part, plan, cfg);

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        const auto fp = res.report.config_fingerprint;
        const std::string fitted_on = cfg.refit_on_development ? "train+validation" : "train";
        write_text(cfg.out_dir / "split.json",
                   with_tags(to_json(res.split), fp, {{"stratified_by", "group,gender"}}).dump(2) + "\n");
        write_text(cfg.out_dir / "selection.json",
                   with_tags(to_json(res.selection), fp,
                             {{"norm_fit_on", "train"}, {"trained_on", "train"}, {"scored_on", "validation"}})
                           .dump(2) +
                       "\n");
        write_text(cfg.out_dir / "model.json",
                   with_tags(to_json(res.model), fp, {{"norm_fit_on", "train"}, {"trained_on", fitted_on}}).dump(2) +
                       "\n");
        nlohmann::json preds = nlohmann::json::array();
        for (const auto& p : res.predictions) preds.push_back(to_json(p));
        write_text(cfg.out_dir / "predictions.json",
                   with_tags({{"predictions", preds}, {"per_child_vote", cfg.per_child_vote}}, fp,
                             {{"scored_on", "evaluation"}})
                           .dump(2) +
                       "\n");
        write_text(cfg.out_dir / "report.json", canonical_dump(to_json(res.report)) + "\n");
    }
    return res;
}

Prediction predict(const AnyModel& model, const RawSession& session, std::size_t session_index) {
    const auto cs = extract_channels(session, session_index);
    const auto c = classify(model, cs);
    return {session.child_id, session_index, session.group, c.group, c.scores};
}

Prediction predict(const std::filesystem::path& model_path, const std::filesystem::path& session_path) {
    const auto model = load_model(model_path);
    return predict(model, parse_session(session_path), 0);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::MalformedRow, path.string() + ": " + e.what());
    }
}

}  // namespace agedetect
