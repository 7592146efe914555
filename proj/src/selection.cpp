#include "agedetect/selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>

#include "agedetect/error.hpp"
#include "agedetect/log.hpp"
#include "agedetect/parallel.hpp"

namespace agedetect {

namespace {

constexpr double kWorstAgd = kGroupCount - 1;

NormStats resolve_norm(std::span<const Labeled> train, const std::optional<NormStats>& norm) {
    return norm ? *norm : fit_norm(train);
}

// true if a is a strictly better subset score than b under (AGD, accuracy, channel index).
bool better(const SubsetScore& a, const SubsetScore& b) {
    if (a.avg_agd != b.avg_agd) return a.avg_agd < b.avg_agd;
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return index_of(a.channel) < index_of(b.channel);
}

// Indices of channels ordered best first, ties to the lower channel index.
std::vector<std::size_t> rank_channels(const ChannelScoreTable& t) {
    std::vector<std::size_t> order(kChannelCount);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return t.higher_is_better ? t.scores[a] > t.scores[b] : t.scores[a] < t.scores[b];
    });
    return order;
}

std::vector<int> truth_of(std::span<const Labeled> data) {
    std::vector<int> out;
    out.reserve(data.size());
    for (const auto& l : data) out.push_back(l.group);
    return out;
}

void require_groups(std::span<const Labeled> data, std::string_view what) {
    std::array<bool, kGroupCount> seen{};
    for (const auto& l : data) {
        if (!is_valid_group(l.group)) throw Error(ErrorCode::OutOfRangeGroup, std::to_string(l.group));
        seen[group_index(l.group)] = true;
    }
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        if (!seen[group_index(g)]) {
            throw Error(ErrorCode::MissingGroup, std::string(what) + " lacks group " + std::to_string(g));
        }
    }
}

nlohmann::json subset_json(const SubsetScore& s) {
    return {{"channel", channel_name(s.channel)}, {"avg_agd", s.avg_agd}, {"accuracy", s.accuracy}};
}

SubsetScore subset_from_json(const nlohmann::json& j) {
    SubsetScore s;
    const auto c = parse_channel(j.at("channel").get<std::string>());
    if (!c) throw Error(ErrorCode::ModelFormatError, "unknown channel in selection");
    s.channel = *c;
    s.avg_agd = j.at("avg_agd").get<double>();
    s.accuracy = j.at("accuracy").get<double>();
    return s;
}

}  // namespace

std::string_view method_name(SelectionMethod m) {
    switch (m) {
        case SelectionMethod::StatDBA: return "stat-dba";
        case SelectionMethod::StatHMM: return "stat-hmm";
        case SelectionMethod::SfsDBA: return "sfs-dba";
        case SelectionMethod::SfsHMM: return "sfs-hmm";
        case SelectionMethod::Manual: return "manual";
    }
    return "manual";
}

SelectionMethod parse_method_name(std::string_view name) {
    for (auto m : {SelectionMethod::StatDBA, SelectionMethod::StatHMM, SelectionMethod::SfsDBA, SelectionMethod::SfsHMM,
                   SelectionMethod::Manual}) {
        if (method_name(m) == name) return m;
    }
    throw Error(ErrorCode::ModelFormatError, "unknown selection method " + std::string(name));
}

std::string_view classifier_name(ClassifierKind k) { return k == ClassifierKind::DBA ? "dba" : "hmm"; }

ClassifierKind parse_classifier_name(std::string_view name) {
    if (name == "dba") return ClassifierKind::DBA;
    if (name == "hmm") return ClassifierKind::HMM;
    throw Error(ErrorCode::ConfigInvalid, "unknown classifier '" + std::string(name) + "'");
}

double percentile(std::span<const double> values, double p) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "percentile of an empty sample");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

std::pair<double, double> agd_and_accuracy(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.empty() || truth.size() != predicted.size()) {
        throw Error(ErrorCode::EmptyPredictions, "need equally sized, non-empty label lists");
    }
    long total = 0;
    long correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        total += std::abs(truth[i] - predicted[i]);
        correct += truth[i] == predicted[i];
    }
    const auto n = static_cast<double>(truth.size());
    return {static_cast<double>(total) / n, 100.0 * static_cast<double>(correct) / n};
}

std::vector<ChannelId> percentile_rule(const ChannelScoreTable& t, double* threshold) {
    const double cut = percentile(t.scores, t.higher_is_better ? 70.0 : 30.0);
    if (threshold) *threshold = cut;
    std::vector<ChannelId> out;
    for (auto i : rank_channels(t)) {
        if (t.higher_is_better ? t.scores[i] > cut : t.scores[i] < cut) out.push_back(static_cast<ChannelId>(i));
    }
    return out;
}

ChannelScoreTable dba_interclass_scores(const DbaModel& model) {
    ChannelScoreTable t;
    t.kind = ScoreKind::DtwInterClass;
    t.higher_is_better = true;
    for (auto c : model.selected) {
        double sum = 0.0;
        int pairs = 0;
        for (int g = kMinGroup; g <= kMaxGroup; ++g) {
            for (int h = g + 1; h <= kMaxGroup; ++h) {
                sum += dtw(model.prototype(g, c).sequence, model.prototype(h, c).sequence).normalized();
                ++pairs;
            }
        }
        t.scores[index_of(c)] = sum / pairs;
    }
    return t;
}

SelectionResult stat_select_dba(std::span<const Labeled> train, const DbaConfig& cfg,
                                const std::optional<NormStats>& norm) {
    const auto channels = all_channels();
    const auto model = train_dba(train, channels, cfg, norm);
    SelectionResult r;
    r.method = SelectionMethod::StatDBA;
    r.table = dba_interclass_scores(model);
    r.selected = percentile_rule(*r.table, &r.threshold);
    if (r.selected.empty()) throw Error(ErrorCode::DegenerateScores, "no channel scores above the 70th percentile");
    return r;
}

SubsetScore evaluate_subset_hmm(std::span<const Labeled> train, std::span<const Labeled> val,
                                std::span<const ChannelId> subset, const HmmParams& params, const NormStats& norm) {
    const auto model = train_hmm(train, subset, params, norm);
    std::vector<int> predicted(val.size());
    parallel_for(val.size(), [&](std::size_t i) { predicted[i] = classify_hmm(model, val[i].channels).group; });
    const auto truth = truth_of(val);
    const auto [agd, acc] = agd_and_accuracy(truth, predicted);
    SubsetScore s;
    s.channel = subset.back();
    s.avg_agd = agd;
    s.accuracy = acc;
    return s;
}

namespace {

// Degenerate single-channel data cannot be modelled; such a subset gets the worst score.
SubsetScore evaluate_or_worst(std::span<const Labeled> train, std::span<const Labeled> val,
                              std::span<const ChannelId> subset, const HmmParams& params, const NormStats& norm) {
    try {
        return evaluate_subset_hmm(train, val, subset, params, norm);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateData) throw;
        log_event(LogLevel::Info, "degenerate_subset", {{"channel", channel_name(subset.back())}, {"size", subset.size()}});
        return {subset.back(), kWorstAgd, 0.0};
    }
}

}  // namespace

ChannelScoreTable hmm_single_channel_scores(std::span<const Labeled> train, std::span<const Labeled> val,
                                            const HmmParams& params, const NormStats& norm) {
    ChannelScoreTable t;
    t.kind = ScoreKind::SingleChannelAGD;
    t.higher_is_better = false;
    parallel_for(kChannelCount, [&](std::size_t i) {
        const std::array<ChannelId, 1> one{static_cast<ChannelId>(i)};
        t.scores[i] = evaluate_or_worst(train, val, one, params, norm).avg_agd;
    });
    return t;
}

HmmParams grid_search_hmm(std::span<const Labeled> train, std::span<const Labeled> val,
                          std::span<const std::pair<std::size_t, std::size_t>> grid, const HmmParams& base,
                          const NormStats& norm, std::vector<GridPoint>& record) {
    if (grid.empty()) throw Error(ErrorCode::ConfigInvalid, "empty HMM grid");
    const auto channels = all_channels();
    const std::size_t first = record.size();
    std::size_t best = first;
    for (const auto& [n, m] : grid) {
        HmmParams p = base;
        p.n_states = n;
        p.n_mix = m;
        const auto s = evaluate_subset_hmm(train, val, channels, p, norm);
        record.push_back({n, m, s.avg_agd, s.accuracy});
        const auto& g = record.back();
        if (g.avg_agd < record[best].avg_agd ||
            (g.avg_agd == record[best].avg_agd && g.accuracy > record[best].accuracy)) {
            best = record.size() - 1;
        }
        log_event(LogLevel::Info, "grid_point", {{"n_states", n}, {"n_mix", m}, {"avg_agd", s.avg_agd}});
    }
    HmmParams chosen = base;
    chosen.n_states = record[best].n_states;
    chosen.n_mix = record[best].n_mix;
    return chosen;
}

SelectionResult stat_select_hmm(std::span<const Labeled> train, std::span<const Labeled> val,
                                std::span<const std::pair<std::size_t, std::size_t>> grid, const HmmParams& base,
                                const std::optional<NormStats>& norm) {
    require_groups(train, "training set");
    require_groups(val, "validation set");
    const NormStats ns = resolve_norm(train, norm);

    SelectionResult r;
    r.method = SelectionMethod::StatHMM;
    const HmmParams chosen = grid_search_hmm(train, val, grid, base, ns, r.grid);
    r.hmm_params = chosen;

    r.table = hmm_single_channel_scores(train, val, chosen, ns);
    r.selected = percentile_rule(*r.table, &r.threshold);
    if (r.selected.empty()) throw Error(ErrorCode::DegenerateScores, "no channel scores below the 30th percentile");
    return r;
}

SelectionResult sfs(std::span<const Labeled> train, std::span<const Labeled> val, const SfsOptions& opts,
                    const std::optional<NormStats>& norm) {
    require_groups(train, "training set");
    require_groups(val, "validation set");
    const NormStats ns = resolve_norm(train, norm);
    std::vector<ChannelId> pool = opts.pool;
    if (pool.empty()) {
        const auto all = all_channels();
        pool.assign(all.begin(), all.end());
    }
    std::sort(pool.begin(), pool.end(), [](ChannelId a, ChannelId b) { return index_of(a) < index_of(b); });
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    // DBA prototypes are per channel, so the validation distances are computed once.
    std::vector<std::vector<std::array<double, kGroupCount>>> cached;
    std::array<std::size_t, kChannelCount> column{};
    if (opts.classifier == ClassifierKind::DBA) {
        const auto model = train_dba(train, pool, opts.dba, ns);
        for (std::size_t k = 0; k < model.selected.size(); ++k) column[index_of(model.selected[k])] = k;
        cached.resize(val.size());
        parallel_for(val.size(), [&](std::size_t i) { cached[i] = dba_channel_distances(model, val[i].channels); });
    }
    const auto truth = truth_of(val);

    auto evaluate = [&](const std::vector<ChannelId>& subset) -> SubsetScore {
        if (opts.classifier == ClassifierKind::HMM) return evaluate_or_worst(train, val, subset, opts.hmm, ns);
        std::vector<int> predicted(val.size());
        for (std::size_t i = 0; i < val.size(); ++i) {
            std::array<double, kGroupCount> total{};
            for (auto c : subset) {
                const auto& d = cached[i][column[index_of(c)]];
                for (int g = 0; g < kGroupCount; ++g) total[g] += d[g];
            }
            predicted[i] = argmin_group(total);
        }
        const auto [agd, acc] = agd_and_accuracy(truth, predicted);
        return {subset.back(), agd, acc};
    };

    SelectionResult r;
    r.method = opts.classifier == ClassifierKind::DBA ? SelectionMethod::SfsDBA : SelectionMethod::SfsHMM;
    std::vector<bool> used(kChannelCount, false);
    double incumbent = std::numeric_limits<double>::infinity();
    while (r.selected.size() < pool.size()) {
        std::vector<ChannelId> remaining;
        for (auto c : pool) {
            if (!used[index_of(c)]) remaining.push_back(c);
        }
        SfsStep step;
        step.candidates.resize(remaining.size());
        parallel_for(remaining.size(), [&](std::size_t k) {
            auto subset = r.selected;
            subset.push_back(remaining[k]);
            step.candidates[k] = evaluate(subset);
        });
        step.best = step.candidates[0];
        for (const auto& c : step.candidates) {
            if (better(c, step.best)) step.best = c;
        }
        step.accepted = step.best.avg_agd <= incumbent;
        log_event(LogLevel::Info, "sfs_step",
                  {{"step", r.trace.size() + 1}, {"channel", channel_name(step.best.channel)},
                   {"avg_agd", step.best.avg_agd}, {"accepted", step.accepted}});
        r.trace.push_back(step);
        if (!step.accepted) break;
        incumbent = step.best.avg_agd;
        r.selected.push_back(step.best.channel);
        used[index_of(step.best.channel)] = true;
    }
    return r;
}

nlohmann::json to_json(const SelectionResult& r) {
    nlohmann::json j;
    j["method"] = method_name(r.method);
    j["selected"] = nlohmann::json::array();
    for (auto c : r.selected) j["selected"].push_back(channel_name(c));
    j["trace"] = nlohmann::json::array();
    for (const auto& s : r.trace) {
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& c : s.candidates) cands.push_back(subset_json(c));
        j["trace"].push_back({{"best", subset_json(s.best)}, {"accepted", s.accepted}, {"candidates", cands}});
    }
    if (r.table) {
        nlohmann::json scores = nlohmann::json::object();
        for (std::size_t i = 0; i < kChannelCount; ++i) {
            scores[std::string(channel_name(static_cast<ChannelId>(i)))] = r.table->scores[i];
        }
        j["scores"] = {{"kind", r.table->kind == ScoreKind::DtwInterClass ? "dtw-interclass" : "single-channel-agd"},
                       {"higher_is_better", r.table->higher_is_better},
                       {"values", scores}};
        j["threshold"] = r.threshold;
    }
    if (!r.grid.empty()) {
        j["grid"] = nlohmann::json::array();
        for (const auto& g : r.grid) {
            j["grid"].push_back(
                {{"n_states", g.n_states}, {"n_mix", g.n_mix}, {"avg_agd", g.avg_agd}, {"accuracy", g.accuracy}});
        }
    }
    if (r.hmm_params) j["hmm_params"] = to_json(*r.hmm_params);
    return j;
}

SelectionResult selection_from_json(const nlohmann::json& j) {
    SelectionResult r;
    try {
        r.method = parse_method_name(j.at("method").get<std::string>());
        for (const auto& name : j.at("selected")) {
            const auto c = parse_channel(name.get<std::string>());
            if (!c) throw Error(ErrorCode::ModelFormatError, "unknown channel in selection");
            r.selected.push_back(*c);
        }
        for (const auto& s : j.value("trace", nlohmann::json::array())) {
            SfsStep step;
            step.best = subset_from_json(s.at("best"));
            step.accepted = s.at("accepted").get<bool>();
            for (const auto& c : s.at("candidates")) step.candidates.push_back(subset_from_json(c));
            r.trace.push_back(std::move(step));
        }
        if (j.contains("scores")) {
            ChannelScoreTable t;
            const auto& sj = j["scores"];
            t.kind = sj.at("kind") == "dtw-interclass" ? ScoreKind::DtwInterClass : ScoreKind::SingleChannelAGD;
            t.higher_is_better = sj.at("higher_is_better").get<bool>();
            for (std::size_t i = 0; i < kChannelCount; ++i) {
                t.scores[i] = sj.at("values").at(std::string(channel_name(static_cast<ChannelId>(i)))).get<double>();
            }
            r.table = t;
            r.threshold = j.at("threshold").get<double>();
        }
        for (const auto& g : j.value("grid", nlohmann::json::array())) {
            r.grid.push_back({g.at("n_states").get<std::size_t>(), g.at("n_mix").get<std::size_t>(),
                              g.at("avg_agd").get<double>(), g.at("accuracy").get<double>()});
        }
        if (j.contains("hmm_params")) r.hmm_params = hmm_params_from_json(j["hmm_params"]);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ModelFormatError, std::string("selection: ") + e.what());
    }
    if (r.selected.empty()) throw Error(ErrorCode::ModelFormatError, "selection has no channels");
    return r;
}

std::string score_table_csv(const ChannelScoreTable& table) {
    std::ostringstream out;
    out << "rank,channel,score\n";
    int rank = 1;
    for (auto i : rank_channels(table)) {
        out << rank++ << ',' << channel_name(static_cast<ChannelId>(i)) << ',' << table.scores[i] << '\n';
    }
    return out.str();
}

}  // namespace agedetect
