#include "agedetect/elastic.hpp"

#include <algorithm>
#include <cmath>

#include "agedetect/error.hpp"
#include "agedetect/parallel.hpp"

namespace agedetect {

namespace {

inline double local_cost(double a, double b, LocalCost cost) {
    const double d = a - b;
    return cost == LocalCost::Absolute ? std::abs(d) : d * d;
}

// Predecessor choice shared by the forward pass and the backtrack:
// 0 = diagonal, 1 = (i-1, j), 2 = (i, j-1).
inline int best_step(double diag, double up, double left) {
    if (diag <= up && diag <= left) return 0;
    if (up <= left) return 1;
    return 2;
}

WarpResult dtw_rows(std::span<const double> a, std::span<const double> b, LocalCost cost) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<double> prev(m), cur(m);
    std::vector<std::size_t> prev_len(m), cur_len(m);

    prev[0] = local_cost(a[0], b[0], cost);
    prev_len[0] = 1;
    for (std::size_t j = 1; j < m; ++j) {
        prev[j] = local_cost(a[0], b[j], cost) + prev[j - 1];
        prev_len[j] = prev_len[j - 1] + 1;
    }
    for (std::size_t i = 1; i < n; ++i) {
        cur[0] = local_cost(a[i], b[0], cost) + prev[0];
        cur_len[0] = prev_len[0] + 1;
        for (std::size_t j = 1; j < m; ++j) {
            const double diag = prev[j - 1];
            const double up = prev[j];
            const double left = cur[j - 1];
            const int step = best_step(diag, up, left);
            const double base = step == 0 ? diag : (step == 1 ? up : left);
            const std::size_t len = step == 0 ? prev_len[j - 1] : (step == 1 ? prev_len[j] : cur_len[j - 1]);
            cur[j] = local_cost(a[i], b[j], cost) + base;
            cur_len[j] = len + 1;
        }
        std::swap(prev, cur);
        std::swap(prev_len, cur_len);
    }
    WarpResult r;
    r.distance = prev[m - 1];
    r.path_length = prev_len[m - 1];
    return r;
}

WarpResult dtw_full(std::span<const double> a, std::span<const double> b, LocalCost cost) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<double> acc(n * m);
    const auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * m + j]; };

    at(0, 0) = local_cost(a[0], b[0], cost);
    for (std::size_t j = 1; j < m; ++j) at(0, j) = local_cost(a[0], b[j], cost) + at(0, j - 1);
    for (std::size_t i = 1; i < n; ++i) {
        at(i, 0) = local_cost(a[i], b[0], cost) + at(i - 1, 0);
        for (std::size_t j = 1; j < m; ++j) {
            const double diag = at(i - 1, j - 1);
            const double up = at(i - 1, j);
            const double left = at(i, j - 1);
            const int step = best_step(diag, up, left);
            at(i, j) = local_cost(a[i], b[j], cost) + (step == 0 ? diag : (step == 1 ? up : left));
        }
    }

    WarpResult r;
    r.distance = at(n - 1, m - 1);
    std::size_t i = n - 1;
    std::size_t j = m - 1;
    r.path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        if (i == 0) {
            --j;
        } else if (j == 0) {
            --i;
        } else {
            const int step = best_step(at(i - 1, j - 1), at(i - 1, j), at(i, j - 1));
            if (step == 0) {
                --i;
                --j;
            } else if (step == 1) {
                --i;
            } else {
                --j;
            }
        }
        r.path.emplace_back(i, j);
    }
    std::reverse(r.path.begin(), r.path.end());
    r.path_length = r.path.size();
    return r;
}

std::size_t lower_median(std::vector<std::size_t> values) {
    std::sort(values.begin(), values.end());
    return values[(values.size() - 1) / 2];
}

}  // namespace

WarpResult dtw(std::span<const double> a, std::span<const double> b, LocalCost cost, bool keep_path) {
    if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySequence, "dtw needs two non-empty sequences");
    return keep_path ? dtw_full(a, b, cost) : dtw_rows(a, b, cost);
}

Sequence resample(std::span<const double> seq, std::size_t length) {
    if (seq.empty() || length == 0) throw Error(ErrorCode::EmptySequence, "resample needs non-empty input and length");
    if (length == 1 || seq.size() == 1) return Sequence(length, seq[0]);
    if (length == seq.size()) return Sequence(seq.begin(), seq.end());
    Sequence out(length);
    const double scale = static_cast<double>(seq.size() - 1) / static_cast<double>(length - 1);
    for (std::size_t k = 0; k < length; ++k) {
        const double pos = static_cast<double>(k) * scale;
        const auto lo = std::min(static_cast<std::size_t>(pos), seq.size() - 2);
        const double frac = pos - static_cast<double>(lo);
        out[k] = seq[lo] + frac * (seq[lo + 1] - seq[lo]);
    }
    return out;
}

DbaResult dba(std::span<const Sequence> sequences, std::size_t max_iter, double tol) {
    if (sequences.empty()) throw Error(ErrorCode::EmptyInput, "dba needs at least one sequence");
    for (const auto& s : sequences) {
        if (s.empty()) throw Error(ErrorCode::EmptySequence, "dba input contains an empty sequence");
    }
    const std::size_t count = sequences.size();

    // medoid under the squared-cost DTW
    std::vector<double> total(count, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = i + 1; j < count; ++j) {
            const double d = dtw(sequences[i], sequences[j], LocalCost::Squared).distance;
            total[i] += d;
            total[j] += d;
        }
    }
    const auto medoid = static_cast<std::size_t>(std::min_element(total.begin(), total.end()) - total.begin());

    std::vector<std::size_t> lengths(count);
    for (std::size_t i = 0; i < count; ++i) lengths[i] = sequences[i].size();

    DbaResult result;
    result.average = resample(sequences[medoid], lower_median(lengths));

    const std::size_t len = result.average.size();
    std::vector<double> sums(len);
    std::vector<std::size_t> hits(len);
    while (true) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(hits.begin(), hits.end(), 0);
        double inertia = 0.0;
        for (const auto& seq : sequences) {
            const auto warp = dtw(seq, result.average, LocalCost::Squared, true);
            inertia += warp.distance;
            for (const auto& [i, j] : warp.path) {
                sums[j] += seq[i];
                ++hits[j];
            }
        }
        result.inertia.push_back(inertia);

        if (inertia == 0.0 || result.iterations >= max_iter) break;
        if (result.inertia.size() > 1) {
            const double previous = result.inertia[result.inertia.size() - 2];
            if (previous <= 0.0 || (previous - inertia) / previous < tol) break;
        }

        // every average point is on every warping path, so hits[j] >= count
        for (std::size_t j = 0; j < len; ++j) result.average[j] = sums[j] / static_cast<double>(hits[j]);
        ++result.iterations;
    }
    return result;
}

const Prototype& DbaModel::prototype(int group, ChannelId channel) const {
    const auto it = prototypes.find({group, channel});
    if (it == prototypes.end()) {
        throw Error(ErrorCode::MissingChannel, "no prototype for group " + std::to_string(group) + " channel " +
                                                   std::string(channel_name(channel)));
    }
    return it->second;
}

DbaModel train_dba(std::span<const Labeled> train, std::span<const ChannelId> selected, const DbaConfig& cfg,
                   const std::optional<NormStats>& norm) {
    if (selected.empty()) throw Error(ErrorCode::MissingChannel, "train_dba needs at least one selected channel");
    std::array<std::vector<const ChannelSet*>, kGroupCount> by_group;
    for (const auto& l : train) {
        if (!is_valid_group(l.group)) throw Error(ErrorCode::OutOfRangeGroup, std::to_string(l.group));
        by_group[group_index(l.group)].push_back(&l.channels);
    }
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        if (by_group[group_index(g)].empty()) {
            throw Error(ErrorCode::MissingGroup, "no training data for group " + std::to_string(g));
        }
    }

    DbaModel model;
    model.selected.assign(selected.begin(), selected.end());
    model.norm = norm ? *norm : fit_norm(train);
    model.config = cfg;

    const std::size_t pairs = kGroupCount * selected.size();
    std::vector<Prototype> built(pairs);
    parallel_for(pairs, [&](std::size_t k) {
        const int g = kMinGroup + static_cast<int>(k / selected.size());
        const ChannelId c = selected[k % selected.size()];
        std::vector<Sequence> seqs;
        for (const auto* cs : by_group[group_index(g)]) {
            if ((*cs)[c].empty()) throw Error(ErrorCode::MissingChannel, std::string(channel_name(c)));
            seqs.push_back(normalize_channel((*cs)[c], c, model.norm));
        }
        auto r = dba(seqs, cfg.max_iter, cfg.tol);
        built[k] = Prototype{g, c, std::move(r.average), r.iterations, r.final_inertia()};
    });
    for (auto& p : built) model.prototypes.emplace(std::pair{p.group, p.channel}, std::move(p));
    return model;
}

std::vector<std::array<double, kGroupCount>> dba_channel_distances(const DbaModel& model, const ChannelSet& cs) {
    std::vector<std::array<double, kGroupCount>> out(model.selected.size());
    for (std::size_t k = 0; k < model.selected.size(); ++k) {
        const ChannelId c = model.selected[k];
        if (cs[c].empty()) throw Error(ErrorCode::MissingChannel, std::string(channel_name(c)) + " is empty");
        const Sequence z = normalize_channel(cs[c], c, model.norm);
        for (int g = kMinGroup; g <= kMaxGroup; ++g) {
            out[k][group_index(g)] = dtw(z, model.prototype(g, c).sequence).normalized();
        }
    }
    return out;
}

int argmin_group(const std::array<double, kGroupCount>& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] < scores[best]) best = i;
    }
    return kMinGroup + static_cast<int>(best);
}

int argmax_group(const std::array<double, kGroupCount>& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return kMinGroup + static_cast<int>(best);
}

Classification classify_dba(const DbaModel& model, const ChannelSet& cs) {
    Classification out;
    for (const auto& per_channel : dba_channel_distances(model, cs)) {
        for (std::size_t g = 0; g < kGroupCount; ++g) out.scores[g] += per_channel[g];
    }
    out.group = argmin_group(out.scores);
    return out;
}

nlohmann::json to_json(const DbaModel& model) {
    nlohmann::json selected = nlohmann::json::array();
    for (auto c : model.selected) selected.push_back(channel_name(c));
    nlohmann::json protos = nlohmann::json::array();
    for (const auto& [key, p] : model.prototypes) {
        protos.push_back({{"group", p.group},
                          {"channel", channel_name(p.channel)},
                          {"sequence", p.sequence},
                          {"iterations", p.iterations},
                          {"inertia", p.inertia}});
    }
    return {{"format", "agedetect-dba"},
            {"version", kDbaFormatVersion},
            {"selected", selected},
            {"norm", to_json(model.norm)},
            {"config", {{"max_iter", model.config.max_iter}, {"tol", model.config.tol}}},
            {"prototypes", protos}};
}

DbaModel dba_model_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "agedetect-dba") {
        throw Error(ErrorCode::ModelFormatError, "not a DBA model document");
    }
    if (!j.contains("version") || j["version"] != kDbaFormatVersion) {
        throw Error(ErrorCode::ModelFormatError, "unsupported DBA model version");
    }
    DbaModel model;
    try {
        for (const auto& name : j.at("selected")) {
            const auto c = parse_channel(name.get<std::string>());
            if (!c) throw Error(ErrorCode::ModelFormatError, "unknown channel in model");
            model.selected.push_back(*c);
        }
        model.norm = norm_from_json(j.at("norm"));
        model.config.max_iter = j.at("config").at("max_iter").get<std::size_t>();
        model.config.tol = j.at("config").at("tol").get<double>();
        for (const auto& pj : j.at("prototypes")) {
            Prototype p;
            p.group = pj.at("group").get<int>();
            const auto c = parse_channel(pj.at("channel").get<std::string>());
            if (!c || !is_valid_group(p.group)) throw Error(ErrorCode::ModelFormatError, "bad prototype key");
            p.channel = *c;
            p.sequence = pj.at("sequence").get<Sequence>();
            p.iterations = pj.at("iterations").get<std::size_t>();
            p.inertia = pj.at("inertia").get<double>();
            if (p.sequence.empty()) throw Error(ErrorCode::ModelFormatError, "empty prototype");
            model.prototypes.emplace(std::pair{p.group, p.channel}, std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ModelFormatError, std::string("DBA model: ") + e.what());
    }
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        for (auto c : model.selected) {
            if (!model.prototypes.contains({g, c})) throw Error(ErrorCode::ModelFormatError, "missing prototype");
        }
    }
    return model;
}

}  // namespace agedetect
