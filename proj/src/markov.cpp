#include "agedetect/markov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "agedetect/error.hpp"
#include "agedetect/log.hpp"
#include "agedetect/parallel.hpp"
#include "agedetect/random.hpp"

namespace agedetect {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_sum_exp(std::span<const double> v) {
    double mx = kNegInf;
    for (double x : v) mx = std::max(mx, x);
    if (mx == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

// Flattened parameters for the inner loops.
struct FlatHmm {
    std::size_t n = 0, m = 0, d = 0;
    std::vector<double> initial;   // n
    std::vector<double> trans;     // n*n
    std::vector<double> mean;      // n*m*d
    std::vector<double> inv_var;   // n*m*d
    std::vector<double> log_norm;  // n*m, includes log weight

    explicit FlatHmm(const GroupHmm& h) : n(h.n_states()), m(h.n_mix()), d(h.dims()) {
        initial = h.initial;
        trans.resize(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) trans[i * n + j] = h.transition[i][j];
        }
        mean.resize(n * m * d);
        inv_var.resize(n * m * d);
        log_norm.resize(n * m);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < m; ++k) {
                const auto& st = h.states[j];
                double ln = st.weights[k] > 0.0 ? std::log(st.weights[k]) : kNegInf;
                for (std::size_t e = 0; e < d; ++e) {
                    const double var = st.variances[k][e];
                    mean[(j * m + k) * d + e] = st.means[k][e];
                    inv_var[(j * m + k) * d + e] = 1.0 / var;
                    ln -= 0.5 * (kLog2Pi + std::log(var));
                }
                log_norm[j * m + k] = ln;
            }
        }
    }

    // comp[j*m + k] = log w_jk + log N(x; mu_jk, var_jk); logb[j] = lse_k comp.
    void emissions(std::span<const double> x, double* comp, double* logb) const {
        for (std::size_t j = 0; j < n; ++j) {
            double mx = kNegInf;
            for (std::size_t k = 0; k < m; ++k) {
                const double* mu = &mean[(j * m + k) * d];
                const double* iv = &inv_var[(j * m + k) * d];
                double q = 0.0;
                for (std::size_t e = 0; e < d; ++e) {
                    const double diff = x[e] - mu[e];
                    q += diff * diff * iv[e];
                }
                const double c = log_norm[j * m + k] - 0.5 * q;
                comp[j * m + k] = c;
                mx = std::max(mx, c);
            }
            if (mx == kNegInf) {
                logb[j] = kNegInf;
                continue;
            }
            double s = 0.0;
            for (std::size_t k = 0; k < m; ++k) s += std::exp(comp[j * m + k] - mx);
            logb[j] = mx + std::log(s);
        }
    }
};

// Forward pass with per-frame rescaling. The predicted state distribution
// pred_j = sum_i alpha_{t-1}(i) a_ij sums to one, and the emission terms are
// shifted by the largest log-density among reachable states, so the scale
// factor is never zero.
struct ForwardPass {
    std::vector<double> alpha;  // L*n, each row sums to 1
    std::vector<double> etil;   // L*n, exp(logb - shift), 0 for unreachable states
    std::vector<double> ctil;   // L, row normaliser after the shift
    std::vector<double> comp;   // L*n*m component log-densities (kept for EM)
    std::vector<double> logb;   // L*n
    double log_likelihood = 0.0;
};

void forward(const FlatHmm& h, const ObservationMatrix& obs, ForwardPass& fp, bool keep_components) {
    const std::size_t L = obs.frames;
    const std::size_t n = h.n;
    fp.alpha.assign(L * n, 0.0);
    fp.etil.assign(L * n, 0.0);
    fp.ctil.assign(L, 0.0);
    fp.logb.assign(L * n, 0.0);
    fp.comp.assign(keep_components ? L * n * h.m : n * h.m, 0.0);
    fp.log_likelihood = 0.0;

    std::vector<double> pred(n);
    for (std::size_t t = 0; t < L; ++t) {
        double* comp = keep_components ? &fp.comp[t * n * h.m] : fp.comp.data();
        double* logb = &fp.logb[t * n];
        h.emissions(obs.row(t), comp, logb);

        if (t == 0) {
            std::copy(h.initial.begin(), h.initial.end(), pred.begin());
        } else {
            std::fill(pred.begin(), pred.end(), 0.0);
            const double* prev = &fp.alpha[(t - 1) * n];
            for (std::size_t i = 0; i < n; ++i) {
                const double ai = prev[i];
                if (ai == 0.0) continue;
                const double* row = &h.trans[i * n];
                for (std::size_t j = 0; j < n; ++j) pred[j] += ai * row[j];
            }
        }

        double shift = kNegInf;
        for (std::size_t j = 0; j < n; ++j) {
            if (pred[j] > 0.0) shift = std::max(shift, logb[j]);
        }
        if (shift == kNegInf) throw Error(ErrorCode::NumericFailure, "forward pass reached a frame with zero likelihood");

        double* et = &fp.etil[t * n];
        double* al = &fp.alpha[t * n];
        double c = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            et[j] = pred[j] > 0.0 ? std::exp(logb[j] - shift) : 0.0;
            al[j] = pred[j] * et[j];
            c += al[j];
        }
        for (std::size_t j = 0; j < n; ++j) al[j] /= c;
        fp.ctil[t] = c;
        fp.log_likelihood += shift + std::log(c);
    }
}

struct Accumulator {
    std::vector<double> init;   // n
    std::vector<double> trans;  // n*n
    std::vector<double> s0;     // n*m
    std::vector<double> s1;     // n*m*d
    std::vector<double> s2;     // n*m*d
    double log_likelihood = 0.0;

    Accumulator(std::size_t n, std::size_t m, std::size_t d)
        : init(n), trans(n * n), s0(n * m), s1(n * m * d), s2(n * m * d) {}
};

void accumulate(const FlatHmm& h, const ObservationMatrix& obs, ForwardPass& fp, Accumulator& acc) {
    const std::size_t L = obs.frames;
    const std::size_t n = h.n, m = h.m, d = h.d;
    forward(h, obs, fp, true);
    acc.log_likelihood += fp.log_likelihood;

    std::vector<double> beta(n, 1.0), beta_prev(n), weighted(n);
    std::vector<double> gamma(n);
    for (std::size_t tt = L; tt-- > 0;) {
        const double* al = &fp.alpha[tt * n];
        if (tt + 1 < L) {
            // weighted_j = etil_{t+1}(j) beta_{t+1}(j) / ctil_{t+1}
            const double* et = &fp.etil[(tt + 1) * n];
            const double c = fp.ctil[tt + 1];
            for (std::size_t j = 0; j < n; ++j) weighted[j] = et[j] * beta[j] / c;
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = &h.trans[i * n];
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += row[j] * weighted[j];
                beta_prev[i] = s;
                if (al[i] != 0.0) {
                    double* tr = &acc.trans[i * n];
                    for (std::size_t j = 0; j < n; ++j) tr[j] += al[i] * row[j] * weighted[j];
                }
            }
            std::swap(beta, beta_prev);
        }
        // beta now holds beta_t
        for (std::size_t j = 0; j < n; ++j) gamma[j] = al[j] * beta[j];
        if (tt == 0) {
            for (std::size_t j = 0; j < n; ++j) acc.init[j] += gamma[j];
        }
        const auto x = obs.row(tt);
        const double* comp = &fp.comp[tt * n * m];
        const double* logb = &fp.logb[tt * n];
        for (std::size_t j = 0; j < n; ++j) {
            if (gamma[j] == 0.0) continue;
            for (std::size_t k = 0; k < m; ++k) {
                const double r = gamma[j] * std::exp(comp[j * m + k] - logb[j]);
                if (r == 0.0) continue;
                acc.s0[j * m + k] += r;
                double* s1 = &acc.s1[(j * m + k) * d];
                double* s2 = &acc.s2[(j * m + k) * d];
                for (std::size_t e = 0; e < d; ++e) {
                    s1[e] += r * x[e];
                    s2[e] += r * x[e] * x[e];
                }
            }
        }
    }
}

// Re-estimates parameters from sufficient statistics; returns the number of
// variances clamped to the floor. Components or rows without mass keep their
// previous values.
std::size_t maximize(GroupHmm& h, const Accumulator& acc, double cov_floor) {
    const std::size_t n = h.n_states(), m = h.n_mix(), d = h.dims();
    std::size_t floored = 0;

    double init_total = 0.0;
    for (double v : acc.init) init_total += v;
    if (init_total > 0.0) {
        for (std::size_t j = 0; j < n; ++j) h.initial[j] = acc.init[j] / init_total;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += acc.trans[i * n + j];
        if (!(row > 0.0)) continue;
        for (std::size_t j = 0; j < n; ++j) h.transition[i][j] = acc.trans[i * n + j] / row;
    }
    for (std::size_t j = 0; j < n; ++j) {
        auto& st = h.states[j];
        double total = 0.0;
        for (std::size_t k = 0; k < m; ++k) total += acc.s0[j * m + k];
        if (!(total > 0.0)) continue;
        for (std::size_t k = 0; k < m; ++k) {
            const double w = acc.s0[j * m + k];
            st.weights[k] = w / total;
            if (!(w > 1e-300)) continue;
            for (std::size_t e = 0; e < d; ++e) {
                const double mu = acc.s1[(j * m + k) * d + e] / w;
                double var = acc.s2[(j * m + k) * d + e] / w - mu * mu;
                if (!(var >= cov_floor)) {
                    var = cov_floor;
                    ++floored;
                }
                st.means[k][e] = mu;
                st.variances[k][e] = var;
            }
        }
    }
    return floored;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t e = 0; e < a.size(); ++e) s += (a[e] - b[e]) * (a[e] - b[e]);
    return s;
}

// k-means++ seeding followed by Lloyd iterations; empty clusters keep their centre.
std::vector<std::vector<double>> kmeans(const std::vector<std::span<const double>>& points, std::size_t k, Rng& rng,
                                        std::vector<std::size_t>* labels = nullptr) {
    const std::size_t count = points.size();
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    const std::size_t first = rng.index(count);
    centers.emplace_back(points[first].begin(), points[first].end());
    std::vector<double> best(count);
    for (std::size_t i = 0; i < count; ++i) best[i] = sq_dist(points[i], centers[0]);
    while (centers.size() < k) {
        double total = 0.0;
        for (double b : best) total += b;
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            pick = count - 1;
            for (std::size_t i = 0; i < count; ++i) {
                r -= best[i];
                if (r < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.index(count);
        }
        centers.emplace_back(points[pick].begin(), points[pick].end());
        for (std::size_t i = 0; i < count; ++i) best[i] = std::min(best[i], sq_dist(points[i], centers.back()));
    }

    std::vector<std::size_t> assign(count, 0);
    const std::size_t dims = centers[0].size();
    for (int iter = 0; iter < 10; ++iter) {
        bool changed = iter == 0;
        for (std::size_t i = 0; i < count; ++i) {
            std::size_t arg = 0;
            double dist = sq_dist(points[i], centers[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double dc = sq_dist(points[i], centers[c]);
                if (dc < dist) {
                    dist = dc;
                    arg = c;
                }
            }
            if (assign[i] != arg) changed = true;
            assign[i] = arg;
        }
        if (!changed) break;
        std::vector<std::vector<double>> sums(k, std::vector<double>(dims, 0.0));
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t i = 0; i < count; ++i) {
            ++sizes[assign[i]];
            for (std::size_t e = 0; e < dims; ++e) sums[assign[i]][e] += points[i][e];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] == 0) continue;
            for (std::size_t e = 0; e < dims; ++e) centers[c][e] = sums[c][e] / static_cast<double>(sizes[c]);
        }
    }
    if (labels) *labels = std::move(assign);
    return centers;
}

void check_params(const HmmParams& p) {
    if (p.n_states < 1 || p.n_mix < 1) throw Error(ErrorCode::ConfigInvalid, "HMM needs n_states >= 1 and n_mix >= 1");
    if (!(p.cov_floor > 0.0)) throw Error(ErrorCode::ConfigInvalid, "cov_floor must be positive");
}

}  // namespace

ObservationMatrix stack_observation(const ChannelSet& cs, std::span<const ChannelId> selected, const NormStats& norm) {
    if (selected.empty()) throw Error(ErrorCode::MissingChannel, "no channels selected");
    ObservationMatrix obs;
    obs.dims = selected.size();
    obs.frames = cs[selected[0]].size();
    std::vector<Sequence> cols;
    cols.reserve(selected.size());
    for (auto c : selected) {
        if (cs[c].empty() || cs[c].size() != obs.frames) {
            throw Error(ErrorCode::MissingChannel, std::string(channel_name(c)) + " is absent or has a different length");
        }
        cols.push_back(normalize_channel(cs[c], c, norm));
    }
    obs.data.resize(obs.frames * obs.dims);
    for (std::size_t t = 0; t < obs.frames; ++t) {
        for (std::size_t e = 0; e < obs.dims; ++e) obs.data[t * obs.dims + e] = cols[e][t];
    }
    return obs;
}

double state_log_density(const GroupHmm& hmm, std::size_t state, std::span<const double> frame) {
    const auto& st = hmm.states.at(state);
    std::vector<double> comp(st.weights.size());
    for (std::size_t k = 0; k < st.weights.size(); ++k) {
        double c = st.weights[k] > 0.0 ? std::log(st.weights[k]) : kNegInf;
        for (std::size_t e = 0; e < frame.size(); ++e) {
            const double var = st.variances[k][e];
            const double diff = frame[e] - st.means[k][e];
            c -= 0.5 * (kLog2Pi + std::log(var) + diff * diff / var);
        }
        comp[k] = c;
    }
    return log_sum_exp(comp);
}

GroupHmm init_group_hmm(std::span<const ObservationMatrix> sequences, const HmmParams& params, int group) {
    check_params(params);
    if (sequences.empty()) throw Error(ErrorCode::MissingGroup, "no sequences for group " + std::to_string(group));
    const std::size_t dims = sequences[0].dims;
    std::vector<std::span<const double>> frames;
    for (const auto& s : sequences) {
        if (s.dims != dims) throw Error(ErrorCode::DimensionMismatch, "sequences disagree on dimension");
        for (std::size_t t = 0; t < s.frames; ++t) frames.push_back(s.row(t));
    }
    if (frames.empty()) throw Error(ErrorCode::EmptyInput, "group " + std::to_string(group) + " has no frames");

    std::vector<double> mean(dims, 0.0), var(dims, 0.0);
    for (const auto& f : frames) {
        for (std::size_t e = 0; e < dims; ++e) mean[e] += f[e];
    }
    for (auto& v : mean) v /= static_cast<double>(frames.size());
    for (const auto& f : frames) {
        for (std::size_t e = 0; e < dims; ++e) var[e] += (f[e] - mean[e]) * (f[e] - mean[e]);
    }
    // exact comparison: a rounded mean leaves a tiny positive variance on constant data
    bool any_spread = false;
    for (const auto& f : frames) {
        for (std::size_t e = 0; e < dims && !any_spread; ++e) any_spread = f[e] != frames.front()[e];
        if (any_spread) break;
    }
    for (auto& v : var) {
        v /= static_cast<double>(frames.size());
        v = std::max(v, params.cov_floor);
    }
    if (!any_spread) {
        throw Error(ErrorCode::DegenerateData, "group " + std::to_string(group) + " frames have zero variance");
    }

    const std::size_t n = params.n_states;
    const std::size_t m = params.n_mix;
    Rng rng(Rng::derive(params.seed, static_cast<std::uint64_t>(group)));
    std::vector<std::size_t> labels;
    const auto state_centers = kmeans(frames, n, rng, &labels);

    GroupHmm h;
    h.group = group;
    h.initial.assign(n, 1.0 / static_cast<double>(n));
    h.transition.assign(n, std::vector<double>(n, 1.0 / static_cast<double>(n)));
    h.states.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<std::span<const double>> members;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (labels[i] == j) members.push_back(frames[i]);
        }
        auto& st = h.states[j];
        st.weights.assign(m, 1.0 / static_cast<double>(m));
        if (members.empty()) {
            st.means.assign(m, state_centers[j]);
        } else {
            st.means = kmeans(members, m, rng);
        }
        st.variances.assign(m, var);
    }
    return h;
}

GroupHmm fit_group_hmm(std::span<const ObservationMatrix> sequences, const HmmParams& params, int group,
                       EmTrace* trace) {
    GroupHmm h = init_group_hmm(sequences, params, group);
    std::size_t frames = 0;
    for (const auto& s : sequences) frames += s.frames;

    EmTrace local;
    local.group = group;
    local.frames = frames;
    std::size_t floored_last = 0;
    ForwardPass fp;
    for (std::size_t iter = 0;; ++iter) {
        const FlatHmm flat(h);
        Accumulator acc(flat.n, flat.m, flat.d);
        for (const auto& s : sequences) accumulate(flat, s, fp, acc);
        if (!std::isfinite(acc.log_likelihood)) {
            throw Error(ErrorCode::NumericFailure, "non-finite training log-likelihood for group " + std::to_string(group));
        }

        local.log_likelihood.push_back(acc.log_likelihood);
        local.floor_events.push_back(floored_last);
        if (iter > 0) {
            const double prev = local.log_likelihood[iter - 1];
            const double gain = acc.log_likelihood - prev;
            if (gain < -1e-10 * std::max(1.0, std::abs(prev))) {
                log_event(LogLevel::Warn, "em_likelihood_dip",
                          {{"group", group}, {"iteration", iter}, {"drop", -gain}, {"floor_events", floored_last}});
            }
            if (gain / static_cast<double>(frames) < params.em_tol) break;
        }
        if (iter >= params.max_em_iter) break;
        floored_last = maximize(h, acc, params.cov_floor);
    }
    log_event(LogLevel::Debug, "em_done",
              {{"group", group}, {"iterations", local.log_likelihood.size() - 1},
               {"log_likelihood", local.log_likelihood.back()}});
    if (trace) *trace = std::move(local);
    return h;
}

double log_likelihood(const GroupHmm& hmm, const ObservationMatrix& obs) {
    if (obs.frames == 0) throw Error(ErrorCode::EmptySequence, "empty observation");
    if (obs.dims != hmm.dims()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "observation has " + std::to_string(obs.dims) + " dims, model " + std::to_string(hmm.dims()));
    }
    const FlatHmm flat(hmm);
    ForwardPass fp;
    forward(flat, obs, fp, false);
    return fp.log_likelihood;
}

double score(const GroupHmm& hmm, const ObservationMatrix& obs, bool normalize_by_length) {
    const double ll = log_likelihood(hmm, obs);
    return normalize_by_length ? ll / static_cast<double>(obs.frames) : ll;
}

HmmModel train_hmm(std::span<const Labeled> train, std::span<const ChannelId> selected, const HmmParams& params,
                   const std::optional<NormStats>& norm, std::vector<EmTrace>* traces) {
    check_params(params);
    if (selected.empty()) throw Error(ErrorCode::MissingChannel, "train_hmm needs at least one selected channel");
    HmmModel model;
    model.selected.assign(selected.begin(), selected.end());
    model.norm = norm ? *norm : fit_norm(train);
    model.params = params;

    std::array<std::vector<ObservationMatrix>, kGroupCount> by_group;
    for (const auto& l : train) {
        if (!is_valid_group(l.group)) throw Error(ErrorCode::OutOfRangeGroup, std::to_string(l.group));
        by_group[group_index(l.group)].push_back(stack_observation(l.channels, selected, model.norm));
    }
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        if (by_group[group_index(g)].size() < 2) {
            throw Error(ErrorCode::MissingGroup, "group " + std::to_string(g) + " has fewer than 2 training sessions");
        }
    }

    std::vector<GroupHmm> fitted(kGroupCount);
    std::vector<EmTrace> group_traces(kGroupCount);
    parallel_for(kGroupCount, [&](std::size_t k) {
        const int g = kMinGroup + static_cast<int>(k);
        fitted[k] = fit_group_hmm(by_group[k], params, g, &group_traces[k]);
    });
    for (auto& h : fitted) model.models.emplace(h.group, std::move(h));
    if (traces) *traces = std::move(group_traces);
    return model;
}

Classification classify_hmm(const HmmModel& model, const ChannelSet& cs) {
    const auto obs = stack_observation(cs, model.selected, model.norm);
    Classification out;
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        const auto it = model.models.find(g);
        if (it == model.models.end()) throw Error(ErrorCode::MissingGroup, "model lacks group " + std::to_string(g));
        out.scores[group_index(g)] = score(it->second, obs, model.params.normalize_by_length);
    }
    out.group = argmax_group(out.scores);
    return out;
}

nlohmann::json to_json(const HmmParams& p) {
    return {{"n_states", p.n_states},   {"n_mix", p.n_mix},   {"cov_floor", p.cov_floor},
            {"max_em_iter", p.max_em_iter}, {"em_tol", p.em_tol}, {"normalize_by_length", p.normalize_by_length},
            {"seed", p.seed}};
}

HmmParams hmm_params_from_json(const nlohmann::json& j, HmmParams p) {
    p.n_states = j.value("n_states", p.n_states);
    p.n_mix = j.value("n_mix", p.n_mix);
    p.cov_floor = j.value("cov_floor", p.cov_floor);
    p.max_em_iter = j.value("max_em_iter", p.max_em_iter);
    p.em_tol = j.value("em_tol", p.em_tol);
    p.normalize_by_length = j.value("normalize_by_length", p.normalize_by_length);
    p.seed = j.value("seed", p.seed);
    return p;
}

nlohmann::json to_json(const HmmModel& model) {
    nlohmann::json selected = nlohmann::json::array();
    for (auto c : model.selected) selected.push_back(channel_name(c));
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& [g, h] : model.models) {
        nlohmann::json states = nlohmann::json::array();
        for (const auto& st : h.states) {
            states.push_back({{"weights", st.weights}, {"means", st.means}, {"variances", st.variances}});
        }
        groups.push_back({{"group", g}, {"initial", h.initial}, {"transition", h.transition}, {"states", states}});
    }
    return {{"format", "agedetect-hmm"}, {"version", kHmmFormatVersion}, {"params", to_json(model.params)},
            {"selected", selected},      {"norm", to_json(model.norm)},  {"groups", groups}};
}

HmmModel hmm_model_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "agedetect-hmm") {
        throw Error(ErrorCode::ModelFormatError, "not an HMM model document");
    }
    if (!j.contains("version") || j["version"] != kHmmFormatVersion) {
        throw Error(ErrorCode::ModelFormatError, "unsupported HMM model version");
    }
    HmmModel model;
    try {
        model.params = hmm_params_from_json(j.at("params"));
        for (const auto& name : j.at("selected")) {
            const auto c = parse_channel(name.get<std::string>());
            if (!c) throw Error(ErrorCode::ModelFormatError, "unknown channel in model");
            model.selected.push_back(*c);
        }
        model.norm = norm_from_json(j.at("norm"));
        for (const auto& gj : j.at("groups")) {
            GroupHmm h;
            h.group = gj.at("group").get<int>();
            h.initial = gj.at("initial").get<std::vector<double>>();
            h.transition = gj.at("transition").get<std::vector<std::vector<double>>>();
            for (const auto& sj : gj.at("states")) {
                StateMixture st;
                st.weights = sj.at("weights").get<std::vector<double>>();
                st.means = sj.at("means").get<std::vector<std::vector<double>>>();
                st.variances = sj.at("variances").get<std::vector<std::vector<double>>>();
                h.states.push_back(std::move(st));
            }
            const std::size_t n = h.initial.size();
            bool ok = is_valid_group(h.group) && n > 0 && h.transition.size() == n && h.states.size() == n;
            for (const auto& row : h.transition) ok = ok && row.size() == n;
            for (const auto& st : h.states) {
                ok = ok && !st.weights.empty() && st.means.size() == st.weights.size() &&
                     st.variances.size() == st.weights.size();
                for (std::size_t k = 0; ok && k < st.means.size(); ++k) {
                    ok = st.means[k].size() == model.selected.size() && st.variances[k].size() == model.selected.size();
                }
            }
            if (!ok) throw Error(ErrorCode::ModelFormatError, "inconsistent HMM shapes");
            model.models.emplace(h.group, std::move(h));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ModelFormatError, std::string("HMM model: ") + e.what());
    }
    if (model.models.size() != static_cast<std::size_t>(kGroupCount)) {
        throw Error(ErrorCode::ModelFormatError, "HMM model must contain all 7 groups");
    }
    return model;
}

}  // namespace agedetect
