#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "agedetect/elastic.hpp"
#include "agedetect/features.hpp"

namespace agedetect {

inline constexpr int kHmmFormatVersion = 1;

struct HmmParams {
    std::size_t n_states = 8;
    std::size_t n_mix = 4;
    /// Lower bound on every diagonal variance, in z-scored units.
    double cov_floor = 1e-4;
    std::size_t max_em_iter = 100;
    /// EM stops once the per-frame log-likelihood gain falls below this.
    double em_tol = 1e-4;
    /// Divide the forward log-likelihood by the number of frames when scoring.
    bool normalize_by_length = true;
    std::uint64_t seed = 1;
};

/// Frames x dims, row-major.
struct ObservationMatrix {
    std::size_t frames = 0;
    std::size_t dims = 0;
    std::vector<double> data;

    std::span<const double> row(std::size_t t) const { return {data.data() + t * dims, dims}; }
    double operator()(std::size_t t, std::size_t d) const { return data[t * dims + d]; }
};

/// Diagonal-covariance Gaussian mixture attached to one hidden state.
struct StateMixture {
    std::vector<double> weights;                 // M
    std::vector<std::vector<double>> means;      // M x D
    std::vector<std::vector<double>> variances;  // M x D
};

struct GroupHmm {
    int group = kMinGroup;
    std::vector<double> initial;                  // N
    std::vector<std::vector<double>> transition;  // N x N, rows sum to 1
    std::vector<StateMixture> states;             // N

    std::size_t n_states() const { return initial.size(); }
    std::size_t n_mix() const { return states.empty() ? 0 : states[0].weights.size(); }
    std::size_t dims() const { return states.empty() || states[0].means.empty() ? 0 : states[0].means[0].size(); }
};

struct HmmModel {
    std::map<int, GroupHmm> models;
    std::vector<ChannelId> selected;
    NormStats norm;
    HmmParams params;
};

/// Per-iteration record of one group's Baum-Welch run.
struct EmTrace {
    int group = kMinGroup;
    /// Total training log-likelihood of each successive parameter set.
    std::vector<double> log_likelihood;
    /// Variances clamped to cov_floor in the M-step that produced entry k (entry 0 is initialisation).
    std::vector<std::size_t> floor_events;
    std::size_t frames = 0;
};

/// Column d = z-scored channel selected[d].
ObservationMatrix stack_observation(const ChannelSet& cs, std::span<const ChannelId> selected, const NormStats& norm);

/// log sum_m w_m N(frame; mu_m, diag var_m) for one state.
double state_log_density(const GroupHmm& hmm, std::size_t state, std::span<const double> frame);

/// Deterministic start point: uniform initial/transition, k-means++ state
/// centres with k-means++ mixture centres inside each state's cluster, pooled
/// variance, uniform weights.
GroupHmm init_group_hmm(std::span<const ObservationMatrix> sequences, const HmmParams& params, int group);

/// Baum-Welch over all sequences of one group.
GroupHmm fit_group_hmm(std::span<const ObservationMatrix> sequences, const HmmParams& params, int group,
                       EmTrace* trace = nullptr);

/// Forward log-likelihood log p(obs | hmm), computed with per-frame rescaling.
double log_likelihood(const GroupHmm& hmm, const ObservationMatrix& obs);

/// log_likelihood, divided by the frame count when `normalize_by_length`.
double score(const GroupHmm& hmm, const ObservationMatrix& obs, bool normalize_by_length = true);

HmmModel train_hmm(std::span<const Labeled> train, std::span<const ChannelId> selected, const HmmParams& params,
                   const std::optional<NormStats>& norm = std::nullopt, std::vector<EmTrace>* traces = nullptr);

/// argmax over group scores, ties to the lower group.
Classification classify_hmm(const HmmModel& model, const ChannelSet& cs);

nlohmann::json to_json(const HmmParams& params);
HmmParams hmm_params_from_json(const nlohmann::json& j, HmmParams defaults = {});
nlohmann::json to_json(const HmmModel& model);
HmmModel hmm_model_from_json(const nlohmann::json& j);

}  // namespace agedetect
