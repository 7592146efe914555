#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "agedetect/features.hpp"

namespace agedetect {

inline constexpr int kDbaFormatVersion = 1;

enum class LocalCost { Absolute, Squared };

struct WarpResult {
    /// Sum of local costs along the optimal alignment.
    double distance = 0.0;
    std::size_t path_length = 0;
    /// (i, j) index pairs from (0, 0) to (n-1, m-1); filled only on request.
    std::vector<std::pair<std::size_t, std::size_t>> path;

    double normalized() const { return distance / static_cast<double>(path_length); }
};

/// Exact unconstrained DTW with steps (1,0), (0,1), (1,1).
/// Among equal-cost predecessors the diagonal wins, then (i-1, j), then (i, j-1).
WarpResult dtw(std::span<const double> a, std::span<const double> b, LocalCost cost = LocalCost::Absolute,
               bool keep_path = false);

/// Linear-interpolation resampling to `length` points.
Sequence resample(std::span<const double> seq, std::size_t length);

struct DbaResult {
    Sequence average;
    std::size_t iterations = 0;
    /// Inertia of each successive average, starting with the initial medoid.
    std::vector<double> inertia;

    double final_inertia() const { return inertia.empty() ? 0.0 : inertia.back(); }
};

/// DTW barycenter averaging.
///
/// Starts from the medoid (least total DTW cost to the other inputs) resampled
/// to the lower-median input length. Each iteration aligns every input to the
/// current average and replaces every average point by the mean of the values
/// aligned to it. Alignment and inertia use the squared local cost, so inertia
/// (sum over inputs of the squared-cost DTW) never increases. Stops when the
/// relative inertia improvement drops below `tol` or after `max_iter` updates.
DbaResult dba(std::span<const Sequence> sequences, std::size_t max_iter = 30, double tol = 1e-4);

struct DbaConfig {
    std::size_t max_iter = 30;
    double tol = 1e-4;
};

struct Prototype {
    int group = kMinGroup;
    ChannelId channel = ChannelId::X;
    Sequence sequence;
    std::size_t iterations = 0;
    double inertia = 0.0;
};

struct DbaModel {
    std::vector<ChannelId> selected;
    NormStats norm;
    DbaConfig config;
    std::map<std::pair<int, ChannelId>, Prototype> prototypes;

    const Prototype& prototype(int group, ChannelId channel) const;
};

/// Result of classifying one channel set.
struct Classification {
    int group = kMinGroup;
    /// Indexed by group_index(); lower is better for DBA, higher for HMM.
    std::array<double, kGroupCount> scores{};
};

/// One dba() run per (group, selected channel) over z-scored channels.
/// Uses `norm` if given, otherwise fits it on `train`.
DbaModel train_dba(std::span<const Labeled> train, std::span<const ChannelId> selected, const DbaConfig& cfg = {},
                   const std::optional<NormStats>& norm = std::nullopt);

/// Per selected channel (model order), per group: path-length-normalized DTW
/// distance between the z-scored channel and the group's prototype.
std::vector<std::array<double, kGroupCount>> dba_channel_distances(const DbaModel& model, const ChannelSet& cs);

/// Sums the per-channel distances and picks the smallest; ties go to the lower group.
Classification classify_dba(const DbaModel& model, const ChannelSet& cs);

/// argmin over summed scores with lower-group tie break.
int argmin_group(const std::array<double, kGroupCount>& scores);
int argmax_group(const std::array<double, kGroupCount>& scores);

nlohmann::json to_json(const DbaModel& model);
DbaModel dba_model_from_json(const nlohmann::json& j);

}  // namespace agedetect
