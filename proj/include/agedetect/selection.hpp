#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "agedetect/elastic.hpp"
#include "agedetect/features.hpp"
#include "agedetect/markov.hpp"

namespace agedetect {

enum class ScoreKind { DtwInterClass, SingleChannelAGD };
enum class SelectionMethod { StatDBA, StatHMM, SfsDBA, SfsHMM, Manual };
enum class ClassifierKind { DBA, HMM };

std::string_view method_name(SelectionMethod m);
SelectionMethod parse_method_name(std::string_view name);
std::string_view classifier_name(ClassifierKind k);
/// Throws ConfigInvalid on anything but "dba" or "hmm".
ClassifierKind parse_classifier_name(std::string_view name);

struct ChannelScoreTable {
    std::array<double, kChannelCount> scores{};
    ScoreKind kind = ScoreKind::DtwInterClass;
    bool higher_is_better = true;
};

/// Validation outcome of one channel subset.
struct SubsetScore {
    ChannelId channel = ChannelId::X;  // the channel appended at this step
    double avg_agd = 0.0;
    double accuracy = 0.0;  // percent
};

struct SfsStep {
    std::vector<SubsetScore> candidates;  // in channel order
    SubsetScore best;
    bool accepted = false;
};

struct GridPoint {
    std::size_t n_states = 0;
    std::size_t n_mix = 0;
    double avg_agd = 0.0;
    double accuracy = 0.0;
};

struct SelectionResult {
    std::vector<ChannelId> selected;
    SelectionMethod method = SelectionMethod::Manual;
    /// SFS only: one entry per evaluated step; the last may be the rejected one.
    std::vector<SfsStep> trace;
    /// Statistical procedures only.
    std::optional<ChannelScoreTable> table;
    double threshold = 0.0;
    /// StatHMM only: grid evaluated in step one and the chosen (N, M).
    std::vector<GridPoint> grid;
    std::optional<HmmParams> hmm_params;
};

/// Linear-interpolation percentile (p in [0, 100]) of a non-empty sample.
double percentile(std::span<const double> values, double p);

/// Channels beyond the 70th percentile when higher is better (strictly
/// above), else strictly below the 30th; best first, ties to the lower index.
std::vector<ChannelId> percentile_rule(const ChannelScoreTable& table, double* threshold = nullptr);

/// Mean over predictions of |true - predicted| and percent correct.
std::pair<double, double> agd_and_accuracy(std::span<const int> truth, std::span<const int> predicted);

/// Per channel: mean path-normalized DTW between the 21 pairs of group prototypes.
ChannelScoreTable dba_interclass_scores(const DbaModel& all_channel_model);

/// Per channel: validation average AGD of a single-channel HMM.
ChannelScoreTable hmm_single_channel_scores(std::span<const Labeled> train, std::span<const Labeled> val,
                                            const HmmParams& params, const NormStats& norm);

/// Channels scoring strictly above the 70th percentile, best first.
SelectionResult stat_select_dba(std::span<const Labeled> train, const DbaConfig& cfg = {},
                                const std::optional<NormStats>& norm = std::nullopt);

/// Grid-searches (N, M) on all channels, then keeps channels whose
/// single-channel AGD is strictly below the 30th percentile, best first.
SelectionResult stat_select_hmm(std::span<const Labeled> train, std::span<const Labeled> val,
                                std::span<const std::pair<std::size_t, std::size_t>> grid, const HmmParams& base,
                                const std::optional<NormStats>& norm = std::nullopt);

/// Evaluates one subset by training on `train` and scoring `val`.
SubsetScore evaluate_subset_hmm(std::span<const Labeled> train, std::span<const Labeled> val,
                                std::span<const ChannelId> subset, const HmmParams& params, const NormStats& norm);

/// Picks (N, M) from `grid` by validation AGD over all 25 channels (ties: higher
/// accuracy, then grid order); appends every evaluated point to `record`.
HmmParams grid_search_hmm(std::span<const Labeled> train, std::span<const Labeled> val,
                          std::span<const std::pair<std::size_t, std::size_t>> grid, const HmmParams& base,
                          const NormStats& norm, std::vector<GridPoint>& record);

struct SfsOptions {
    ClassifierKind classifier = ClassifierKind::HMM;
    HmmParams hmm;
    DbaConfig dba;
    /// Channels the search may pick from; empty means all 25.
    std::vector<ChannelId> pool;
};

/// Greedy forward search on validation average AGD (ties: higher accuracy,
/// then lower channel index). Stops when the best extension is strictly worse
/// than the incumbent.
SelectionResult sfs(std::span<const Labeled> train, std::span<const Labeled> val, const SfsOptions& opts,
                    const std::optional<NormStats>& norm = std::nullopt);

nlohmann::json to_json(const SelectionResult& r);
SelectionResult selection_from_json(const nlohmann::json& j);

/// "rank,channel,score" rows ordered best first.
std::string score_table_csv(const ChannelScoreTable& table);

}  // namespace agedetect
