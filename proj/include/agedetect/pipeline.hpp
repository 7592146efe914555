#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "agedetect/elastic.hpp"
#include "agedetect/features.hpp"
#include "agedetect/ingest.hpp"
#include "agedetect/markov.hpp"
#include "agedetect/selection.hpp"

namespace agedetect {

inline constexpr const char* kToolVersion = "1.0.0";

struct Prediction {
    std::string child_id;
    std::size_t session_index = 0;
    int true_group = kMinGroup;
    int predicted_group = kMinGroup;
    std::array<double, kGroupCount> scores{};
};

struct EvalReport {
    double accuracy = 0.0;  // percent
    double avg_agd = 0.0;
    std::map<int, double> per_group_agd;  // only groups present in the predictions
    std::array<std::array<long, kGroupCount>, kGroupCount> confusion{};  // [true][predicted]
    std::string config_fingerprint;
};

/// |true - predicted|; both must lie in [2, 8].
int agd(int true_group, int predicted_group);

EvalReport evaluate(std::span<const Prediction> predictions);

/// One prediction per child: the most frequent predicted group (ties to the
/// lower group); scores are averaged over the child's sessions.
std::vector<Prediction> per_child_vote(std::span<const Prediction> predictions);

enum class SelectionKind { Stat, Sfs, Manual };

struct ExperimentConfig {
    std::filesystem::path data_dir;
    std::filesystem::path out_dir;
    ClassifierKind classifier = ClassifierKind::HMM;
    SelectionKind selection = SelectionKind::Sfs;
    std::vector<ChannelId> manual_channels;
    std::uint64_t seed = 1;
    HmmParams hmm;
    /// Search (N, M) on validation with all channels before selecting.
    bool grid_search = false;
    std::vector<std::pair<std::size_t, std::size_t>> grid;
    DbaConfig dba;
    bool refit_on_development = false;
    bool per_child_vote = false;
};

/// N in {8,16,32,64} x M in {4,8,16,32}.
std::vector<std::pair<std::size_t, std::size_t>> default_hmm_grid();

/// Throws ConfigInvalid on unknown keys, bad types or bad values.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 of the canonical config without out_dir, as 16 hex digits.
std::string config_fingerprint(const ExperimentConfig& cfg);

/// Compact JSON with sorted keys and floating-point numbers printed with 6 decimals.
std::string canonical_dump(const nlohmann::json& j);

nlohmann::json to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

using AnyModel = std::variant<DbaModel, HmmModel>;

/// Dispatches on the "format" field; checks the version.
AnyModel model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AnyModel& model);
AnyModel load_model(const std::filesystem::path& path);
Classification classify(const AnyModel& model, const ChannelSet& cs);

/// Channel sets in load order, with per-child session indices.
std::vector<Labeled> extract_all(std::span<const RawSession> sessions);

struct Partition {
    std::vector<Labeled> train;
    std::vector<Labeled> val;
    std::vector<Labeled> eval;
};
Partition partition(std::span<const Labeled> data, const SplitPlan& plan);

struct ExperimentResult {
    SplitPlan split;
    SelectionResult selection;
    AnyModel model;
    std::vector<Prediction> predictions;
    EvalReport report;
};

/// Runs the configured selection on train/validation. For HMM the result
/// carries the (N, M) used, after any grid search.
SelectionResult select_channels(const Partition& part, const NormStats& norm, const ExperimentConfig& cfg);

/// Trains on train, or on train + validation with refit_on_development.
AnyModel fit_model(const Partition& part, const NormStats& norm, const ExperimentConfig& cfg,
                   const SelectionResult& selection);

std::vector<Prediction> predict_all(const AnyModel& model, std::span<const Labeled> data);

/// Loads data_dir, splits by cfg.seed and extracts channels.
Partition load_partition(const ExperimentConfig& cfg, SplitPlan* plan = nullptr);

/// Selection and model fitting on one partition; does no I/O.
ExperimentResult run_partition(const Partition& part, const SplitPlan& plan, const ExperimentConfig& cfg);

/// Loads data_dir, splits, selects, trains and evaluates. When out_dir is set,
/// writes split.json, selection.json, model.json, predictions.json and report.json.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

Prediction predict(const AnyModel& model, const RawSession& session, std::size_t session_index = 0);
Prediction predict(const std::filesystem::path& model_path, const std::filesystem::path& session_path);

void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace agedetect
