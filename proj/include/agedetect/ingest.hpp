#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace agedetect {

inline constexpr int kMinGroup = 2;
inline constexpr int kMaxGroup = 8;
inline constexpr int kGroupCount = kMaxGroup - kMinGroup + 1;
/// Sessions longer than this are accepted but flagged.
inline constexpr std::int64_t kMaxSessionMs = 120000;

constexpr bool is_valid_group(int group) { return group >= kMinGroup && group <= kMaxGroup; }
constexpr int group_index(int group) { return group - kMinGroup; }

enum class PenAction { Down, Up };
enum class Gender { F, M, Unknown };

char gender_code(Gender g);
Gender parse_gender(std::string_view code);

struct RawSample {
    std::int64_t t_ms = 0;
    double x = 0.0;
    double y = 0.0;
    double pressure = 0.0;
    PenAction action = PenAction::Down;
    bool inside = false;
};

struct RawSession {
    std::string child_id;
    int group = kMinGroup;
    Gender gender = Gender::Unknown;
    std::vector<RawSample> samples;
    nlohmann::json device = nlohmann::json::object();
    /// Non-fatal findings from validation (e.g. over-long session).
    std::vector<std::string> warnings;
};

/// Maximal run of pen-down samples.
struct Stroke {
    std::vector<RawSample> samples;
};

enum class Split { Train, Validation, Evaluation };

std::string_view split_token(Split s);
Split parse_split_token(std::string_view token);

struct SplitPlan {
    std::uint64_t seed = 0;
    std::map<std::string, Split> assignment;
};

/// Checks sample-level and session-level invariants; throws agedetect::Error.
/// Appends warnings (not errors) for sessions over kMaxSessionMs.
void validate_session(RawSession& session);

/// Reads `<stem>.csv` and its sidecar `<stem>.meta.json`.
RawSession parse_session(const std::filesystem::path& csv_path);

/// Parses from in-memory text (the sidecar already decoded).
RawSession parse_session_text(std::string_view csv_text, const nlohmann::json& meta);

/// Canonical CSV form; parse_session_text(serialize_csv(s)) round-trips.
std::string serialize_csv(const RawSession& session);
/// Canonical sidecar form (sorted keys, two-space indent, trailing newline).
std::string serialize_meta(const RawSession& session);

/// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.meta.json`.
void write_session(const RawSession& session, const std::filesystem::path& dir, const std::string& stem);

/// All `*.csv` sessions in a directory, parsed in lexicographic path order.
std::vector<RawSession> load_directory(const std::filesystem::path& dir);
std::vector<std::filesystem::path> list_session_files(const std::filesystem::path& dir);

std::vector<Stroke> segment_strokes(const RawSession& session);

/// Stratified by (group, gender) cell and split by child.
SplitPlan make_split(std::span<const RawSession> sessions, std::uint64_t seed);

nlohmann::json to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const nlohmann::json& j);

}  // namespace agedetect
