#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "agedetect/ingest.hpp"

namespace agedetect {

inline constexpr double kCanvasWidth = 1280.0;
inline constexpr double kCanvasHeight = 800.0;
inline constexpr std::int64_t kSynthSampleMs = 10;

struct GroupProfile {
    int group = kMinGroup;
    double mean_speed = 0.0;  // pixels per sample
    double speed_jitter = 0.0;
    double pressure_mean = 0.0;
    double pressure_std = 0.0;
    double tremor_amplitude = 0.0;  // pixels
    double tremor_frequency = 0.0;  // cycles per sample
    int strokes_min = 1;
    int strokes_max = 1;
    int stroke_length_min = 1;  // pen-down samples
    int stroke_length_max = 1;
    double inside_probability = 0.0;
    double gap_ms = 0.0;  // pen-up time between strokes
};

struct SynthConfig {
    std::size_t sessions_per_group = 50;
    std::uint64_t seed = 1;
    /// 0 makes every group identical; 1 gives the default spacing.
    double separability = 1.0;
};

/// Profile of `group` with inter-group gaps scaled by `separability`.
GroupProfile group_profile(int group, double separability);

/// One session: strokes of a smoothed, canvas-reflected random walk with
/// tremor, one pen-up sample after each stroke.
RawSession generate_session(const GroupProfile& profile, const std::string& child_id, Gender gender,
                            std::uint64_t seed);

/// Sessions ordered by group then child; one session per child, genders alternate F, M.
std::vector<RawSession> generate_corpus(const SynthConfig& cfg);

/// Writes each session as `<child_id>.csv` + sidecar.
void write_corpus(std::span<const RawSession> sessions, const std::filesystem::path& dir);

}  // namespace agedetect
