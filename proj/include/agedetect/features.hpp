#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "agedetect/ingest.hpp"

namespace agedetect {

/// The 25 per-sample channels, in canonical order.
enum class ChannelId : std::size_t {
    X, Y, Z, Theta, V, Rho, A,
    dX, dY, dZ, dTheta, dV, dRho, dA,
    ddX, ddY,
    Vr, Alpha, dAlpha, Sin, Cos, R5, R7,
    Inside, T,
};

inline constexpr std::size_t kChannelCount = 25;

constexpr std::size_t index_of(ChannelId c) { return static_cast<std::size_t>(c); }

std::string_view channel_name(ChannelId c);
std::optional<ChannelId> parse_channel(std::string_view name);
/// Parses a comma-separated channel list; throws MissingChannel on an unknown token.
std::vector<ChannelId> parse_channel_list(std::string_view csv);
std::array<ChannelId, kChannelCount> all_channels();

/// Offset used to guard divisions and logarithms.
inline constexpr double kEps = 1e-8;

using Sequence = std::vector<double>;

struct ChannelSet {
    std::string child_id;
    std::size_t session_index = 0;
    std::array<Sequence, kChannelCount> channels;

    const Sequence& operator[](ChannelId c) const { return channels[index_of(c)]; }
    Sequence& operator[](ChannelId c) { return channels[index_of(c)]; }
    std::size_t length() const { return channels[0].size(); }
};

/// A channel set with its ground-truth group.
struct Labeled {
    ChannelSet channels;
    int group = kMinGroup;
};

struct NormStats {
    std::array<double, kChannelCount> mean{};
    std::array<double, kChannelCount> stddev{};
    /// Channels that were constant on the training data (stddev coerced to 1).
    std::array<bool, kChannelCount> flagged{};
};

/// Second-order regression derivative with end replication:
/// d_n = ((s[n+1] - s[n-1]) + 2 (s[n+2] - s[n-2])) / 10.
Sequence derivative(std::span<const double> seq);

/// Removes 2*pi jumps between consecutive angles.
Sequence unwrap_angles(std::span<const double> angles);

/// Derives all 25 channels from the pen-down samples, stroke by stroke.
ChannelSet extract_channels(const RawSession& session, std::size_t session_index = 0);

NormStats fit_norm(std::span<const ChannelSet> train);
NormStats fit_norm(std::span<const Labeled> train);

/// z-scores every channel except Inside.
ChannelSet apply_norm(const ChannelSet& cs, const NormStats& stats);
Sequence normalize_channel(std::span<const double> values, ChannelId channel, const NormStats& stats);

nlohmann::json to_json(const NormStats& stats);
NormStats norm_from_json(const nlohmann::json& j);

/// One row per sample, one named column per channel.
std::string channels_to_csv(const ChannelSet& cs);

}  // namespace agedetect
