#include "agedetect/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "agedetect/error.hpp"
#include "agedetect/log.hpp"

namespace agedetect {

namespace {

constexpr std::array<std::string_view, kChannelCount> kChannelNames = {
    "X",   "Y",   "Z",  "Theta", "V",     "Rho",    "A",
    "dX",  "dY",  "dZ", "dTheta", "dV",   "dRho",   "dA",
    "ddX", "ddY",
    "Vr",  "Alpha", "dAlpha", "Sin", "Cos", "R5", "R7",
    "Inside", "T",
};

// Per-stroke kinematics; every output has the stroke's length.
void stroke_channels(const Stroke& stroke, std::int64_t t0, std::array<Sequence, kChannelCount>& out) {
    const std::size_t n = stroke.samples.size();
    Sequence x(n), y(n), z(n), t(n), inside(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = stroke.samples[i];
        x[i] = s.x;
        y[i] = s.y;
        z[i] = s.pressure;
        t[i] = static_cast<double>(s.t_ms - t0);
        inside[i] = s.inside ? 1.0 : 0.0;
    }

    const Sequence dx = derivative(x);
    const Sequence dy = derivative(y);
    Sequence theta(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
        theta[i] = std::atan2(dy[i], dx[i]);
        v[i] = std::hypot(dx[i], dy[i]);
    }
    // derivatives of angles are taken on the unwrapped angle so a +-pi
    // crossing does not produce a 2*pi spike
    const Sequence dtheta = derivative(unwrap_angles(theta));
    const Sequence dv = derivative(v);
    Sequence rho(n), a(n);
    for (std::size_t i = 0; i < n; ++i) {
        rho[i] = std::log(v[i] / (std::abs(dtheta[i]) + kEps) + kEps);
        a[i] = std::sqrt(dv[i] * dv[i] + (v[i] * dtheta[i]) * (v[i] * dtheta[i]));
    }

    Sequence vr(n), alpha(n), sine(n), cosine(n), r5(n), r7(n);
    const auto window = [n](std::size_t i, std::size_t half) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n - 1, i + half);
        return std::pair{lo, hi};
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto [lo, hi] = window(i, 2);
        const auto [mn, mx] = std::minmax_element(v.begin() + static_cast<std::ptrdiff_t>(lo),
                                                  v.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
        vr[i] = *mn / (*mx + kEps);
    }
    for (std::size_t i = 1; i < n; ++i) alpha[i] = std::atan2(y[i] - y[i - 1], x[i] - x[i - 1]);
    if (n > 1) alpha[0] = alpha[1];
    for (std::size_t i = 0; i < n; ++i) {
        sine[i] = std::sin(alpha[i]);
        cosine[i] = std::cos(alpha[i]);
    }
    const auto ratio = [&](std::size_t i, std::size_t half) {
        const auto [lo, hi] = window(i, half);
        double length = 0.0;
        for (std::size_t k = lo + 1; k <= hi; ++k) length += std::hypot(x[k] - x[k - 1], y[k] - y[k - 1]);
        const auto [mn, mx] = std::minmax_element(x.begin() + static_cast<std::ptrdiff_t>(lo),
                                                  x.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
        return length / (*mx - *mn + kEps);
    };
    for (std::size_t i = 0; i < n; ++i) {
        r5[i] = ratio(i, 2);
        r7[i] = ratio(i, 3);
    }

    const auto put = [&](ChannelId c, const Sequence& values) {
        auto& dst = out[index_of(c)];
        dst.insert(dst.end(), values.begin(), values.end());
    };
    put(ChannelId::X, x);
    put(ChannelId::Y, y);
    put(ChannelId::Z, z);
    put(ChannelId::Theta, theta);
    put(ChannelId::V, v);
    put(ChannelId::Rho, rho);
    put(ChannelId::A, a);
    put(ChannelId::dX, dx);
    put(ChannelId::dY, dy);
    put(ChannelId::dZ, derivative(z));
    put(ChannelId::dTheta, dtheta);
    put(ChannelId::dV, dv);
    put(ChannelId::dRho, derivative(rho));
    put(ChannelId::dA, derivative(a));
    put(ChannelId::ddX, derivative(dx));
    put(ChannelId::ddY, derivative(dy));
    put(ChannelId::Vr, vr);
    put(ChannelId::Alpha, alpha);
    put(ChannelId::dAlpha, derivative(unwrap_angles(alpha)));
    put(ChannelId::Sin, sine);
    put(ChannelId::Cos, cosine);
    put(ChannelId::R5, r5);
    put(ChannelId::R7, r7);
    put(ChannelId::Inside, inside);
    put(ChannelId::T, t);
}

}  // namespace

std::string_view channel_name(ChannelId c) { return kChannelNames[index_of(c)]; }

std::optional<ChannelId> parse_channel(std::string_view name) {
    for (std::size_t i = 0; i < kChannelCount; ++i) {
        if (kChannelNames[i] == name) return static_cast<ChannelId>(i);
    }
    return std::nullopt;
}

std::vector<ChannelId> parse_channel_list(std::string_view csv) {
    std::vector<ChannelId> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        auto end = csv.find(',', start);
        if (end == std::string_view::npos) end = csv.size();
        auto token = csv.substr(start, end - start);
        while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
        while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
        if (!token.empty()) {
            const auto c = parse_channel(token);
            if (!c) throw Error(ErrorCode::MissingChannel, "unknown channel '" + std::string(token) + "'");
            if (std::find(out.begin(), out.end(), *c) == out.end()) out.push_back(*c);
        }
        start = end + 1;
    }
    return out;
}

std::array<ChannelId, kChannelCount> all_channels() {
    std::array<ChannelId, kChannelCount> out{};
    for (std::size_t i = 0; i < kChannelCount; ++i) out[i] = static_cast<ChannelId>(i);
    return out;
}

Sequence derivative(std::span<const double> seq) {
    const auto n = static_cast<std::ptrdiff_t>(seq.size());
    Sequence out(seq.size());
    const auto at = [&](std::ptrdiff_t i) { return seq[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, n - 1))]; };
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = ((at(i + 1) - at(i - 1)) + 2.0 * (at(i + 2) - at(i - 2))) / 10.0;
    }
    return out;
}

Sequence unwrap_angles(std::span<const double> angles) {
    Sequence out(angles.begin(), angles.end());
    double offset = 0.0;
    for (std::size_t i = 1; i < out.size(); ++i) {
        const double step = angles[i] - angles[i - 1];
        if (step > std::numbers::pi) {
            offset -= 2.0 * std::numbers::pi;
        } else if (step < -std::numbers::pi) {
            offset += 2.0 * std::numbers::pi;
        }
        out[i] = angles[i] + offset;
    }
    return out;
}

ChannelSet extract_channels(const RawSession& session, std::size_t session_index) {
    const auto strokes = segment_strokes(session);
    if (strokes.empty()) throw Error(ErrorCode::EmptyPenDown, "child '" + session.child_id + "' has no pen-down samples");

    ChannelSet cs;
    cs.child_id = session.child_id;
    cs.session_index = session_index;
    std::size_t total = 0;
    for (const auto& s : strokes) total += s.samples.size();
    for (auto& ch : cs.channels) ch.reserve(total);

    const std::int64_t t0 = session.samples.front().t_ms;
    for (const auto& stroke : strokes) stroke_channels(stroke, t0, cs.channels);
    return cs;
}

namespace {

NormStats fit_norm_impl(std::span<const ChannelSet* const> train) {
    NormStats stats;
    if (train.empty()) throw Error(ErrorCode::EmptyInput, "fit_norm needs at least one training set");
    for (std::size_t c = 0; c < kChannelCount; ++c) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto* cs : train) {
            for (double v : cs->channels[c]) sum += v;
            count += cs->channels[c].size();
        }
        if (count == 0) throw Error(ErrorCode::EmptyInput, "fit_norm: no samples");
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (const auto* cs : train) {
            for (double v : cs->channels[c]) ss += (v - mean) * (v - mean);
        }
        double sd = std::sqrt(ss / static_cast<double>(count));
        if (!(sd > 0.0) || !std::isfinite(sd)) {
            stats.flagged[c] = true;
            sd = 1.0;
            log_event(LogLevel::Info, "constant_channel", {{"channel", channel_name(static_cast<ChannelId>(c))}});
        }
        stats.mean[c] = mean;
        stats.stddev[c] = sd;
    }
    return stats;
}

}  // namespace

NormStats fit_norm(std::span<const ChannelSet> train) {
    std::vector<const ChannelSet*> ptrs;
    ptrs.reserve(train.size());
    for (const auto& cs : train) ptrs.push_back(&cs);
    return fit_norm_impl(ptrs);
}

NormStats fit_norm(std::span<const Labeled> train) {
    std::vector<const ChannelSet*> ptrs;
    ptrs.reserve(train.size());
    for (const auto& l : train) ptrs.push_back(&l.channels);
    return fit_norm_impl(ptrs);
}

Sequence normalize_channel(std::span<const double> values, ChannelId channel, const NormStats& stats) {
    Sequence out(values.begin(), values.end());
    if (channel == ChannelId::Inside) return out;
    const auto c = index_of(channel);
    for (auto& v : out) v = (v - stats.mean[c]) / stats.stddev[c];
    return out;
}

ChannelSet apply_norm(const ChannelSet& cs, const NormStats& stats) {
    ChannelSet out;
    out.child_id = cs.child_id;
    out.session_index = cs.session_index;
    for (std::size_t c = 0; c < kChannelCount; ++c) {
        out.channels[c] = normalize_channel(cs.channels[c], static_cast<ChannelId>(c), stats);
    }
    return out;
}

nlohmann::json to_json(const NormStats& stats) {
    nlohmann::json mean = nlohmann::json::object();
    nlohmann::json sd = nlohmann::json::object();
    nlohmann::json flagged = nlohmann::json::array();
    for (std::size_t c = 0; c < kChannelCount; ++c) {
        const auto name = std::string(kChannelNames[c]);
        mean[name] = stats.mean[c];
        sd[name] = stats.stddev[c];
        if (stats.flagged[c]) flagged.push_back(name);
    }
    return {{"mean", mean}, {"std", sd}, {"flagged", flagged}};
}

NormStats norm_from_json(const nlohmann::json& j) {
    NormStats stats;
    try {
        for (std::size_t c = 0; c < kChannelCount; ++c) {
            const auto name = std::string(kChannelNames[c]);
            stats.mean[c] = j.at("mean").at(name).get<double>();
            stats.stddev[c] = j.at("std").at(name).get<double>();
            if (!(stats.stddev[c] > 0.0)) throw Error(ErrorCode::ModelFormatError, "non-positive std for " + name);
        }
        for (const auto& name : j.at("flagged")) {
            const auto c = parse_channel(name.get<std::string>());
            if (!c) throw Error(ErrorCode::ModelFormatError, "unknown flagged channel");
            stats.flagged[index_of(*c)] = true;
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ModelFormatError, std::string("norm stats: ") + e.what());
    }
    return stats;
}

std::string channels_to_csv(const ChannelSet& cs) {
    std::string out;
    for (std::size_t c = 0; c < kChannelCount; ++c) {
        if (c) out += ',';
        out += kChannelNames[c];
    }
    out += '\n';
    std::array<char, 64> buf{};
    for (std::size_t i = 0; i < cs.length(); ++i) {
        for (std::size_t c = 0; c < kChannelCount; ++c) {
            if (c) out += ',';
            const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), cs.channels[c][i]);
            out.append(buf.data(), ptr);
        }
        out += '\n';
    }
    return out;
}

}  // namespace agedetect
