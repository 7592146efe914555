#include "agedetect/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "agedetect/error.hpp"
#include "agedetect/parallel.hpp"
#include "agedetect/random.hpp"

namespace agedetect {

namespace {

constexpr double kTurnSd = 0.15;
constexpr double kSessionPressureSd = 0.015;

// Rounds to `decimals` places; dividing gives the double nearest the decimal value.
double round_to(double v, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(v * scale) / scale;
}

// Reflects a coordinate into [0, hi]; returns true if it bounced.
bool reflect(double& v, double hi) {
    bool bounced = false;
    while (v < 0.0 || v > hi) {
        v = v < 0.0 ? -v : 2.0 * hi - v;
        bounced = true;
    }
    return bounced;
}

}  // namespace

GroupProfile group_profile(int group, double separability) {
    if (!is_valid_group(group)) throw Error(ErrorCode::OutOfRangeGroup, std::to_string(group));
    const double s = std::clamp(separability, 0.0, 1.0) * static_cast<double>(group_index(group) - 3);
    GroupProfile p;
    p.group = group;
    p.mean_speed = 4.5 + 0.5 * s;
    p.speed_jitter = 0.3;
    p.pressure_mean = 0.49 + 0.08 * s;
    p.pressure_std = 0.06;
    p.tremor_amplitude = 2.5 - 0.5 * s;
    p.tremor_frequency = 0.08;
    p.strokes_min = static_cast<int>(std::lround(4.0 + 0.5 * s));
    p.strokes_max = p.strokes_min + 4;
    p.stroke_length_min = static_cast<int>(std::lround(20.0 + 2.0 * s));
    p.stroke_length_max = p.stroke_length_min + 20;
    p.inside_probability = 0.73 + 0.06 * s;
    p.gap_ms = 600.0 + 50.0 * s;
    return p;
}

RawSession generate_session(const GroupProfile& p, const std::string& child_id, Gender gender, std::uint64_t seed) {
    Rng rng(seed);
    RawSession session;
    session.child_id = child_id;
    session.group = p.group;
    session.gender = gender;
    session.device = {{"generator", "agedetect-synth"}, {"canvas", {kCanvasWidth, kCanvasHeight}}};

    const double pressure_offset = rng.normal(0.0, kSessionPressureSd);
    const auto strokes = rng.integer(p.strokes_min, p.strokes_max);
    std::int64_t t = 0;
    for (std::int64_t k = 0; k < strokes; ++k) {
        const auto length = rng.integer(p.stroke_length_min, p.stroke_length_max);
        double x = rng.uniform(200.0, kCanvasWidth - 200.0);
        double y = rng.uniform(150.0, kCanvasHeight - 150.0);
        double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        RawSample last;
        for (std::int64_t n = 0; n < length; ++n) {
            if (n > 0) {
                heading += rng.normal(0.0, kTurnSd);
                const double step = std::max(0.1, rng.normal(p.mean_speed, p.speed_jitter));
                x += step * std::cos(heading);
                y += step * std::sin(heading);
                if (reflect(x, kCanvasWidth)) heading = std::numbers::pi - heading;
                if (reflect(y, kCanvasHeight)) heading = -heading;
            }
            const double wobble =
                p.tremor_amplitude * std::sin(2.0 * std::numbers::pi * p.tremor_frequency * static_cast<double>(n) + phase);
            double rx = x - wobble * std::sin(heading);
            double ry = y + wobble * std::cos(heading);
            reflect(rx, kCanvasWidth);
            reflect(ry, kCanvasHeight);

            RawSample s;
            s.t_ms = t;
            s.x = round_to(rx, 2);
            s.y = round_to(ry, 2);
            s.pressure = round_to(std::clamp(rng.normal(p.pressure_mean + pressure_offset, p.pressure_std), 0.01, 1.0), 4);
            s.action = PenAction::Down;
            s.inside = rng.bernoulli(p.inside_probability);
            session.samples.push_back(s);
            last = s;
            t += kSynthSampleMs;
        }
        RawSample up = last;
        up.t_ms = t;
        up.pressure = 0.0;
        up.action = PenAction::Up;
        session.samples.push_back(up);
        t += static_cast<std::int64_t>(std::lround(p.gap_ms));
    }
    validate_session(session);
    return session;
}

std::vector<RawSession> generate_corpus(const SynthConfig& cfg) {
    if (cfg.sessions_per_group < 1) throw Error(ErrorCode::ConfigInvalid, "sessions_per_group must be >= 1");
    const std::size_t per = cfg.sessions_per_group;
    std::vector<RawSession> out(per * kGroupCount);
    parallel_for(out.size(), [&](std::size_t i) {
        const int group = kMinGroup + static_cast<int>(i / per);
        const std::size_t child = i % per;
        char id[48];
        std::snprintf(id, sizeof id, "g%dc%04zu", group, child);
        out[i] = generate_session(group_profile(group, cfg.separability), id, child % 2 == 0 ? Gender::F : Gender::M,
                                  Rng::derive(cfg.seed, i));
    });
    return out;
}

void write_corpus(std::span<const RawSession> sessions, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& s : sessions) write_session(s, dir, s.child_id);
}

}  // namespace agedetect
