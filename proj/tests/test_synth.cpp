#include <doctest.h>

#include <fstream>
#include <sstream>

#include "agedetect/ingest.hpp"
#include "agedetect/synth.hpp"
#include "fixtures.hpp"

using namespace agedetect;

TEST_CASE("corpus is reproducible byte for byte") {
    SynthConfig cfg;
    cfg.sessions_per_group = 5;
    cfg.seed = 11;
    const auto a = generate_corpus(cfg);
    const auto b = generate_corpus(cfg);
    REQUIRE(a.size() == 35);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(serialize_csv(a[i]) == serialize_csv(b[i]));
        CHECK(a[i].child_id == b[i].child_id);
    }
    cfg.seed = 12;
    CHECK(serialize_csv(generate_corpus(cfg)[0]) != serialize_csv(a[0]));
}

TEST_CASE("written corpus loads back and validates") {
    SynthConfig cfg;
    cfg.sessions_per_group = 5;
    const auto sessions = generate_corpus(cfg);
    const auto dir = fx::temp_dir("synth_corpus");
    write_corpus(sessions, dir);
    const auto loaded = load_directory(dir);
    REQUIRE(loaded.size() == sessions.size());
    for (const auto& s : loaded) {
        auto copy = s;
        CHECK_NOTHROW(validate_session(copy));
        CHECK(s.warnings.empty());
    }
    CHECK(loaded[0].gender == Gender::F);
    CHECK(loaded[1].gender == Gender::M);
    CHECK_NOTHROW(make_split(loaded, 1));
}

TEST_CASE("profiles are monotone in the group and collapse at zero separability") {
    for (int g = kMinGroup; g < kMaxGroup; ++g) {
        const auto a = group_profile(g, 1.0), b = group_profile(g + 1, 1.0);
        CHECK(a.mean_speed < b.mean_speed);
        CHECK(a.pressure_mean < b.pressure_mean);
        CHECK(a.tremor_amplitude > b.tremor_amplitude);
        CHECK(a.inside_probability < b.inside_probability);
        CHECK(a.strokes_min <= b.strokes_min);
        CHECK(a.gap_ms < b.gap_ms);
    }
    const auto ref = group_profile(kMinGroup, 0.0);
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        const auto p = group_profile(g, 0.0);
        CHECK(p.mean_speed == ref.mean_speed);
        CHECK(p.pressure_mean == ref.pressure_mean);
        CHECK(p.tremor_amplitude == ref.tremor_amplitude);
        CHECK(p.strokes_min == ref.strokes_min);
        CHECK(p.stroke_length_max == ref.stroke_length_max);
        CHECK(p.inside_probability == ref.inside_probability);
    }
}

TEST_CASE("sample statistics follow the profile") {
    SynthConfig cfg;
    cfg.sessions_per_group = 200;
    cfg.seed = 5;
    const auto sessions = generate_corpus(cfg);
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        CAPTURE(g);
        const auto p = group_profile(g, 1.0);
        double pressure = 0, inside = 0, down = 0, strokes = 0, n = 0;
        for (const auto& s : sessions) {
            if (s.group != g) continue;
            ++n;
            for (const auto& x : s.samples) {
                if (x.action == PenAction::Down) {
                    pressure += x.pressure;
                    inside += x.inside ? 1.0 : 0.0;
                    ++down;
                } else {
                    ++strokes;
                }
            }
        }
        const double expect_strokes = 0.5 * (p.strokes_min + p.strokes_max);
        CHECK(std::abs(pressure / down - p.pressure_mean) / p.pressure_mean < 0.05);
        CHECK(std::abs(inside / down - p.inside_probability) / p.inside_probability < 0.05);
        CHECK(std::abs(strokes / n - expect_strokes) / expect_strokes < 0.05);
    }
}

TEST_CASE("timestamps and canvas") {
    const auto s = generate_session(group_profile(5, 1.0), "x", Gender::F, 99);
    for (std::size_t i = 1; i < s.samples.size(); ++i) CHECK(s.samples[i].t_ms > s.samples[i - 1].t_ms);
    for (const auto& x : s.samples) {
        CHECK(x.x >= 0.0);
        CHECK(x.x <= kCanvasWidth);
        CHECK(x.y >= 0.0);
        CHECK(x.y <= kCanvasHeight);
    }
    CHECK(s.samples.back().action == PenAction::Up);
}
