#include <doctest.h>

#include <fstream>
#include <set>

#include "agedetect/error.hpp"
#include "agedetect/ingest.hpp"
#include "fixtures.hpp"

using namespace agedetect;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an agedetect::Error");
    return ErrorCode::Io;
}

const nlohmann::json kMeta = {{"child_id", "k1"}, {"group", 5}, {"gender", "F"}};

std::vector<RawSession> cohort(int per_group, int sessions_per_child = 1) {
    std::vector<RawSession> out;
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        for (int c = 0; c < per_group; ++c) {
            for (int s = 0; s < sessions_per_child; ++s) {
                out.push_back(fx::make_session("g" + std::to_string(g) + "c" + std::to_string(c), g,
                                               c % 2 ? Gender::M : Gender::F, {{0, 1, 1, 0.5, true, true}}));
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("three-row csv parses") {
    const auto s = parse_session_text("t_ms,x,y,pressure,action,inside\n0,1,2,0.5,down,1\n10,2,3,0.6,down,0\n20,2,3,0,up,0\n",
                                      kMeta);
    CHECK(s.samples.size() == 3);
    CHECK(s.group == 5);
    CHECK(s.gender == Gender::F);
    CHECK(s.samples[1].x == 2.0);
    CHECK(s.samples[2].action == PenAction::Up);
    CHECK_FALSE(s.samples[1].inside);
}

TEST_CASE("schema violations") {
    CHECK(code_of([] { parse_session_text("t_ms,x,y,action,inside\n0,1,2,down,1\n", kMeta); }) ==
          ErrorCode::MissingColumn);
    CHECK(code_of([] {
              parse_session_text("t_ms,x,y,pressure,action,inside\n0,1,1,.5,down,1\n10,1,1,.5,down,1\n10,1,1,.5,down,1\n"
                                 "20,1,1,.5,down,1\n",
                                 kMeta);
          }) == ErrorCode::NonMonotonicTimestamp);
    CHECK(code_of([] { parse_session_text("t_ms,x,y,pressure,action,inside\n", kMeta); }) == ErrorCode::EmptySession);
    auto bad_group = kMeta;
    bad_group["group"] = 9;
    CHECK(code_of([&] { parse_session_text("t_ms,x,y,pressure,action,inside\n0,1,1,.5,down,1\n", bad_group); }) ==
          ErrorCode::UnknownGroupLabel);
    CHECK(code_of([] { parse_session_text("t_ms,x,y,pressure,action,inside\n0,1,1,.5,sideways,1\n", kMeta); }) ==
          ErrorCode::MalformedRow);
    CHECK(code_of([] { parse_session_text("t_ms,x,y,pressure,action,inside\n0,1,1,.5,up,1\n", kMeta); }) ==
          ErrorCode::MalformedRow);
    CHECK(code_of([] { parse_session_text("t_ms,x,y,pressure,action,inside\n0,1,1,1.5,down,1\n", kMeta); }) ==
          ErrorCode::MalformedRow);
}

TEST_CASE("duplicate timestamp across a pen-up is allowed; rows are sorted by time") {
    const auto s = parse_session_text(
        "t_ms,x,y,pressure,action,inside\n20,3,3,.5,down,1\n0,1,1,.5,down,1\n10,2,2,0,up,0\n10,2,2,.5,down,1\n", kMeta);
    REQUIRE(s.samples.size() == 4);
    CHECK(s.samples[0].t_ms == 0);
    CHECK(s.samples[1].action == PenAction::Up);
    CHECK(s.samples[2].t_ms == 10);
    CHECK(s.samples[3].t_ms == 20);
}

TEST_CASE("long sessions warn but parse") {
    const auto s =
        parse_session_text("t_ms,x,y,pressure,action,inside\n0,1,1,.5,down,1\n130000,2,2,.5,down,1\n", kMeta);
    CHECK(s.warnings.size() == 1);
}

TEST_CASE("canonical round trip") {
    const std::string text = "t_ms,x,y,pressure,action,inside\n0,1.25,2,0.5,down,1\n10,3,4.125,0,up,0\n";
    const auto s = parse_session_text(text, kMeta);
    CHECK(serialize_csv(s) == text);
    const auto again = parse_session_text(serialize_csv(s), nlohmann::json::parse(serialize_meta(s)));
    CHECK(serialize_csv(again) == text);
    CHECK(serialize_meta(again) == serialize_meta(s));

    const auto dir = fx::temp_dir("ingest_roundtrip");
    write_session(s, dir, "k1");
    const auto loaded = parse_session(dir / "k1.csv");
    CHECK(serialize_csv(loaded) == text);
    CHECK(load_directory(dir).size() == 1);
    CHECK(code_of([&] { parse_session(dir / "missing.csv"); }) == ErrorCode::Io);
}

TEST_CASE("segment_strokes") {
    auto s = fx::make_session("a", 3, Gender::F,
                              {{0, 1, 1, .5, true, true},
                               {10, 1, 1, .5, true, true},
                               {20, 1, 1, 0, false, true},
                               {30, 1, 1, .5, true, true},
                               {40, 1, 1, 0, false, true}});
    auto strokes = segment_strokes(s);
    REQUIRE(strokes.size() == 2);
    CHECK(strokes[0].samples.size() == 2);
    CHECK(strokes[1].samples.size() == 1);

    auto up = fx::make_session("a", 3, Gender::F, {{0, 1, 1, 0, false, true}, {10, 1, 1, 0, false, true}});
    CHECK(segment_strokes(up).empty());

    std::vector<fx::Row> rows;
    for (int i = 0; i < 1000; ++i) rows.push_back({10 * i, 1, 1, .5, true, true});
    auto long_stroke = segment_strokes(fx::make_session("a", 3, Gender::F, rows));
    REQUIRE(long_stroke.size() == 1);
    CHECK(long_stroke[0].samples.size() == 1000);
}

TEST_CASE("split arithmetic for 10 children per group") {
    const auto sessions = cohort(10);
    const auto plan = make_split(sessions, 7);
    std::map<int, std::array<int, 3>> counts;
    for (const auto& s : sessions) ++counts[s.group][static_cast<int>(plan.assignment.at(s.child_id))];
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        CHECK(counts[g][static_cast<int>(Split::Evaluation)] == 2);
        CHECK(counts[g][static_cast<int>(Split::Validation)] == 2);
        CHECK(counts[g][static_cast<int>(Split::Train)] == 6);
    }
    const auto again = make_split(sessions, 7);
    CHECK(again.assignment == plan.assignment);
    CHECK(split_plan_from_json(to_json(plan)).assignment == plan.assignment);
}

TEST_CASE("split keeps a child's sessions together and balances gender cells") {
    const auto sessions = cohort(23, 3);
    const auto plan = make_split(sessions, 11);
    std::set<std::string> children;
    for (const auto& s : sessions) children.insert(s.child_id);
    CHECK(plan.assignment.size() == children.size());

    // per (group, gender) cell: evaluation within 20% +- 1, validation within 20% of the rest +- 1
    std::map<std::pair<int, int>, std::array<int, 3>> cells;
    for (const auto& c : children) {
        const int g = std::stoi(c.substr(1, c.find('c') - 1));
        const int idx = std::stoi(c.substr(c.find('c') + 1));
        ++cells[{g, idx % 2}][static_cast<int>(plan.assignment.at(c))];
    }
    for (const auto& [cell, n] : cells) {
        const double total = n[0] + n[1] + n[2];
        CHECK(std::abs(n[2] - 0.2 * total) <= 1.0);
        CHECK(std::abs(n[1] - 0.2 * (total - n[2])) <= 1.0);
    }
    CHECK(make_split(sessions, 12).assignment != plan.assignment);
}

TEST_CASE("split rejects small groups") {
    auto sessions = cohort(6);
    std::erase_if(sessions, [](const RawSession& s) { return s.group == 4 && s.child_id > "g4c2"; });
    CHECK(code_of([&] { make_split(sessions, 1); }) == ErrorCode::GroupTooSmall);
}

TEST_CASE("error classes") {
    CHECK(classify(ErrorCode::ConfigInvalid) == ErrorClass::Usage);
    CHECK(classify(ErrorCode::NumericFailure) == ErrorClass::Numeric);
    CHECK(classify(ErrorCode::MissingColumn) == ErrorClass::Data);
}
