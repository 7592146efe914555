#include <doctest.h>

#include <algorithm>

#include "agedetect/error.hpp"
#include "agedetect/selection.hpp"
#include "fixtures.hpp"

using namespace agedetect;

namespace {

using Fill = std::function<double(ChannelId, int, std::size_t, fx::Rng&)>;

// per_group sessions per group; fill(channel, k, n, rng) with k = group - kMinGroup
std::vector<Labeled> dataset(std::size_t per_group, std::size_t length, std::uint64_t seed, const Fill& fill) {
    std::vector<Labeled> out;
    fx::Rng rng(seed);
    for (int g = kMinGroup; g <= kMaxGroup; ++g) {
        for (std::size_t i = 0; i < per_group; ++i) {
            const int k = group_index(g);
            out.push_back(fx::synthetic_labeled("g" + std::to_string(g) + "_" + std::to_string(i), g, length,
                                                [&](ChannelId c, std::size_t n) { return fill(c, k, n, rng); }));
        }
    }
    return out;
}

HmmParams small_hmm() {
    HmmParams p;
    p.n_states = 2;
    p.n_mix = 1;
    p.max_em_iter = 15;
    return p;
}

}  // namespace

TEST_CASE("percentile examples") {
    const std::vector<double> four{1, 2, 3, 4};
    CHECK(percentile(four, 70) == doctest::Approx(3.1).epsilon(1e-14));
    CHECK(percentile(four, 0) == 1.0);
    CHECK(percentile(four, 100) == 4.0);
    std::vector<double> ramp(25);
    for (int i = 0; i < 25; ++i) ramp[i] = 25.0 - i;
    CHECK(percentile(ramp, 70) == doctest::Approx(17.8).epsilon(1e-14));
    CHECK(std::count_if(ramp.begin(), ramp.end(), [](double v) { return v > 17.8; }) == 8);
}

TEST_CASE("percentile rule keeps eight of twenty-five distinct scores") {
    fx::Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        ChannelScoreTable t;
        for (auto& s : t.scores) s = rng.uniform(0.0, 10.0);
        t.higher_is_better = trial % 2 == 0;
        double threshold = 0.0;
        const auto sel = percentile_rule(t, &threshold);
        CHECK(sel.size() == 8);
        for (std::size_t i = 1; i < sel.size(); ++i) {
            const double prev = t.scores[index_of(sel[i - 1])], cur = t.scores[index_of(sel[i])];
            CHECK((t.higher_is_better ? prev >= cur : prev <= cur));
        }
        for (auto c : sel) {
            const double v = t.scores[index_of(c)];
            CHECK((t.higher_is_better ? v > threshold : v < threshold));
        }
    }
}

TEST_CASE("agd and accuracy") {
    const std::vector<int> truth{2, 3, 4, 5}, pred{2, 3, 5, 7};
    const auto [agd, acc] = agd_and_accuracy(truth, pred);
    CHECK(agd == 0.75);
    CHECK(acc == 50.0);
}

TEST_CASE("stat-dba degenerate and perfect channels") {
    const auto flat = dataset(2, 8, 1, [](ChannelId, int, std::size_t, fx::Rng&) { return 1.0; });
    CHECK_THROWS_AS(stat_select_dba(flat), Error);
    try {
        stat_select_dba(flat);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateScores);
    }

    const auto one = dataset(2, 8, 1, [](ChannelId c, int k, std::size_t, fx::Rng&) {
        return c == ChannelId::Rho ? 2.0 * k : 1.0;
    });
    const auto r = stat_select_dba(one);
    REQUIRE(r.selected.size() == 1);
    CHECK(r.selected[0] == ChannelId::Rho);
    CHECK(r.method == SelectionMethod::StatDBA);
    CHECK(r.table->higher_is_better);
}

TEST_CASE("stat-hmm keeps exactly the informative channels") {
    const std::array<ChannelId, 8> good{ChannelId::X, ChannelId::Y,  ChannelId::V,  ChannelId::A,
                                        ChannelId::dX, ChannelId::Vr, ChannelId::R5, ChannelId::T};
    auto fill = [&](ChannelId c, int k, std::size_t, fx::Rng& rng) {
        const bool informative = std::find(good.begin(), good.end(), c) != good.end();
        return informative ? 2.0 * k + rng.normal(0.0, 0.2) : rng.normal(0.0, 1.0);
    };
    const auto train = dataset(3, 15, 10, fill);
    const auto val = dataset(2, 15, 11, fill);
    const std::vector<std::pair<std::size_t, std::size_t>> grid{{2, 1}};
    const auto r = stat_select_hmm(train, val, grid, small_hmm());
    CHECK(r.selected.size() == good.size());
    for (auto c : good) CHECK(std::find(r.selected.begin(), r.selected.end(), c) != r.selected.end());
    for (auto c : good) CHECK(r.table->scores[index_of(c)] == 0.0);
    CHECK_FALSE(r.table->higher_is_better);
    REQUIRE(r.grid.size() == 1);
    CHECK(r.hmm_params->n_states == 2);
}

TEST_CASE("missing group in validation") {
    const auto train = dataset(2, 8, 1, [](ChannelId, int k, std::size_t n, fx::Rng&) { return k + 0.1 * n; });
    auto val = train;
    std::erase_if(val, [](const Labeled& l) { return l.group == 8; });
    SfsOptions o;
    o.classifier = ClassifierKind::DBA;
    CHECK_THROWS_AS(sfs(train, val, o), Error);
}

TEST_CASE("first sfs step matches exhaustive single-channel evaluation") {
    auto fill = [](ChannelId c, int k, std::size_t n, fx::Rng& rng) {
        const double w = 0.1 * index_of(c);
        return w * k + std::sin(0.3 * n * (1 + index_of(c) % 3)) + rng.normal(0.0, 0.8);
    };
    const auto train = dataset(3, 12, 20, fill);
    const auto val = dataset(2, 12, 21, fill);

    SfsOptions o;
    o.classifier = ClassifierKind::DBA;
    const auto r = sfs(train, val, o);
    REQUIRE_FALSE(r.trace.empty());
    const auto& first = r.trace[0].candidates;
    REQUIRE(first.size() == kChannelCount);
    const auto ns = fit_norm([&] {
        std::vector<ChannelSet> v;
        for (const auto& l : train) v.push_back(l.channels);
        return v;
    }());
    SubsetScore best{ChannelId::X, 1e9, -1};
    for (auto c : all_channels()) {
        const std::array<ChannelId, 1> one{c};
        const auto model = train_dba(train, one, o.dba, ns);
        std::vector<int> truth, pred;
        for (const auto& l : val) {
            truth.push_back(l.group);
            pred.push_back(classify_dba(model, l.channels).group);
        }
        const auto [agd, acc] = agd_and_accuracy(truth, pred);
        CHECK(first[index_of(c)].channel == c);
        CHECK(first[index_of(c)].avg_agd == doctest::Approx(agd).epsilon(1e-12));
        CHECK(first[index_of(c)].accuracy == doctest::Approx(acc).epsilon(1e-12));
        if (agd < best.avg_agd || (agd == best.avg_agd && acc > best.accuracy)) best = {c, agd, acc};
    }
    CHECK(r.trace[0].best.channel == best.channel);
    CHECK(r.selected[0] == best.channel);

    // the same holds for the HMM classifier on a reduced pool
    SfsOptions h;
    h.hmm = small_hmm();
    h.pool = {ChannelId::X, ChannelId::V, ChannelId::T};
    const auto rh = sfs(train, val, h);
    REQUIRE(rh.trace[0].candidates.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const std::array<ChannelId, 1> one{h.pool[i]};
        const auto s = evaluate_subset_hmm(train, val, one, h.hmm, ns);
        CHECK(rh.trace[0].candidates[i].avg_agd == s.avg_agd);
    }
}

TEST_CASE("sfs stops when every extension hurts") {
    // V separates groups perfectly; every other channel is mirrored between train and val.
    auto make = [](bool mirrored, std::uint64_t seed) {
        return dataset(3, 12, seed, [mirrored](ChannelId c, int k, std::size_t, fx::Rng& rng) {
            if (c == ChannelId::V) return 2.0 * k + rng.normal(0.0, 0.2);
            return 3.0 * (mirrored ? 6 - k : k) + rng.normal(0.0, 0.2);
        });
    };
    const auto train = make(false, 30);
    const auto val = make(true, 31);
    for (auto kind : {ClassifierKind::HMM, ClassifierKind::DBA}) {
        CAPTURE(classifier_name(kind));
        SfsOptions o;
        o.classifier = kind;
        o.hmm = small_hmm();
        const auto r = sfs(train, val, o);
        REQUIRE(r.selected.size() == 1);
        CHECK(r.selected[0] == ChannelId::V);
        REQUIRE(r.trace.size() == 2);
        CHECK(r.trace[0].accepted);
        CHECK(r.trace[0].best.avg_agd == 0.0);
        CHECK_FALSE(r.trace[1].accepted);
        CHECK(r.trace[1].best.avg_agd > 0.0);
    }
}

TEST_CASE("sfs finds a jointly sufficient pair") {
    auto fill = [](ChannelId c, int k, std::size_t, fx::Rng& rng) {
        if (c == ChannelId::X) return 2.0 * (k % 3) + rng.normal(0.0, 0.2);
        if (c == ChannelId::Y) return 2.0 * (k / 3) + rng.normal(0.0, 0.2);
        return rng.normal(0.0, 1.0);
    };
    const auto train = dataset(3, 12, 40, fill);
    const auto val = dataset(2, 12, 41, fill);
    SfsOptions o;
    o.hmm = small_hmm();
    o.pool = {ChannelId::X, ChannelId::Y, ChannelId::Z, ChannelId::V};
    const auto r = sfs(train, val, o);
    REQUIRE(r.selected.size() >= 2);
    CHECK(std::find(r.selected.begin(), r.selected.end(), ChannelId::X) != r.selected.end());
    CHECK(std::find(r.selected.begin(), r.selected.end(), ChannelId::Y) != r.selected.end());
    double best_single = 1e9;
    for (const auto& c : r.trace[0].candidates) best_single = std::min(best_single, c.avg_agd);
    double final_agd = 0.0;
    for (const auto& s : r.trace) {
        if (s.accepted) final_agd = s.best.avg_agd;
    }
    CHECK(final_agd <= best_single);
    CHECK(final_agd == 0.0);
}

TEST_CASE("selection json round trip") {
    SelectionResult r;
    r.method = SelectionMethod::SfsHMM;
    r.selected = {ChannelId::V, ChannelId::dTheta};
    SfsStep s;
    s.candidates = {{ChannelId::V, 0.5, 60.0}, {ChannelId::X, 1.0, 20.0}};
    s.best = s.candidates[0];
    s.accepted = true;
    r.trace = {s};
    ChannelScoreTable t;
    t.kind = ScoreKind::SingleChannelAGD;
    t.higher_is_better = false;
    t.scores[3] = 1.25;
    r.table = t;
    r.threshold = 0.5;
    r.grid = {{4, 2, 0.75, 40.0}};
    r.hmm_params = small_hmm();
    const auto text = to_json(r).dump();
    const auto back = selection_from_json(nlohmann::json::parse(text));
    CHECK(to_json(back).dump() == text);
    CHECK(back.selected == r.selected);
    CHECK(back.table->scores[3] == 1.25);
    CHECK(parse_method_name("stat-hmm") == SelectionMethod::StatHMM);
    CHECK_THROWS_AS(parse_classifier_name("svm"), Error);
    CHECK(score_table_csv(t).rfind("rank,channel,score", 0) == 0);
}
