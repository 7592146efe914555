#include <doctest.h>

#include <fstream>
#include <sstream>

#include "agedetect/error.hpp"
#include "agedetect/pipeline.hpp"
#include "agedetect/synth.hpp"
#include "fixtures.hpp"

using namespace agedetect;

namespace {

Prediction pred(const std::string& child, int truth, int guess, std::size_t idx = 0) {
    Prediction p;
    p.child_id = child;
    p.session_index = idx;
    p.true_group = truth;
    p.predicted_group = guess;
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small on-disk corpus shared by the experiment tests.
const std::filesystem::path& corpus() {
    static const std::filesystem::path dir = [] {
        auto d = fx::temp_dir("pipeline_corpus");
        SynthConfig sc;
        sc.sessions_per_group = 10;
        sc.seed = 3;
        write_corpus(generate_corpus(sc), d);
        return d;
    }();
    return dir;
}

ExperimentConfig dba_config(const std::filesystem::path& out) {
    ExperimentConfig cfg;
    cfg.data_dir = corpus();
    cfg.out_dir = out;
    cfg.classifier = ClassifierKind::DBA;
    cfg.selection = SelectionKind::Manual;
    cfg.manual_channels = {ChannelId::V, ChannelId::Inside, ChannelId::Z};
    cfg.seed = 7;
    cfg.dba.max_iter = 5;
    return cfg;
}

}  // namespace

TEST_CASE("agd examples") {
    CHECK(agd(5, 5) == 0);
    CHECK(agd(2, 8) == 6);
    CHECK(agd(3, 5) == 2);
    CHECK(agd(5, 3) == 2);
    CHECK(fx::code_of([] { agd(1, 5); }) == ErrorCode::OutOfRangeGroup);
    CHECK(fx::code_of([] { agd(5, 9); }) == ErrorCode::OutOfRangeGroup);
}

TEST_CASE("evaluate") {
    std::vector<Prediction> all_right;
    for (int g = kMinGroup; g <= kMaxGroup; ++g) all_right.push_back(pred("c" + std::to_string(g), g, g));
    auto r = evaluate(all_right);
    CHECK(r.accuracy == 100.0);
    CHECK(r.avg_agd == 0.0);

    // gaps 0, 0, 1, 2
    const std::vector<Prediction> four{pred("a", 2, 2), pred("b", 3, 3), pred("c", 4, 5), pred("d", 6, 8)};
    r = evaluate(four);
    CHECK(r.avg_agd == 0.75);
    CHECK(r.accuracy == 50.0);
    CHECK(r.per_group_agd.size() == 4);
    CHECK(r.per_group_agd.at(6) == 2.0);
    CHECK(r.confusion[group_index(4)][group_index(5)] == 1);

    CHECK(fx::code_of([] { evaluate(std::vector<Prediction>{}); }) == ErrorCode::EmptyPredictions);
}

TEST_CASE("evaluate agrees with its confusion matrix and ignores order") {
    fx::Rng rng(12);
    std::vector<Prediction> ps;
    for (int i = 0; i < 300; ++i) {
        ps.push_back(pred("c" + std::to_string(i), rng.integer(kMinGroup, kMaxGroup), rng.integer(kMinGroup, kMaxGroup)));
    }
    const auto r = evaluate(ps);
    double diag = 0, total = 0, gaps = 0;
    for (int t = 0; t < kGroupCount; ++t) {
        for (int p = 0; p < kGroupCount; ++p) {
            total += r.confusion[t][p];
            gaps += r.confusion[t][p] * std::abs(t - p);
            if (t == p) diag += r.confusion[t][p];
        }
    }
    CHECK(total == 300);
    CHECK(r.accuracy == doctest::Approx(100.0 * diag / total).epsilon(1e-12));
    CHECK(r.avg_agd == doctest::Approx(gaps / total).epsilon(1e-12));
    auto shuffled = ps;
    rng.shuffle(shuffled.begin(), shuffled.end());
    const auto s = evaluate(shuffled);
    CHECK(s.confusion == r.confusion);
    CHECK(s.avg_agd == doctest::Approx(r.avg_agd).epsilon(1e-12));
    CHECK(s.accuracy == doctest::Approx(r.accuracy).epsilon(1e-12));
}

TEST_CASE("per-child vote") {
    const std::vector<Prediction> ps{pred("a", 4, 4, 0), pred("a", 4, 5, 1), pred("a", 4, 5, 2), pred("b", 3, 6, 0),
                                     pred("b", 3, 2, 1)};
    const auto v = per_child_vote(ps);
    REQUIRE(v.size() == 2);
    CHECK(v[0].child_id == "a");
    CHECK(v[0].predicted_group == 5);
    CHECK(v[1].predicted_group == 2);
}

TEST_CASE("config parsing") {
    const auto ok = nlohmann::json::parse(R"({"data_dir": "d", "classifier": "hmm", "selection": "manual:V,X",
        "hmm": {"n_states": 4, "n_mix": 2}, "seed": 9})");
    const auto cfg = config_from_json(ok);
    CHECK(cfg.hmm.n_states == 4);
    CHECK(cfg.hmm.seed == 9);
    CHECK(cfg.manual_channels == std::vector<ChannelId>{ChannelId::V, ChannelId::X});
    CHECK(config_from_json(to_json(cfg)).manual_channels == cfg.manual_channels);
    CHECK(config_fingerprint(config_from_json(to_json(cfg))) == config_fingerprint(cfg));

    for (const char* bad : {R"({"data_dir": "d", "classifier": "svm"})",
                            R"({"data_dir": "d", "classifier": "hmm", "colour": 1})",
                            R"({"data_dir": "d", "classifier": "hmm", "hmm": {"n_states": 0}})",
                            R"({"data_dir": "d", "classifier": "hmm", "hmm": {"cov_floor": -1}})",
                            R"({"data_dir": "d", "classifier": "hmm", "selection": "manual:Q"})",
                            R"({"data_dir": "d", "classifier": "hmm", "selection": "best"})",
                            R"({"classifier": "hmm"})", R"([1, 2])"}) {
        CAPTURE(bad);
        CHECK(fx::code_of([&] { config_from_json(nlohmann::json::parse(bad)); }) == ErrorCode::ConfigInvalid);
    }
}

TEST_CASE("fingerprint ignores out_dir and tracks everything else") {
    ExperimentConfig a;
    a.data_dir = "d";
    auto b = a;
    b.out_dir = "elsewhere";
    CHECK(config_fingerprint(a) == config_fingerprint(b));
    CHECK(config_fingerprint(a).size() == 16);
    b.seed = 2;
    CHECK(config_fingerprint(a) != config_fingerprint(b));
}

TEST_CASE("canonical dump") {
    const auto j = nlohmann::json::parse(R"({"b": 0.1, "a": [1, 2.5, -0.0], "c": {"z": true, "y": null}})");
    CHECK(canonical_dump(j) == R"({"a":[1,2.500000,0.000000],"b":0.100000,"c":{"y":null,"z":true}})");
}

TEST_CASE("report round trip") {
    const std::vector<Prediction> four{pred("a", 2, 2), pred("b", 3, 3), pred("c", 4, 5), pred("d", 6, 8)};
    auto r = evaluate(four);
    r.config_fingerprint = "0123456789abcdef";
    const auto text = canonical_dump(to_json(r));
    CHECK(canonical_dump(to_json(report_from_json(nlohmann::json::parse(text)))) == text);
}

TEST_CASE("experiment is deterministic and writes its artifacts") {
    const auto out1 = fx::temp_dir("pipeline_run1");
    const auto out2 = fx::temp_dir("pipeline_run2");
    const auto r1 = run_experiment(dba_config(out1));
    const auto r2 = run_experiment(dba_config(out2));
    for (const char* f : {"split.json", "selection.json", "model.json", "predictions.json", "report.json"}) {
        CAPTURE(f);
        REQUIRE(std::filesystem::exists(out1 / f));
        CHECK(slurp(out1 / f) == slurp(out2 / f));
    }
    CHECK(r1.report.avg_agd == r2.report.avg_agd);
    long counted = 0;
    for (const auto& row : r1.report.confusion) {
        for (long v : row) counted += v;
    }
    CHECK(counted == static_cast<long>(r1.predictions.size()));
    CHECK(r1.report.config_fingerprint == config_fingerprint(dba_config(out1)));

    const auto report = read_json(out1 / "report.json");
    CHECK(report.contains("versions"));
    CHECK(report["config_fingerprint"] == r1.report.config_fingerprint);

    // predicting a stored evaluation session matches the in-memory prediction
    const auto model = load_model(out1 / "model.json");
    const auto& first = r1.predictions.front();
    const auto csv = corpus() / (first.child_id + ".csv");
    const auto p = predict(out1 / "model.json", csv);
    CHECK(p.predicted_group == first.predicted_group);
    for (int g = 0; g < kGroupCount; ++g) CHECK(p.scores[g] == doctest::Approx(first.scores[g]).epsilon(1e-9));
    CHECK(classify(model, extract_all(std::vector<RawSession>{parse_session(csv)})[0].channels).group ==
          first.predicted_group);
}

TEST_CASE("model format errors") {
    const auto out = fx::temp_dir("pipeline_model");
    run_experiment(dba_config(out));
    auto j = read_json(out / "model.json");
    j["version"] = 42;
    CHECK(fx::code_of([&] { model_from_json(j); }) == ErrorCode::ModelFormatError);
    j["format"] = "something";
    CHECK(fx::code_of([&] { model_from_json(j); }) == ErrorCode::ModelFormatError);
    write_text(out / "broken.json", "{not json");
    CHECK(fx::code_of([&] { load_model(out / "broken.json"); }).has_value());
}

TEST_CASE("partition keeps children whole") {
    SplitPlan plan;
    const auto part = load_partition(dba_config({}), &plan);
    CHECK(part.train.size() + part.val.size() + part.eval.size() == 70);
    for (const auto& l : part.eval) CHECK(plan.assignment.at(l.channels.child_id) == Split::Evaluation);
    for (const auto& l : part.val) CHECK(plan.assignment.at(l.channels.child_id) == Split::Validation);
}
