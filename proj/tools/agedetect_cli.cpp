// agedetect: command-line entry point for the age-group detection pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "agedetect/elastic.hpp"
#include "agedetect/error.hpp"
#include "agedetect/features.hpp"
#include "agedetect/ingest.hpp"
#include "agedetect/log.hpp"
#include "agedetect/markov.hpp"
#include "agedetect/parallel.hpp"
#include "agedetect/pipeline.hpp"
#include "agedetect/selection.hpp"
#include "agedetect/synth.hpp"

namespace fs = std::filesystem;
using namespace agedetect;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code(ErrorClass c) {
    switch (c) {
        case ErrorClass::Usage: return kExitUsage;
        case ErrorClass::Data: return kExitData;
        case ErrorClass::Numeric: return kExitNumeric;
    }
    return kExitNumeric;
}

struct Globals {
    std::uint64_t seed = 1;
    std::string config;
    std::string log_level = "warn";
    std::size_t jobs = 0;
};

ExperimentConfig require_config(const Globals& g, const CLI::App& app) {
    if (g.config.empty()) throw Error(ErrorCode::ConfigInvalid, "--config is required");
    auto cfg = load_config(g.config);
    if (app.get_option("--seed")->count() > 0 || std::getenv("AGEDETECT_SEED")) {
        cfg.seed = g.seed;
        cfg.hmm.seed = g.seed;
    }
    return cfg;
}

void print_report_text(const EvalReport& r, std::ostream& out) {
    out << std::fixed << std::setprecision(2);
    out << "accuracy  " << r.accuracy << " %\n";
    out << "avg AGD   " << r.avg_agd << "\n";
    out << "group  AGD\n";
    for (const auto& [g, v] : r.per_group_agd) out << "  " << g << "    " << v << "\n";
    out << "confusion (rows true 2..8, columns predicted 2..8)\n";
    for (const auto& row : r.confusion) {
        for (std::size_t k = 0; k < row.size(); ++k) out << (k ? " " : "  ") << std::setw(4) << row[k];
        out << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Age-group detection from stylus drawing sessions"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice")->envname("AGEDETECT_SEED");
    app.add_option("--config", g.config, "Pipeline configuration JSON")->envname("AGEDETECT_CONFIG");
    app.add_option("--log-level", g.log_level, "debug, info, warn, error or off")
        ->envname("AGEDETECT_LOG_LEVEL")
        ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));
    app.add_option("--jobs", g.jobs, "Worker threads (0 = all cores)")->envname("AGEDETECT_JOBS");
    app.add_flag_callback(
        "--version",
        [] {
            std::cout << nlohmann::json{{"tool", kToolVersion},
                                        {"dba_format", kDbaFormatVersion},
                                        {"hmm_format", kHmmFormatVersion}}
                             .dump()
                      << "\n";
            throw CLI::Success();
        },
        "Print versions as JSON and exit");

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
    std::string synth_out;
    std::size_t per_group = 50;
    double separability = 1.0;
    synth->add_option("--out", synth_out, "Target directory")->required()->envname("AGEDETECT_OUT");
    synth->add_option("--per-group", per_group, "Sessions per group")
        ->check(CLI::PositiveNumber)
        ->envname("AGEDETECT_PER_GROUP");
    synth->add_option("--separability", separability, "Inter-group spacing in [0, 1]")
        ->check(CLI::Range(0.0, 1.0))
        ->envname("AGEDETECT_SEPARABILITY");

    // ingest-check
    auto* check = app.add_subcommand("ingest-check", "Validate every session in a directory");
    std::string check_data;
    check->add_option("--data", check_data, "Session directory")
        ->required()
        ->check(CLI::ExistingDirectory)
        ->envname("AGEDETECT_DATA");

    // extract
    auto* extract = app.add_subcommand("extract", "Dump the 25 channels of one session as CSV");
    std::string extract_session, extract_out;
    extract->add_option("--session", extract_session, "Session CSV")
        ->required()
        ->check(CLI::ExistingFile)
        ->envname("AGEDETECT_SESSION");
    extract->add_option("--out", extract_out, "Output CSV (stdout if omitted)")->envname("AGEDETECT_OUT");

    // split
    auto* split = app.add_subcommand("split", "Stratified train/validation/evaluation split by child");
    std::string split_data, split_out;
    split->add_option("--data", split_data, "Session directory")
        ->required()
        ->check(CLI::ExistingDirectory)
        ->envname("AGEDETECT_DATA");
    split->add_option("--out", split_out, "Output JSON (stdout if omitted)")->envname("AGEDETECT_OUT");

    // select
    auto* select = app.add_subcommand("select", "Run channel selection from --config");
    std::string select_out, select_table;
    select->add_option("--out", select_out, "Selection JSON (stdout if omitted)")->envname("AGEDETECT_OUT");
    select->add_option("--table", select_table, "Ranked score table CSV (statistical methods)")
        ->envname("AGEDETECT_TABLE");

    // train
    auto* train = app.add_subcommand("train", "Train the final model from --config");
    std::string train_out, train_selection;
    train->add_option("--out", train_out, "Model JSON")->required()->envname("AGEDETECT_OUT");
    train->add_option("--selection", train_selection, "Use a saved selection instead of running one")
        ->check(CLI::ExistingFile)
        ->envname("AGEDETECT_SELECTION");

    // evaluate
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Full experiment from --config");
    std::string evaluate_out;
    evaluate_cmd->add_option("--out", evaluate_out, "Artifact directory (overrides out_dir)")
        ->envname("AGEDETECT_OUT");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "Classify one session with a saved model");
    std::string model_path, session_path;
    predict_cmd->add_option("--model", model_path, "Model JSON")
        ->required()
        ->check(CLI::ExistingFile)
        ->envname("AGEDETECT_MODEL");
    predict_cmd->add_option("--session", session_path, "Session CSV")
        ->required()
        ->check(CLI::ExistingFile)
        ->envname("AGEDETECT_SESSION");

    // report
    auto* report = app.add_subcommand("report", "Summarise a report or recompute it from predictions");
    std::string report_in, predictions_in;
    bool report_json = false;
    auto* rin = report->add_option("--report", report_in, "report.json")->check(CLI::ExistingFile);
    auto* pin = report->add_option("--predictions", predictions_in, "predictions.json")->check(CLI::ExistingFile);
    rin->excludes(pin);
    report->add_flag("--json", report_json, "Print canonical JSON instead of a table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        set_log_level(*parse_log_level(g.log_level));
        set_max_jobs(g.jobs);

        if (synth->parsed()) {
            SynthConfig sc;
            sc.sessions_per_group = per_group;
            sc.seed = g.seed;
            sc.separability = separability;
            const auto sessions = generate_corpus(sc);
            write_corpus(sessions, synth_out);
            log_event(LogLevel::Info, "synth_written", {{"sessions", sessions.size()}, {"out", synth_out}});
        } else if (check->parsed()) {
            const auto sessions = load_directory(check_data);
            nlohmann::json groups = nlohmann::json::object();
            nlohmann::json warnings = nlohmann::json::array();
            std::map<std::string, int> children;
            for (const auto& s : sessions) {
                auto& n = groups[std::to_string(s.group)];
                n = n.is_null() ? 1 : n.get<int>() + 1;
                children[s.child_id] = 1;
                for (const auto& w : s.warnings) warnings.push_back({{"child_id", s.child_id}, {"warning", w}});
            }
            std::cout << nlohmann::json{{"sessions", sessions.size()},
                                        {"children", children.size()},
                                        {"sessions_per_group", groups},
                                        {"warnings", warnings}}
                             .dump(2)
                      << "\n";
        } else if (extract->parsed()) {
            const auto cs = extract_channels(parse_session(extract_session), 0);
            const auto csv = channels_to_csv(cs);
            if (extract_out.empty()) {
                std::cout << csv;
            } else {
                write_text(extract_out, csv);
            }
        } else if (split->parsed()) {
            const auto sessions = load_directory(split_data);
            const auto text = to_json(make_split(sessions, g.seed)).dump(2) + "\n";
            if (split_out.empty()) {
                std::cout << text;
            } else {
                write_text(split_out, text);
            }
        } else if (select->parsed()) {
            const auto cfg = require_config(g, app);
            const auto part = load_partition(cfg);
            const auto sel = select_channels(part, fit_norm(part.train), cfg);
            const auto text = to_json(sel).dump(2) + "\n";
            if (select_out.empty()) {
                std::cout << text;
            } else {
                write_text(select_out, text);
            }
            if (!select_table.empty() && sel.table) write_text(select_table, score_table_csv(*sel.table));
        } else if (train->parsed()) {
            const auto cfg = require_config(g, app);
            const auto part = load_partition(cfg);
            const auto norm = fit_norm(part.train);
            const auto sel = train_selection.empty() ? select_channels(part, norm, cfg)
                                                     : selection_from_json(read_json(train_selection));
            const auto model = fit_model(part, norm, cfg, sel);
            write_text(train_out, to_json(model).dump(2) + "\n");
        } else if (evaluate_cmd->parsed()) {
            auto cfg = require_config(g, app);
            if (!evaluate_out.empty()) cfg.out_dir = evaluate_out;
            const auto res = run_experiment(cfg);
            std::cout << canonical_dump(to_json(res.report)) << "\n";
        } else if (predict_cmd->parsed()) {
            std::cout << to_json(predict(fs::path(model_path), fs::path(session_path))).dump() << "\n";
        } else if (report->parsed()) {
            EvalReport r;
            if (!report_in.empty()) {
                r = report_from_json(read_json(report_in));
            } else if (!predictions_in.empty()) {
                const auto j = read_json(predictions_in);
                std::vector<Prediction> preds;
                try {
                    for (const auto& p : j.at("predictions")) preds.push_back(prediction_from_json(p));
                    r = evaluate(preds);
                    r.config_fingerprint = j.value("config_fingerprint", "");
                } catch (const nlohmann::json::exception& e) {
                    throw Error(ErrorCode::MalformedRow, std::string("predictions: ") + e.what());
                }
            } else {
                throw Error(ErrorCode::ConfigInvalid, "report needs --report or --predictions");
            }
            if (report_json) {
                std::cout << canonical_dump(to_json(r)) << "\n";
            } else {
                print_report_text(r, std::cout);
            }
        }
    } catch (const Error& e) {
        log_event(LogLevel::Error, "failed", {{"code", to_string(e.code())}, {"message", e.what()}});
        return exit_code(e.error_class());
    } catch (const fs::filesystem_error& e) {
        log_event(LogLevel::Error, "failed", {{"code", "Io"}, {"message", e.what()}});
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        log_event(LogLevel::Error, "failed", {{"code", "MalformedRow"}, {"message", e.what()}});
        return kExitData;
    } catch (const std::exception& e) {
        log_event(LogLevel::Error, "failed", {{"code", "NumericFailure"}, {"message", e.what()}});
        return kExitNumeric;
    }
    return 0;
}
