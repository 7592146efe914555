#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "agedetect/elastic.hpp"
#include "agedetect/error.hpp"
#include "agedetect/features.hpp"
#include "agedetect/ingest.hpp"
#include "agedetect/log.hpp"
#include "agedetect/parallel.hpp"
#include "agedetect/pipeline.hpp"
#include "agedetect/selection.hpp"
#include "agedetect/synth.hpp"

namespace py = pybind11;
using namespace agedetect;

namespace {

// JSON crosses the boundary as text; the json module does the conversion.
py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict channels_dict(const ChannelSet& cs) {
    py::dict d;
    for (auto c : all_channels()) d[py::str(std::string(channel_name(c)))] = cs[c];
    return d;
}

}  // namespace

PYBIND11_MODULE(_agedetect, m) {
    m.doc() = "Children age-group detection from stylus drawing time series";

    static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object err = error;
            py::object inst = err(e.what());
            inst.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(err.ptr(), inst.ptr());
        }
    });

    m.attr("__version__") = kToolVersion;
    m.attr("CHANNELS") = [] {
        std::vector<std::string> names;
        for (auto c : all_channels()) names.emplace_back(channel_name(c));
        return names;
    }();

    m.def("set_log_level", [](const std::string& level) {
        const auto l = parse_log_level(level);
        if (!l) throw Error(ErrorCode::ConfigInvalid, "unknown log level '" + level + "'");
        set_log_level(*l);
    });
    m.def("set_jobs", &set_max_jobs, py::arg("jobs"), "Worker threads; 0 uses every core.");

    m.def(
        "dtw",
        [](const std::vector<double>& a, const std::vector<double>& b, bool squared, bool with_path) {
            const auto r = dtw(a, b, squared ? LocalCost::Squared : LocalCost::Absolute, with_path);
            py::dict d;
            d["distance"] = r.distance;
            d["path_length"] = r.path_length;
            if (with_path) d["path"] = r.path;
            return d;
        },
        py::arg("a"), py::arg("b"), py::arg("squared") = false, py::arg("path") = false);

    m.def(
        "dba",
        [](const std::vector<std::vector<double>>& seqs, std::size_t max_iter, double tol) {
            const auto r = dba(seqs, max_iter, tol);
            py::dict d;
            d["average"] = r.average;
            d["iterations"] = r.iterations;
            d["inertia"] = r.inertia;
            return d;
        },
        py::arg("sequences"), py::arg("max_iter") = 30, py::arg("tol") = 1e-4);

    m.def("derivative", [](const std::vector<double>& s) { return derivative(s); }, py::arg("sequence"));

    m.def(
        "extract_channels",
        [](const std::filesystem::path& csv) { return channels_dict(extract_channels(parse_session(csv))); },
        py::arg("session_csv"), "The 25 channels of one session, keyed by channel name.");

    m.def(
        "synth",
        [](const std::filesystem::path& out, std::size_t per_group, std::uint64_t seed, double separability) {
            SynthConfig cfg;
            cfg.sessions_per_group = per_group;
            cfg.seed = seed;
            cfg.separability = separability;
            const auto sessions = generate_corpus(cfg);
            write_corpus(sessions, out);
            return sessions.size();
        },
        py::arg("out_dir"), py::arg("per_group") = 50, py::arg("seed") = 1, py::arg("separability") = 1.0);

    m.def(
        "split",
        [](const std::filesystem::path& data, std::uint64_t seed) {
            return to_py(to_json(make_split(load_directory(data), seed)));
        },
        py::arg("data_dir"), py::arg("seed") = 1);

    m.def("agd", &agd, py::arg("true_group"), py::arg("predicted_group"));

    m.def(
        "evaluate",
        [](const std::vector<std::pair<int, int>>& pairs) {
            std::vector<Prediction> ps;
            for (const auto& [t, p] : pairs) {
                Prediction x;
                x.true_group = t;
                x.predicted_group = p;
                ps.push_back(x);
            }
            return to_py(to_json(evaluate(ps)));
        },
        py::arg("pairs"), "Report for (true_group, predicted_group) pairs.");

    m.def(
        "percentile", [](const std::vector<double>& v, double p) { return percentile(v, p); }, py::arg("values"),
        py::arg("p"));

    m.def(
        "run_experiment",
        [](const py::object& config) {
            const auto cfg = config_from_json(from_py(config));
            ExperimentResult r;
            {
                py::gil_scoped_release release;
                r = run_experiment(cfg);
            }
            py::dict d;
            d["report"] = to_py(to_json(r.report));
            d["selection"] = to_py(to_json(r.selection));
            return d;
        },
        py::arg("config"), "Full experiment from a config dict; returns the report and the selection.");

    m.def(
        "predict",
        [](const std::filesystem::path& model, const std::filesystem::path& session) {
            return to_py(to_json(predict(model, session)));
        },
        py::arg("model_path"), py::arg("session_csv"));

    m.def(
        "config_fingerprint", [](const py::object& config) { return config_fingerprint(config_from_json(from_py(config))); },
        py::arg("config"));
}
