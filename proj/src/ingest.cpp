#include "agedetect/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "agedetect/error.hpp"
#include "agedetect/log.hpp"
#include "agedetect/random.hpp"

namespace agedetect {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 6> kColumns = {"t_ms", "x", "y", "pressure", "action", "inside"};

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    for (auto& f : out) {
        while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
        while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
    }
    return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
    T value{};
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path sidecar_path(const fs::path& csv_path) {
    auto p = csv_path;
    p.replace_extension(".meta.json");
    return p;
}

int gender_rank(Gender g) {
    switch (g) {
        case Gender::F: return 0;
        case Gender::M: return 1;
        case Gender::Unknown: return 2;
    }
    return 2;
}

}  // namespace

char gender_code(Gender g) {
    switch (g) {
        case Gender::F: return 'F';
        case Gender::M: return 'M';
        case Gender::Unknown: return 'U';
    }
    return 'U';
}

Gender parse_gender(std::string_view code) {
    if (code == "F") return Gender::F;
    if (code == "M") return Gender::M;
    if (code == "U") return Gender::Unknown;
    throw Error(ErrorCode::MalformedRow, "unknown gender code '" + std::string(code) + "'");
}

std::string_view split_token(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "val";
        case Split::Evaluation: return "eval";
    }
    return "train";
}

Split parse_split_token(std::string_view token) {
    if (token == "train") return Split::Train;
    if (token == "val") return Split::Validation;
    if (token == "eval") return Split::Evaluation;
    throw Error(ErrorCode::MalformedRow, "unknown split token '" + std::string(token) + "'");
}

void validate_session(RawSession& session) {
    if (session.samples.empty()) throw Error(ErrorCode::EmptySession, "session of child '" + session.child_id + "' has no samples");
    if (!is_valid_group(session.group)) {
        throw Error(ErrorCode::UnknownGroupLabel, "group " + std::to_string(session.group) + " outside [2,8]");
    }
    for (std::size_t i = 0; i < session.samples.size(); ++i) {
        const auto& s = session.samples[i];
        const bool finite = std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.pressure);
        if (!finite || s.t_ms < 0 || s.x < 0.0 || s.y < 0.0 || s.pressure < 0.0 || s.pressure > 1.0) {
            throw Error(ErrorCode::MalformedRow, "sample " + std::to_string(i) + " out of range");
        }
        if (s.action == PenAction::Up && s.pressure != 0.0) {
            throw Error(ErrorCode::MalformedRow, "sample " + std::to_string(i) + " is pen-up with non-zero pressure");
        }
    }

    std::stable_sort(session.samples.begin(), session.samples.end(),
                     [](const RawSample& a, const RawSample& b) { return a.t_ms < b.t_ms; });

    for (std::size_t i = 1; i < session.samples.size(); ++i) {
        const auto& prev = session.samples[i - 1];
        const auto& cur = session.samples[i];
        if (prev.action == PenAction::Down && cur.action == PenAction::Down && cur.t_ms <= prev.t_ms) {
            throw Error(ErrorCode::NonMonotonicTimestamp,
                        "duplicate timestamp " + std::to_string(cur.t_ms) + " inside a stroke");
        }
    }

    const auto duration = session.samples.back().t_ms - session.samples.front().t_ms;
    if (duration > kMaxSessionMs) {
        std::string msg = "session lasts " + std::to_string(duration) + " ms (> 120000 ms)";
        log_event(LogLevel::Warn, "long_session", {{"child_id", session.child_id}, {"duration_ms", duration}});
        session.warnings.push_back(std::move(msg));
    }
}

RawSession parse_session_text(std::string_view csv_text, const nlohmann::json& meta) {
    RawSession session;

    if (!meta.is_object()) throw Error(ErrorCode::MalformedRow, "sidecar is not a JSON object");
    if (!meta.contains("child_id") || !meta["child_id"].is_string()) {
        throw Error(ErrorCode::MalformedRow, "sidecar lacks string child_id");
    }
    if (!meta.contains("group") || !meta["group"].is_number_integer()) {
        throw Error(ErrorCode::UnknownGroupLabel, "sidecar lacks integer group");
    }
    session.child_id = meta["child_id"].get<std::string>();
    session.group = meta["group"].get<int>();
    if (meta.contains("gender")) {
        if (!meta["gender"].is_string()) throw Error(ErrorCode::MalformedRow, "gender must be a string");
        session.gender = parse_gender(meta["gender"].get<std::string>());
    }
    if (meta.contains("device")) session.device = meta["device"];

    std::size_t pos = 0;
    auto next_line = [&]() -> std::optional<std::string_view> {
        while (pos < csv_text.size()) {
            auto end = csv_text.find('\n', pos);
            if (end == std::string_view::npos) end = csv_text.size();
            auto line = csv_text.substr(pos, end - pos);
            pos = end + 1;
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (!line.empty()) return line;
        }
        return std::nullopt;
    };

    const auto header = next_line();
    if (!header) throw Error(ErrorCode::EmptySession, "CSV has no header");
    const auto names = split_fields(*header);
    std::array<std::size_t, kColumns.size()> col{};
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        const auto it = std::find(names.begin(), names.end(), kColumns[c]);
        if (it == names.end()) throw Error(ErrorCode::MissingColumn, "column '" + std::string(kColumns[c]) + "' absent");
        col[c] = static_cast<std::size_t>(it - names.begin());
    }

    std::size_t row = 1;
    while (const auto line = next_line()) {
        ++row;
        const auto fields = split_fields(*line);
        if (fields.size() != names.size()) {
            throw Error(ErrorCode::MalformedRow, "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                                                     " fields, expected " + std::to_string(names.size()));
        }
        RawSample s;
        const auto t = parse_number<std::int64_t>(fields[col[0]]);
        const auto x = parse_number<double>(fields[col[1]]);
        const auto y = parse_number<double>(fields[col[2]]);
        const auto p = parse_number<double>(fields[col[3]]);
        const auto action = fields[col[4]];
        const auto inside = fields[col[5]];
        if (!t || !x || !y || !p) throw Error(ErrorCode::MalformedRow, "row " + std::to_string(row) + " has a non-numeric field");
        s.t_ms = *t;
        s.x = *x;
        s.y = *y;
        s.pressure = *p;
        if (action == "down") {
            s.action = PenAction::Down;
        } else if (action == "up") {
            s.action = PenAction::Up;
        } else {
            throw Error(ErrorCode::MalformedRow, "row " + std::to_string(row) + " action must be down|up");
        }
        if (inside == "1") {
            s.inside = true;
        } else if (inside == "0") {
            s.inside = false;
        } else {
            throw Error(ErrorCode::MalformedRow, "row " + std::to_string(row) + " inside must be 0|1");
        }
        session.samples.push_back(s);
    }

    validate_session(session);
    return session;
}

RawSession parse_session(const fs::path& csv_path) {
    const auto meta_path = sidecar_path(csv_path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(meta_path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedRow, meta_path.string() + ": " + e.what());
    }
    try {
        return parse_session_text(read_file(csv_path), meta);
    } catch (const Error& e) {
        throw Error(e.code(), csv_path.string() + ": " + e.what());
    }
}

std::string serialize_csv(const RawSession& session) {
    std::string out = "t_ms,x,y,pressure,action,inside\n";
    out.reserve(out.size() + session.samples.size() * 32);
    for (const auto& s : session.samples) {
        out += std::to_string(s.t_ms);
        out += ',';
        out += format_double(s.x);
        out += ',';
        out += format_double(s.y);
        out += ',';
        out += format_double(s.pressure);
        out += s.action == PenAction::Down ? ",down," : ",up,";
        out += s.inside ? '1' : '0';
        out += '\n';
    }
    return out;
}

std::string serialize_meta(const RawSession& session) {
    nlohmann::json meta = {
        {"child_id", session.child_id},
        {"group", session.group},
        {"gender", std::string(1, gender_code(session.gender))},
        {"device", session.device},
    };
    return meta.dump(2) + "\n";
}

void write_session(const RawSession& session, const fs::path& dir, const std::string& stem) {
    fs::create_directories(dir);
    const auto write = [](const fs::path& p, const std::string& text) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
        out << text;
    };
    write(dir / (stem + ".csv"), serialize_csv(session));
    write(dir / (stem + ".meta.json"), serialize_meta(session));
}

std::vector<fs::path> list_session_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<RawSession> load_directory(const fs::path& dir) {
    const auto files = list_session_files(dir);
    std::vector<RawSession> sessions;
    sessions.reserve(files.size());
    for (const auto& f : files) sessions.push_back(parse_session(f));
    return sessions;
}

std::vector<Stroke> segment_strokes(const RawSession& session) {
    std::vector<Stroke> strokes;
    bool in_stroke = false;
    for (const auto& s : session.samples) {
        if (s.action == PenAction::Up) {
            in_stroke = false;
            continue;
        }
        if (!in_stroke) {
            strokes.emplace_back();
            in_stroke = true;
        }
        strokes.back().samples.push_back(s);
    }
    return strokes;
}

SplitPlan make_split(std::span<const RawSession> sessions, std::uint64_t seed) {
    struct Child {
        int group;
        Gender gender;
    };
    std::map<std::string, Child> children;
    for (const auto& s : sessions) {
        if (!is_valid_group(s.group)) throw Error(ErrorCode::UnknownGroupLabel, "child '" + s.child_id + "'");
        children.try_emplace(s.child_id, Child{s.group, s.gender});
    }

    // cell key = (group, gender rank); members kept sorted by child id
    std::map<std::pair<int, int>, std::vector<std::string>> cells;
    std::map<int, std::size_t> group_sizes;
    for (const auto& [id, c] : children) {
        cells[{c.group, gender_rank(c.gender)}].push_back(id);
        ++group_sizes[c.group];
    }
    for (const auto& [group, n] : group_sizes) {
        if (n < 5) {
            throw Error(ErrorCode::GroupTooSmall,
                        "group " + std::to_string(group) + " has " + std::to_string(n) + " children (need >= 5)");
        }
    }

    // Largest-remainder apportionment of round(n/5) children per group over
    // its gender cells: floor(n_c/5) each, then +1 by descending cell size.
    auto apportion = [](const std::vector<std::pair<int, std::size_t>>& cell_sizes) {
        std::size_t total = 0;
        for (const auto& [rank, n] : cell_sizes) total += n;
        const std::size_t target = (2 * total + 5) / 10;
        std::vector<std::size_t> take(cell_sizes.size());
        std::size_t assigned = 0;
        for (std::size_t i = 0; i < cell_sizes.size(); ++i) {
            take[i] = cell_sizes[i].second / 5;
            assigned += take[i];
        }
        std::vector<std::size_t> order(cell_sizes.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (cell_sizes[a].second != cell_sizes[b].second) return cell_sizes[a].second > cell_sizes[b].second;
            return cell_sizes[a].first < cell_sizes[b].first;
        });
        for (std::size_t k = 0; assigned < target && k < order.size(); ++k) {
            const auto i = order[k];
            if (take[i] < cell_sizes[i].second) {
                ++take[i];
                ++assigned;
            }
        }
        return take;
    };

    SplitPlan plan;
    plan.seed = seed;
    Rng rng(seed);
    for (const auto& [group, n] : group_sizes) {
        std::vector<std::pair<int, std::size_t>> sizes;
        std::vector<std::vector<std::string>*> members;
        for (auto& [key, ids] : cells) {
            if (key.first != group) continue;
            sizes.emplace_back(key.second, ids.size());
            members.push_back(&ids);
        }
        for (auto* ids : members) rng.shuffle(ids->begin(), ids->end());

        const auto eval_take = apportion(sizes);
        std::vector<std::pair<int, std::size_t>> remaining = sizes;
        for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i].second -= eval_take[i];
        const auto val_take = apportion(remaining);

        for (std::size_t i = 0; i < members.size(); ++i) {
            const auto& ids = *members[i];
            for (std::size_t k = 0; k < ids.size(); ++k) {
                Split s = Split::Train;
                if (k < eval_take[i]) {
                    s = Split::Evaluation;
                } else if (k < eval_take[i] + val_take[i]) {
                    s = Split::Validation;
                }
                plan.assignment[ids[k]] = s;
            }
        }
    }
    return plan;
}

nlohmann::json to_json(const SplitPlan& plan) {
    nlohmann::json assignment = nlohmann::json::object();
    for (const auto& [id, s] : plan.assignment) assignment[id] = split_token(s);
    return {{"seed", plan.seed}, {"assignment", assignment}};
}

SplitPlan split_plan_from_json(const nlohmann::json& j) {
    SplitPlan plan;
    try {
        plan.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& [id, token] : j.at("assignment").items()) {
            plan.assignment[id] = parse_split_token(token.get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedRow, std::string("split plan: ") + e.what());
    }
    return plan;
}

}  // namespace agedetect
