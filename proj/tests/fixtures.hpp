#pragma once

// Shared builders and brute-force oracles for the test binaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "agedetect/error.hpp"
#include "agedetect/features.hpp"
#include "agedetect/ingest.hpp"
#include "agedetect/markov.hpp"
#include "agedetect/random.hpp"

namespace fx {

using namespace agedetect;

struct Row {
    std::int64_t t;
    double x, y, p;
    bool down;
    bool inside;
};

inline RawSession make_session(const std::string& child, int group, Gender gender, const std::vector<Row>& rows) {
    RawSession s;
    s.child_id = child;
    s.group = group;
    s.gender = gender;
    for (const auto& r : rows) {
        s.samples.push_back({r.t, r.x, r.y, r.down ? r.p : 0.0, r.down ? PenAction::Down : PenAction::Up, r.inside});
    }
    return s;
}

/// One stroke through the given points, 10 ms apart, pressure 0.5.
inline RawSession stroke_session(const std::vector<std::pair<double, double>>& pts, int group = 5) {
    std::vector<Row> rows;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        rows.push_back({static_cast<std::int64_t>(10 * i), pts[i].first, pts[i].second, 0.5, true, true});
    }
    return make_session("c", group, Gender::F, rows);
}

/// A labeled channel set whose every channel is filled by value(channel, n).
inline Labeled synthetic_labeled(const std::string& child, int group, std::size_t length,
                                 const std::function<double(ChannelId, std::size_t)>& value) {
    Labeled l;
    l.group = group;
    l.channels.child_id = child;
    for (auto c : all_channels()) {
        auto& seq = l.channels[c];
        seq.resize(length);
        for (std::size_t n = 0; n < length; ++n) seq[n] = value(c, n);
    }
    return l;
}

inline std::vector<double> random_sequence(Rng& rng, std::size_t length, double lo, double hi) {
    std::vector<double> v(length);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

/// Minimum over every monotone alignment path, enumerated one by one.
inline double brute_force_dtw(const std::vector<double>& a, const std::vector<double>& b, bool squared = false) {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = a.size(), m = b.size();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
        const double d = squared ? (a[i] - b[j]) * (a[i] - b[j]) : std::abs(a[i] - b[j]);
        acc += d;
        if (i == n - 1 && j == m - 1) {
            best = std::min(best, acc);
            return;
        }
        if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, acc);
        if (i + 1 < n) walk(i + 1, j, acc);
        if (j + 1 < m) walk(i, j + 1, acc);
    };
    walk(0, 0, 0.0);
    return best;
}

/// Diagonal-Gaussian mixture density written out directly.
inline double mixture_density(const StateMixture& st, const std::vector<double>& x) {
    double total = 0.0;
    for (std::size_t k = 0; k < st.weights.size(); ++k) {
        double dens = st.weights[k];
        for (std::size_t d = 0; d < x.size(); ++d) {
            const double var = st.variances[k][d];
            const double diff = x[d] - st.means[k][d];
            dens *= std::exp(-0.5 * diff * diff / var) / std::sqrt(2.0 * std::numbers::pi * var);
        }
        total += dens;
    }
    return total;
}

/// log p(obs) as a sum over all N^L state paths.
inline double brute_force_log_likelihood(const GroupHmm& h, const std::vector<std::vector<double>>& obs) {
    const std::size_t n = h.n_states();
    const std::size_t L = obs.size();
    std::vector<std::vector<double>> b(L, std::vector<double>(n));
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t j = 0; j < n; ++j) b[t][j] = mixture_density(h.states[j], obs[t]);
    }
    std::vector<std::size_t> path(L, 0);
    double total = 0.0;
    while (true) {
        double p = h.initial[path[0]] * b[0][path[0]];
        for (std::size_t t = 1; t < L; ++t) p *= h.transition[path[t - 1]][path[t]] * b[t][path[t]];
        total += p;
        std::size_t t = 0;
        while (t < L && ++path[t] == n) path[t++] = 0;
        if (t == L) break;
    }
    return std::log(total);
}

inline std::vector<double> random_simplex(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    double s = 0.0;
    for (auto& x : v) {
        x = 0.05 + rng.uniform();
        s += x;
    }
    for (auto& x : v) x /= s;
    return v;
}

inline GroupHmm random_hmm(Rng& rng, std::size_t n, std::size_t m, std::size_t d) {
    GroupHmm h;
    h.initial = random_simplex(rng, n);
    for (std::size_t i = 0; i < n; ++i) h.transition.push_back(random_simplex(rng, n));
    for (std::size_t j = 0; j < n; ++j) {
        StateMixture st;
        st.weights = random_simplex(rng, m);
        for (std::size_t k = 0; k < m; ++k) {
            std::vector<double> mu(d), var(d);
            for (std::size_t e = 0; e < d; ++e) {
                mu[e] = rng.uniform(-2.0, 2.0);
                var[e] = rng.uniform(0.3, 2.0);
            }
            st.means.push_back(mu);
            st.variances.push_back(var);
        }
        h.states.push_back(st);
    }
    return h;
}

/// Samples L frames from an HMM.
inline ObservationMatrix sample_hmm(const GroupHmm& h, std::size_t L, Rng& rng) {
    auto draw = [&](const std::vector<double>& p) {
        double u = rng.uniform();
        for (std::size_t i = 0; i < p.size(); ++i) {
            u -= p[i];
            if (u < 0.0) return i;
        }
        return p.size() - 1;
    };
    ObservationMatrix obs;
    obs.frames = L;
    obs.dims = h.dims();
    std::size_t s = draw(h.initial);
    for (std::size_t t = 0; t < L; ++t) {
        if (t > 0) s = draw(h.transition[s]);
        const auto& st = h.states[s];
        const auto k = draw(st.weights);
        for (std::size_t e = 0; e < obs.dims; ++e) {
            obs.data.push_back(rng.normal(st.means[k][e], std::sqrt(st.variances[k][e])));
        }
    }
    return obs;
}

inline ObservationMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
    ObservationMatrix obs;
    obs.frames = rows.size();
    obs.dims = rows.empty() ? 0 : rows[0].size();
    for (const auto& r : rows) obs.data.insert(obs.data.end(), r.begin(), r.end());
    return obs;
}

/// Code of the agedetect::Error thrown by f, if any.
template <class F>
std::optional<ErrorCode> code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("agedetect_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fx
