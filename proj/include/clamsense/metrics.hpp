// SPDX-License-Identifier: Apache-2.0
//
// clamsense: clutter-angle-map aided sensing for bi-static OFDM ISAC
// Copyright (C) 2026 The clamsense authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include "io.hpp"
#include "pipeline.hpp"

#include <map>

namespace clamsense
{

// ------------------------------------------------------------------------
// Complexity model: complex multiplications per estimate

struct ComplexityParams
{
    std::uint64_t m = 64;        // array elements
    std::uint64_t n_sym = 100;   // OFDM symbols
    std::uint64_t n_sc = 1024;   // subcarriers
    std::uint64_t n_fft = 1024;  // spatial FFT points
    std::uint64_t n_tau = 1024;  // delay transform length
    std::uint64_t n_fd = 1024;   // Doppler transform length
    std::uint64_t s = 2;         // targets
    std::uint64_t l = 3;         // clutter paths
    std::uint64_t r_az = 901;    // azimuth grid points
    std::uint64_t r_zen = 901;   // zenith grid points
};

enum class Algorithm
{
    Fft,
    SpatialFft,
    JointFft,
    Music,
    SpatialMusic,
    SequentialZfMusic,
    JointMusic,
};

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::Fft,          Algorithm::SpatialFft,
                                               Algorithm::JointFft,     Algorithm::Music,
                                               Algorithm::SpatialMusic, Algorithm::SequentialZfMusic,
                                               Algorithm::JointMusic};

inline const char *to_string(Algorithm a)
{
    switch (a)
    {
    case Algorithm::Fft: return "fft";
    case Algorithm::SpatialFft: return "spatial-fft";
    case Algorithm::JointFft: return "joint-fft";
    case Algorithm::Music: return "music";
    case Algorithm::SpatialMusic: return "spatial-music";
    case Algorithm::SequentialZfMusic: return "sequential-zf-music";
    case Algorithm::JointMusic: return "joint-music";
    }
    return "unknown";
}

namespace detail
{
/// n/2 * log2(n) for powers of two, exactly.
inline std::uint64_t half_n_log2n_exact(std::uint64_t n)
{
    if (n == 0 || (n & (n - 1)) != 0)
        fail(ErrorKind::Domain, "transform length ", n, " is not a power of two");
    return n / 2 * static_cast<std::uint64_t>(std::countr_zero(n));
}
} // namespace detail

/// Closed-form multiplication count. Transform lengths must be powers of two.
inline std::uint64_t complexity(Algorithm a, const ComplexityParams &p)
{
    const std::uint64_t m = p.m, nn = p.n_sym * p.n_sc, grid = p.r_az * p.r_zen, k = p.l + p.s - 1;
    const std::uint64_t fft = nn * (p.n_fft + detail::half_n_log2n_exact(p.n_fft));
    // Per-candidate cost shared by both joint variants: projector, projection and delay-Doppler map.
    const std::uint64_t joint_common = k * (m + k) * (m + k) + nn * m * m +
                                       m * p.n_sym * detail::half_n_log2n_exact(p.n_tau) +
                                       m * p.n_tau * detail::half_n_log2n_exact(p.n_fd) + m * p.n_tau * p.n_fd;
    switch (a)
    {
    case Algorithm::Fft: return fft;
    case Algorithm::SpatialFft: return fft + nn * m * m;
    case Algorithm::JointFft:
        return p.s * (joint_common + detail::half_n_log2n_exact(p.n_fft) + p.n_fft);
    case Algorithm::Music: return nn * m * m + m * m * m + grid * (m + 1) * (m - (p.l + p.s));
    case Algorithm::SpatialMusic: return 2 * nn * m * m + m * m * m + grid * (m + 1) * (m - p.s);
    case Algorithm::SequentialZfMusic: {
        std::uint64_t total = m * m * (p.l + p.s) * (2 * nn + m + grid);
        for (std::uint64_t j = 1; j <= p.l + p.s; ++j)
            total += 2 * j * (m + j) * (m + j);
        return total;
    }
    case Algorithm::JointMusic: return p.s * (joint_common + m * m + m * m * m + grid * (m * m - 1));
    }
    return 0;
}

struct ComplexityRow
{
    std::uint64_t m = 0;
    std::map<Algorithm, std::uint64_t> counts;
};

/// Array sizes 16, 64, 256 and 1024 with N_sym = 100, 1024-point transforms, S = 2, L = 3
/// and a 901 x 901 grid.
inline std::vector<ComplexityRow> complexity_sweep(const std::vector<std::uint64_t> &sizes = {16, 64, 256, 1024},
                                                   ComplexityParams base = {})
{
    std::vector<ComplexityRow> rows;
    for (auto m : sizes)
    {
        base.m = m;
        ComplexityRow r;
        r.m = m;
        for (auto a : kAllAlgorithms)
            r.counts[a] = complexity(a, base);
        rows.push_back(r);
    }
    return rows;
}

// ------------------------------------------------------------------------
// Error metrics

inline constexpr double kMissPenaltyDeg = 90.0;

struct TargetTruth
{
    Doa doa;
    double delay_s = 0.0;
    double doppler_hz = 0.0;
};

struct TargetError
{
    int target = 0;
    bool matched = false;
    Doa estimate;
    double azimuth_err = kMissPenaltyDeg; // absolute, degrees
    double zenith_err = kMissPenaltyDeg;
    double delay_err_s = std::numeric_limits<double>::quiet_NaN();
    double doppler_err_hz = std::numeric_limits<double>::quiet_NaN();
};

/// Greedy nearest-angle association, closest pair first. Each truth takes at most one
/// estimate; truths left without one are misses charged the penalty on both angles.
inline std::vector<TargetError> associate(const std::vector<EstimateRecord> &estimates,
                                          const std::vector<TargetTruth> &truths)
{
    struct Pair
    {
        double dist;
        std::size_t e, t;
    };
    std::vector<Pair> pairs;
    for (std::size_t e = 0; e < estimates.size(); ++e)
        for (std::size_t t = 0; t < truths.size(); ++t)
            pairs.push_back({std::hypot(estimates[e].doa.azimuth_deg - truths[t].doa.azimuth_deg,
                                        estimates[e].doa.zenith_deg - truths[t].doa.zenith_deg),
                             e, t});
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair &a, const Pair &b) { return a.dist < b.dist; });

    std::vector<TargetError> out(truths.size());
    std::vector<char> used(estimates.size(), 0);
    for (std::size_t t = 0; t < truths.size(); ++t)
        out[t].target = static_cast<int>(t);
    for (const auto &p : pairs)
    {
        if (used[p.e] || out[p.t].matched)
            continue;
        used[p.e] = 1;
        auto &err = out[p.t];
        const auto &est = estimates[p.e];
        err.matched = true;
        err.estimate = est.doa;
        err.azimuth_err = std::abs(est.doa.azimuth_deg - truths[p.t].doa.azimuth_deg);
        err.zenith_err = std::abs(est.doa.zenith_deg - truths[p.t].doa.zenith_deg);
        err.delay_err_s = est.delay_s - truths[p.t].delay_s;
        err.doppler_err_hz = est.doppler_hz - truths[p.t].doppler_hz;
    }
    return out;
}

enum class Quantity
{
    Azimuth,
    Zenith,
    Delay,
    Doppler,
};

inline double error_of(const TargetError &e, Quantity q)
{
    switch (q)
    {
    case Quantity::Azimuth: return e.azimuth_err;
    case Quantity::Zenith: return e.zenith_err;
    case Quantity::Delay: return e.matched ? std::abs(e.delay_err_s) : std::numeric_limits<double>::quiet_NaN();
    case Quantity::Doppler: return e.matched ? std::abs(e.doppler_err_hz) : std::numeric_limits<double>::quiet_NaN();
    }
    return std::numeric_limits<double>::quiet_NaN();
}

struct TrialResult
{
    int snr_index = 0;
    double snr_db = 0.0;
    int trial = 0;
    std::uint64_t seed = 0;
    Method method = Method::Music;
    std::vector<TargetError> errors;
    bool padded = false;
    bool failed = false;
    std::string error;
};

/// Pooled root-mean-square error over all targets of the given trials. Delay and Doppler
/// skip misses and angle-only estimates (NaN).
inline double rmse(const std::vector<TrialResult> &trials, Quantity q)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto &t : trials)
        for (const auto &e : t.errors)
        {
            const double v = error_of(e, q);
            if (std::isnan(v))
                continue;
            sum += v * v;
            ++n;
        }
    return n ? std::sqrt(sum / static_cast<double>(n)) : std::numeric_limits<double>::quiet_NaN();
}

/// Median absolute error pooled over all targets of the given trials.
inline double median_error(const std::vector<TrialResult> &trials, Quantity q)
{
    std::vector<double> v;
    for (const auto &t : trials)
        for (const auto &e : t.errors)
            if (const double x = error_of(e, q); !std::isnan(x))
                v.push_back(x);
    if (v.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// ------------------------------------------------------------------------
// Monte Carlo harness

struct ExperimentSpec
{
    std::string name = "experiment";
    Scene scene;
    OfdmParams ofdm = OfdmParams::desk();
    std::vector<Method> methods;
    std::vector<std::optional<double>> snr_db; // nullopt: noiseless
    int trials = 10;
    std::uint64_t seed = 1;
    bool randomize_phases = true;
    PipelineConfig pipeline;
    unsigned threads = 0;
};

/// Trial seed: master seed + snr_index * trials + trial. Path phases draw from a generator
/// seeded with the trial seed XOR a fixed constant.
inline std::uint64_t trial_seed(const ExperimentSpec &spec, int snr_index, int trial)
{
    return spec.seed + static_cast<std::uint64_t>(snr_index) * static_cast<std::uint64_t>(spec.trials) +
           static_cast<std::uint64_t>(trial);
}

inline std::vector<TargetTruth> target_truths(const std::vector<PathParams> &paths)
{
    std::vector<TargetTruth> out;
    for (const auto &p : paths)
        if (p.kind == PathKind::Target)
            out.push_back({p.doa, p.delay_s, p.doppler_hz});
    return out;
}

/// Synthesizes one realisation and runs every method on it.
inline std::vector<TrialResult> run_trial(const ExperimentSpec &spec, int snr_index, int trial)
{
    const auto seed = trial_seed(spec, snr_index, trial);
    auto paths = derive_paths(spec.scene);
    if (spec.randomize_phases)
    {
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
        for (auto &p : paths)
            p.gain = std::polar(std::abs(p.gain), phase(rng));
    }
    const auto truths = target_truths(paths);
    std::vector<Doa> clutter;
    for (const auto &p : filter_paths(paths, PathKind::Clutter))
        clutter.push_back(p.doa);

    const auto snr = spec.snr_db[static_cast<std::size_t>(snr_index)];
    const auto data = synthesize(paths, spec.ofdm, spec.scene.array, snr, seed);
    PipelineConfig cfg = spec.pipeline;
    cfg.targets = static_cast<int>(truths.size());
    cfg.clutter = static_cast<int>(clutter.size());

    std::vector<TrialResult> out;
    for (auto m : spec.methods)
    {
        TrialResult r;
        r.snr_index = snr_index;
        r.snr_db = snr ? *snr : std::numeric_limits<double>::infinity();
        r.trial = trial;
        r.seed = seed;
        r.method = m;
        try
        {
            const auto res = run_method(m, data, clutter, cfg);
            r.errors = associate(res.estimates, truths);
            r.padded = res.padded;
        }
        catch (const Error &e)
        {
            r.failed = true;
            r.error = e.what();
            r.errors = associate({}, truths);
        }
        out.push_back(std::move(r));
    }
    return out;
}

struct ExperimentResult
{
    std::vector<TrialResult> trials; // ordered by SNR index, trial, method
};

inline ExperimentResult monte_carlo(const ExperimentSpec &spec)
{
    if (spec.trials < 1 || spec.methods.empty() || spec.snr_db.empty())
        fail(ErrorKind::Domain, "experiment needs trials, methods and SNR points");
    check_delays_within_cp(derive_paths(spec.scene), spec.ofdm);
    const std::size_t jobs = spec.snr_db.size() * static_cast<std::size_t>(spec.trials);
    std::vector<std::vector<TrialResult>> per_job(jobs);
    parallel_for(
        jobs,
        [&](std::size_t j) {
            per_job[j] = run_trial(spec, static_cast<int>(j / static_cast<std::size_t>(spec.trials)),
                                   static_cast<int>(j % static_cast<std::size_t>(spec.trials)));
        },
        spec.threads);
    ExperimentResult out;
    for (auto &v : per_job)
        for (auto &r : v)
            out.trials.push_back(std::move(r));
    return out;
}

inline std::vector<TrialResult> select(const ExperimentResult &r, Method m, int snr_index)
{
    std::vector<TrialResult> out;
    for (const auto &t : r.trials)
        if (t.method == m && t.snr_index == snr_index)
            out.push_back(t);
    return out;
}

inline ExperimentSpec experiment_from_json(const json &j, const std::string &base_dir = ".")
{
    ExperimentSpec s;
    s.name = j.value("name", s.name);
    const auto &sc = j.at("scene");
    if (sc.is_string())
    {
        const auto path = sc.get<std::string>();
        s.scene = load_scene(!path.empty() && path.front() == '/' ? path : base_dir + "/" + path);
    }
    else
        s.scene = scene_from_json(sc);
    if (j.contains("array"))
        s.scene.array = array_from_json(j.at("array"));
    if (j.contains("ofdm"))
        s.ofdm = ofdm_from_json(j.at("ofdm"));
    for (const auto &m : j.at("methods"))
        s.methods.push_back(method_from_string(m.get<std::string>()));
    for (const auto &v : j.at("snr_db"))
        s.snr_db.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    s.trials = j.value("trials", s.trials);
    s.seed = j.value("seed", s.seed);
    s.randomize_phases = j.value("randomize_phases", s.randomize_phases);
    s.threads = j.value("threads", s.threads);
    s.pipeline.grid.step_deg = j.value("grid_step_deg", s.pipeline.grid.step_deg);
    s.pipeline.fft_size = j.value("fft_size", s.pipeline.fft_size);
    s.pipeline.joint.delay_oversample = j.value("delay_oversample", s.pipeline.joint.delay_oversample);
    s.pipeline.joint.doppler_oversample = j.value("doppler_oversample", s.pipeline.joint.doppler_oversample);
    s.pipeline.joint.iterate_all = j.value("iterate_all", s.pipeline.joint.iterate_all);
    return s;
}

inline json experiment_to_json(const ExperimentSpec &s)
{
    json methods = json::array(), snrs = json::array();
    for (auto m : s.methods)
        methods.push_back(to_string(m));
    for (const auto &v : s.snr_db)
        snrs.push_back(v ? json(*v) : json(nullptr));
    return {{"name", s.name},
            {"scene", scene_to_json(s.scene)},
            {"ofdm", ofdm_to_json(s.ofdm)},
            {"methods", methods},
            {"snr_db", snrs},
            {"trials", s.trials},
            {"seed", s.seed},
            {"randomize_phases", s.randomize_phases},
            {"grid_step_deg", s.pipeline.grid.step_deg},
            {"fft_size", s.pipeline.fft_size},
            {"delay_oversample", s.pipeline.joint.delay_oversample},
            {"doppler_oversample", s.pipeline.joint.doppler_oversample},
            {"iterate_all", s.pipeline.joint.iterate_all},
            {"miss_penalty_deg", kMissPenaltyDeg}};
}

inline std::string snr_label(double snr_db) { return std::isinf(snr_db) ? "inf" : fmt(snr_db, 2); }

/// One row per (SNR, trial, method, target).
inline void write_trials_csv(std::ostream &os, const ExperimentSpec &spec, const ExperimentResult &r)
{
    write_header(os, experiment_to_json(spec));
    os << "snr_db,trial,seed,method,target,matched,azimuth_est_deg,zenith_est_deg,azimuth_err_deg,zenith_err_deg,"
          "delay_err_us,doppler_err_hz,padded,failed\n";
    for (const auto &t : r.trials)
        for (const auto &e : t.errors)
            os << snr_label(t.snr_db) << ',' << t.trial << ',' << t.seed << ',' << to_string(t.method) << ','
               << e.target << ',' << e.matched << ',' << fmt(e.matched ? e.estimate.azimuth_deg : NAN) << ','
               << fmt(e.matched ? e.estimate.zenith_deg : NAN) << ',' << fmt(e.azimuth_err) << ','
               << fmt(e.zenith_err) << ',' << fmt(e.delay_err_s * 1e6) << ',' << fmt(e.doppler_err_hz, 3) << ','
               << t.padded << ',' << t.failed << '\n';
}

/// One row per (method, SNR) with pooled RMSE and median errors.
inline void write_summary_csv(std::ostream &os, const ExperimentSpec &spec, const ExperimentResult &r)
{
    write_header(os, experiment_to_json(spec));
    os << "method,snr_db,trials,rmse_azimuth_deg,rmse_zenith_deg,median_azimuth_deg,median_zenith_deg,"
          "rmse_delay_us,rmse_doppler_hz,miss_rate\n";
    for (auto m : spec.methods)
        for (std::size_t i = 0; i < spec.snr_db.size(); ++i)
        {
            const auto sel = select(r, m, static_cast<int>(i));
            std::size_t misses = 0, total = 0;
            for (const auto &t : sel)
                for (const auto &e : t.errors)
                    misses += !e.matched, ++total;
            const double snr = spec.snr_db[i] ? *spec.snr_db[i] : std::numeric_limits<double>::infinity();
            os << to_string(m) << ',' << snr_label(snr) << ',' << sel.size() << ','
               << fmt(rmse(sel, Quantity::Azimuth)) << ',' << fmt(rmse(sel, Quantity::Zenith)) << ','
               << fmt(median_error(sel, Quantity::Azimuth)) << ',' << fmt(median_error(sel, Quantity::Zenith)) << ','
               << fmt(rmse(sel, Quantity::Delay) * 1e6) << ',' << fmt(rmse(sel, Quantity::Doppler), 3) << ','
               << fmt(total ? double(misses) / double(total) : 0.0, 4) << '\n';
        }
}

} // namespace clamsense
