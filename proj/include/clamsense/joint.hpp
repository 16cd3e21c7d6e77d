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

#include "estimate.hpp"

namespace clamsense
{

enum class DoaEstimator
{
    Music,
    Fft,
};

enum class Stage
{
    Step1,
    Step2,
    Final,
};

inline const char *to_string(Stage s)
{
    switch (s)
    {
    case Stage::Step1: return "Step1";
    case Stage::Step2: return "Step2";
    case Stage::Final: return "Final";
    }
    return "unknown";
}

namespace record_flags
{
inline constexpr std::uint32_t kPadded = 1u << 0;          // fewer spectral peaks than requested
inline constexpr std::uint32_t kProjectorFailed = 1u << 1; // an iteration could not build its projector
inline constexpr std::uint32_t kNoClasses = 1u << 2;       // an iteration found nothing above the floor
inline constexpr std::uint32_t kShortfall = 1u << 3;       // fewer final clusters than requested
} // namespace record_flags

/// One estimate with its provenance. Delay and Doppler are NaN for angle-only estimators.
struct EstimateRecord
{
    Stage stage = Stage::Final;
    int iteration = -1;
    int cls = -1;
    double delay_s = std::numeric_limits<double>::quiet_NaN();
    double doppler_hz = std::numeric_limits<double>::quiet_NaN();
    Doa doa;
    double power = 0.0;
    std::uint32_t flags = 0;
    std::vector<int> members; // Final: indices of the Step2 records it merges

    std::string tag() const
    {
        if (stage == Stage::Step2)
            return "Step2-iter-" + std::to_string(iteration) + "-class-" + std::to_string(cls);
        if (stage == Stage::Step1)
            return "Step1-cand-" + std::to_string(cls);
        return "Final-" + std::to_string(cls);
    }
};

struct EstimateSet
{
    std::vector<EstimateRecord> records;
    std::vector<std::string> diagnostics;

    std::vector<EstimateRecord> stage(Stage s) const
    {
        std::vector<EstimateRecord> out;
        std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                     [s](const EstimateRecord &r) { return r.stage == s; });
        return out;
    }
};

struct ClusterConfig
{
    double angle_link_deg = 1.5;
    double delay_link_bins = 1.5;
    double doppler_link_bins = 1.5;
    double clutter_angle_tol_deg = 1.5;
    double clutter_doppler_tol_bins = 1.0;
    std::vector<double> clutter_dopplers_hz; // empty: discard by angle alone
    double delay_bin_s = 1.0;                // width of one delay bin
    double doppler_bin_hz = 1.0;             // width of one Doppler bin
};

struct JointConfig
{
    int sources = 2;
    DoaEstimator estimator = DoaEstimator::Music;
    AngleGrid grid{0.5};
    bool refine = true;
    int fft_size = 64;
    int delay_oversample = 4;
    int doppler_oversample = 4;
    Window window = Window::Hann;
    GroupingConfig grouping;
    ClusterConfig cluster;
    bool iterate_all = false;
    double gain_floor = 1e-2;
    double condition_cap = 1e10;
    unsigned threads = 1;
};

struct Step1Result
{
    std::vector<Doa> candidates;
    PeakSet peaks;
};

/// Null the mapped clutter, then estimate `sources` target directions.
inline Step1Result joint_step1(const ReceivedTensor &t, const std::vector<Doa> &clutter, const JointConfig &cfg)
{
    const auto proj = zf_build(t.array, clutter, cfg.condition_cap);
    const CMat y = zf_apply(proj, CMat(t.valid_snapshots()));
    Step1Result out;
    if (cfg.estimator == DoaEstimator::Music)
        out.peaks = music_doas(covariance(y), cfg.sources, cfg.sources, t.array, cfg.grid, &proj, cfg.refine);
    else
        out.peaks = fft_doa(y, t.array, cfg.fft_size, cfg.sources, &proj, cfg.gain_floor).peaks;
    out.candidates = out.peaks.doas();
    return out;
}

namespace detail
{
/// Single direction estimate from one spatial snapshot taken after projection.
inline Doa refine_direction(const CVec &x, const ZfProjector &proj, const JointConfig &cfg)
{
    if (cfg.estimator == DoaEstimator::Fft)
        return fft_doa(CMat(x), proj.array, cfg.fft_size, 1, &proj, cfg.gain_floor).peaks.peaks.front().doa;
    const CMat r = x * x.adjoint();
    const auto spec = music_spectrum(r, 1, proj.array, cfg.grid, &proj, ScanModel::ProjectedNormalized,
                                     cfg.gain_floor);
    auto peaks = music_peaks(spec, 1);
    if (cfg.refine)
        peaks = refine_peaks(spec, peaks);
    return peaks.peaks.front().doa;
}
} // namespace detail

/// For each candidate (or every direction with `iterate_all`), null all other known
/// directions, separate the residual in delay-Doppler and re-estimate each class direction.
inline EstimateSet joint_step2(const ReceivedTensor &t, const std::vector<Doa> &clutter,
                               const std::vector<Doa> &candidates, const JointConfig &cfg)
{
    std::vector<Doa> all = clutter;
    all.insert(all.end(), candidates.begin(), candidates.end());
    std::vector<std::size_t> iterate;
    for (std::size_t k = cfg.iterate_all ? 0 : clutter.size(); k < all.size(); ++k)
        iterate.push_back(k);

    const int n_tau = t.ofdm.n_sc * cfg.delay_oversample, n_fd = t.ofdm.n_sym * cfg.doppler_oversample;
    std::vector<std::vector<EstimateRecord>> per_iter(iterate.size());
    std::vector<std::string> notes(iterate.size());
    parallel_for(
        iterate.size(),
        [&](std::size_t it) {
            std::vector<Doa> nulls;
            for (std::size_t k = 0; k < all.size(); ++k)
                if (k != iterate[it])
                    nulls.push_back(all[k]);
            ZfProjector proj;
            try
            {
                proj = zf_build(t.array, nulls, cfg.condition_cap);
            }
            catch (const Error &e)
            {
                if (e.kind() != ErrorKind::Projector)
                    throw;
                notes[it] = "iteration " + std::to_string(it) + " skipped: " + e.what();
                return;
            }
            const auto dd = delay_doppler(zf_apply(proj, t), n_tau, n_fd, cfg.window);
            GroupingConfig grouping = cfg.grouping;
            if (grouping.channels == 0)
                grouping.channels = t.antennas() - static_cast<int>(nulls.size());
            const auto classes = dd_peaks_and_group(dd, grouping);
            if (classes.empty())
                notes[it] = "iteration " + std::to_string(it) + ": no delay-Doppler classes above the floor";
            const int m = t.antennas();
            for (std::size_t c = 0; c < classes.size(); ++c)
            {
                const auto &cls = classes[c];
                const CVec x = dd.snapshot(cls.delay_bin, cls.doppler_bin);
                EstimateRecord r;
                r.stage = Stage::Step2;
                r.iteration = static_cast<int>(it);
                r.cls = static_cast<int>(c);
                r.delay_s = cls.delay_s;
                r.doppler_hz = cls.doppler_hz;
                r.doa = detail::refine_direction(x, proj, cfg);
                // Undo the projection loss so that classes from different iterations compare.
                const double kept = std::max(proj.retained_fraction(steering_vector(t.array, r.doa)), 1e-12);
                r.power = x.squaredNorm() * proj.fro_norm * proj.fro_norm / (m * kept) /
                          (static_cast<double>(t.ofdm.n_sc) * t.ofdm.n_sym);
                per_iter[it].push_back(r);
            }
        },
        cfg.threads);

    EstimateSet out;
    for (std::size_t it = 0; it < iterate.size(); ++it)
    {
        if (!notes[it].empty())
            out.diagnostics.push_back(notes[it]);
        out.records.insert(out.records.end(), per_iter[it].begin(), per_iter[it].end());
    }
    return out;
}

/// Discards records that sit on a mapped clutter direction, links the rest by single
/// linkage in (azimuth, zenith, delay bin, Doppler bin) and keeps the `sources` strongest
/// clusters as power-weighted centroids.
inline std::vector<EstimateRecord> cluster_match(const std::vector<EstimateRecord> &records, int sources,
                                                 const std::vector<Doa> &clutter, const ClusterConfig &cfg)
{
    if (sources < 1)
        fail(ErrorKind::Domain, "source count must be positive");
    std::vector<int> kept;
    for (int i = 0; i < static_cast<int>(records.size()); ++i)
    {
        const auto &r = records[static_cast<std::size_t>(i)];
        bool on_clutter = false;
        for (const auto &c : clutter)
        {
            if (std::abs(r.doa.azimuth_deg - c.azimuth_deg) > cfg.clutter_angle_tol_deg ||
                std::abs(r.doa.zenith_deg - c.zenith_deg) > cfg.clutter_angle_tol_deg)
                continue;
            if (cfg.clutter_dopplers_hz.empty())
                on_clutter = true;
            else
                for (double f : cfg.clutter_dopplers_hz)
                    on_clutter = on_clutter ||
                                 std::abs(r.doppler_hz - f) <= cfg.clutter_doppler_tol_bins * cfg.doppler_bin_hz;
        }
        if (!on_clutter)
            kept.push_back(i);
    }

    std::vector<int> parent(kept.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
        while (parent[static_cast<std::size_t>(a)] != a)
            a = parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
        return a;
    };
    auto close = [&](const EstimateRecord &a, const EstimateRecord &b) {
        auto within = [](double x, double y, double tol) {
            return (std::isnan(x) && std::isnan(y)) || std::abs(x - y) <= tol;
        };
        return within(a.doa.azimuth_deg, b.doa.azimuth_deg, cfg.angle_link_deg) &&
               within(a.doa.zenith_deg, b.doa.zenith_deg, cfg.angle_link_deg) &&
               within(a.delay_s / cfg.delay_bin_s, b.delay_s / cfg.delay_bin_s, cfg.delay_link_bins) &&
               within(a.doppler_hz / cfg.doppler_bin_hz, b.doppler_hz / cfg.doppler_bin_hz, cfg.doppler_link_bins);
    };
    for (std::size_t i = 0; i < kept.size(); ++i)
        for (std::size_t j = i + 1; j < kept.size(); ++j)
            if (close(records[static_cast<std::size_t>(kept[i])], records[static_cast<std::size_t>(kept[j])]))
                parent[static_cast<std::size_t>(find(static_cast<int>(i)))] = find(static_cast<int>(j));

    std::vector<EstimateRecord> clusters;
    std::vector<int> root_of_cluster;
    for (std::size_t i = 0; i < kept.size(); ++i)
    {
        const int root = find(static_cast<int>(i));
        auto pos = std::find(root_of_cluster.begin(), root_of_cluster.end(), root);
        if (pos == root_of_cluster.end())
        {
            root_of_cluster.push_back(root);
            clusters.emplace_back();
            pos = root_of_cluster.end() - 1;
        }
        clusters[static_cast<std::size_t>(pos - root_of_cluster.begin())].members.push_back(kept[i]);
    }
    for (auto &c : clusters)
    {
        c.stage = Stage::Final;
        double wsum = 0.0, az = 0.0, zen = 0.0, tau = 0.0, fd = 0.0;
        for (int idx : c.members)
        {
            const auto &r = records[static_cast<std::size_t>(idx)];
            const double w = std::max(r.power, 1e-300);
            wsum += w;
            az += w * r.doa.azimuth_deg;
            zen += w * r.doa.zenith_deg;
            tau += w * r.delay_s;
            fd += w * r.doppler_hz;
            c.power = std::max(c.power, r.power);
            c.flags |= r.flags;
        }
        c.doa = {az / wsum, zen / wsum};
        c.delay_s = tau / wsum;
        c.doppler_hz = fd / wsum;
    }
    std::stable_sort(clusters.begin(), clusters.end(),
                     [](const EstimateRecord &a, const EstimateRecord &b) { return a.power > b.power; });
    if (static_cast<int>(clusters.size()) > sources)
        clusters.resize(static_cast<std::size_t>(sources));
    for (std::size_t i = 0; i < clusters.size(); ++i)
        clusters[i].cls = static_cast<int>(i);
    return clusters;
}

/// Both steps plus clustering. Records hold the Step1 candidates, every Step2 class and
/// the Final estimates; Final member indices refer to positions in `records`.
inline EstimateSet run_joint(const ReceivedTensor &t, const std::vector<Doa> &clutter, JointConfig cfg)
{
    if (cfg.sources < 1)
        fail(ErrorKind::Domain, "source count must be positive");
    cfg.cluster.delay_bin_s = 1.0 / (t.ofdm.delta_f_hz * t.ofdm.n_sc * cfg.delay_oversample);
    cfg.cluster.doppler_bin_hz = 1.0 / (t.ofdm.t_s() * t.ofdm.n_sym * cfg.doppler_oversample);

    const auto s1 = joint_step1(t, clutter, cfg);
    EstimateSet out;
    for (std::size_t k = 0; k < s1.peaks.peaks.size(); ++k)
    {
        EstimateRecord r;
        r.stage = Stage::Step1;
        r.cls = static_cast<int>(k);
        r.doa = s1.peaks.peaks[k].doa;
        r.power = s1.peaks.peaks[k].value;
        r.flags = s1.peaks.padded ? record_flags::kPadded : 0u;
        out.records.push_back(r);
    }
    if (s1.peaks.padded)
        out.diagnostics.push_back("step 1 found fewer spectral peaks than sources; padded from the global ranking");

    auto s2 = joint_step2(t, clutter, s1.candidates, cfg);
    const std::size_t offset = out.records.size();
    out.records.insert(out.records.end(), s2.records.begin(), s2.records.end());
    out.diagnostics.insert(out.diagnostics.end(), s2.diagnostics.begin(), s2.diagnostics.end());

    auto finals = cluster_match(s2.records, cfg.sources, clutter, cfg.cluster);
    const bool shortfall = static_cast<int>(finals.size()) < cfg.sources;
    if (shortfall)
        out.diagnostics.push_back("only " + std::to_string(finals.size()) + " of " + std::to_string(cfg.sources) +
                                  " targets survived clustering");
    for (auto &f : finals)
    {
        for (auto &m : f.members)
            m += static_cast<int>(offset);
        if (shortfall)
            f.flags |= record_flags::kShortfall;
        out.records.push_back(f);
    }
    return out;
}

// ------------------------------------------------------------------------
// Localization

struct Localization
{
    Vec3 position_m = Vec3::Zero();
    double range_m = 0.0; // BS to target
};

/// Intersects the bistatic ellipsoid (foci UE and BS, path length c * delay) with the ray
/// from the BS along the estimated direction. The linear closed form is the positive root
/// of the ray-ellipsoid quadratic.
inline Localization localize(double delay_s, const Doa &doa, const Vec3 &ue, const Vec3 &bs,
                             const ArrayGeometry &array = {})
{
    check_doa(doa);
    const double az = deg2rad(doa.azimuth_deg), zen = deg2rad(doa.zenith_deg);
    const Vec3 dir = std::sin(zen) * (std::cos(az) * array.x_axis() + std::sin(az) * array.broadside()) +
                     std::cos(zen) * Vec3::UnitZ();
    const Vec3 w = bs - ue;
    const double path = delay_s * kSpeedOfLight;
    if (!(path > w.norm()))
        fail(ErrorKind::Geometry, "bistatic path ", path, " m not longer than the baseline ", w.norm(), " m");
    const double r = (path * path - w.squaredNorm()) / (2.0 * (path + w.dot(dir)));
    return {bs + r * dir, r};
}

/// Horizontal-plane variant: zenith fixed at 90 degrees.
inline Localization localize(double delay_s, double azimuth_deg, const Vec3 &ue, const Vec3 &bs,
                             const ArrayGeometry &array = {})
{
    return localize(delay_s, Doa{azimuth_deg, 90.0}, ue, bs, array);
}

} // namespace clamsense
