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

#include "joint.hpp"

namespace clamsense
{

enum class Method
{
    Fft,
    SpatialFft,
    JointFft,
    Music,
    SpatialMusic,
    JointMusic,
    SequentialZfMusic,
    SmoothingMusic,
    MtiMusic,
};

inline constexpr Method kAllMethods[] = {Method::Fft,          Method::SpatialFft,        Method::JointFft,
                                         Method::Music,        Method::SpatialMusic,      Method::JointMusic,
                                         Method::SequentialZfMusic, Method::SmoothingMusic, Method::MtiMusic};

inline const char *to_string(Method m)
{
    switch (m)
    {
    case Method::Fft: return "fft";
    case Method::SpatialFft: return "spatial-fft";
    case Method::JointFft: return "joint-fft";
    case Method::Music: return "music";
    case Method::SpatialMusic: return "spatial-music";
    case Method::JointMusic: return "joint-music";
    case Method::SequentialZfMusic: return "sequential-zf-music";
    case Method::SmoothingMusic: return "smoothing-music";
    case Method::MtiMusic: return "mti-music";
    }
    return "unknown";
}

inline Method method_from_string(const std::string &s)
{
    for (auto m : kAllMethods)
        if (s == to_string(m))
            return m;
    fail(ErrorKind::Domain, "unknown method '", s, "'");
}

struct PipelineConfig
{
    int targets = 2; // S
    int clutter = 3; // L
    AngleGrid grid{0.5};
    bool refine = true;
    int fft_size = 64;
    int mti_order = 1;
    JointConfig joint;
};

struct MethodOutput
{
    Method method = Method::Music;
    std::vector<EstimateRecord> estimates; // final target estimates
    EstimateSet detail;                     // joint methods: every stage
    bool padded = false;
    std::vector<std::string> notes;
};

namespace detail
{
inline std::vector<EstimateRecord> angle_records(const PeakSet &p)
{
    std::vector<EstimateRecord> out;
    for (std::size_t k = 0; k < p.peaks.size(); ++k)
    {
        EstimateRecord r;
        r.cls = static_cast<int>(k);
        r.doa = p.peaks[k].doa;
        r.power = p.peaks[k].value;
        r.flags = p.padded ? record_flags::kPadded : 0u;
        out.push_back(r);
    }
    return out;
}
} // namespace detail

/// Runs one estimator on a received tensor. Conventional methods see L + S sources and
/// report their S strongest peaks; clutter-aided methods use the mapped clutter directions.
inline MethodOutput run_method(Method method, const ReceivedTensor &t, const std::vector<Doa> &clutter,
                               const PipelineConfig &cfg)
{
    const auto &g = t.array;
    const int s = cfg.targets, all = cfg.targets + cfg.clutter;
    MethodOutput out;
    out.method = method;
    auto angle_only = [&](const PeakSet &p) {
        out.estimates = detail::angle_records(p);
        out.padded = p.padded;
    };
    switch (method)
    {
    case Method::Fft:
        angle_only(fft_doa(CMat(t.valid_snapshots()), g, cfg.fft_size, s).peaks);
        break;
    case Method::SpatialFft: {
        const auto proj = zf_build(g, clutter, cfg.joint.condition_cap);
        angle_only(fft_doa(zf_apply(proj, CMat(t.valid_snapshots())), g, cfg.fft_size, s, &proj,
                           cfg.joint.gain_floor)
                       .peaks);
        break;
    }
    case Method::Music:
        angle_only(music_doas(covariance(t.valid_snapshots()), all, s, g, cfg.grid, nullptr, cfg.refine));
        break;
    case Method::SpatialMusic: {
        const auto proj = zf_build(g, clutter, cfg.joint.condition_cap);
        angle_only(music_doas(covariance(zf_apply(proj, CMat(t.valid_snapshots()))), s, s, g, cfg.grid, &proj,
                              cfg.refine));
        break;
    }
    case Method::SequentialZfMusic: {
        const auto r = sequential_zf_music(CMat(t.valid_snapshots()), g, all, cfg.grid);
        PeakSet p;
        for (const auto &d : r.doas)
            p.peaks.push_back({d, 0.0});
        angle_only(p);
        if (r.partial)
            out.notes.push_back(r.error);
        break;
    }
    case Method::SmoothingMusic:
        angle_only(spatial_smoothing_music(CMat(t.valid_snapshots()), g, all, s, cfg.grid));
        break;
    case Method::MtiMusic: {
        const auto filtered = mti_apply(t, mti_design(cfg.mti_order, t.ofdm.t_s()));
        angle_only(music_doas(covariance(filtered.valid_snapshots()), all, s, g, cfg.grid, nullptr, cfg.refine));
        break;
    }
    case Method::JointFft:
    case Method::JointMusic: {
        JointConfig jc = cfg.joint;
        jc.sources = s;
        jc.grid = cfg.grid;
        jc.refine = cfg.refine;
        jc.fft_size = cfg.fft_size;
        jc.estimator = method == Method::JointFft ? DoaEstimator::Fft : DoaEstimator::Music;
        out.detail = run_joint(t, clutter, jc);
        out.estimates = out.detail.stage(Stage::Final);
        out.padded = std::any_of(out.detail.records.begin(), out.detail.records.end(),
                                 [](const EstimateRecord &r) { return r.flags & record_flags::kPadded; });
        out.notes = out.detail.diagnostics;
        break;
    }
    }
    return out;
}

} // namespace clamsense
