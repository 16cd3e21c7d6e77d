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

#include "core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace clamsense
{

/// Uniform planar array at the base station.
///
/// Element (ix, iz) sits at ix * spacing along the array x-axis and iz * spacing along
/// the vertical axis. Its steering index is ix * mz + iz, so the steering vector is the
/// Kronecker product of the horizontal and vertical factors.
///
/// The array x-axis points along world heading `boresight_azimuth_deg + 90` in the
/// horizontal plane; broadside is `boresight_azimuth_deg`. Zenith is measured from the
/// world vertical.
struct ArrayGeometry
{
    int mx = 8;
    int mz = 8;
    double spacing_over_lambda = 0.5;
    double carrier_hz = 28e9;
    double boresight_azimuth_deg = -90.0;

    int elements() const { return mx * mz; }
    double wavelength_m() const { return kSpeedOfLight / carrier_hz; }

    void validate() const
    {
        if (mx < 1 || mz < 1)
            fail(ErrorKind::Precondition, "array dimensions must be positive, got ", mx, "x", mz);
        if (!(spacing_over_lambda > 0.0))
            fail(ErrorKind::Precondition, "element spacing must be positive");
        if (!(carrier_hz > 0.0))
            fail(ErrorKind::Precondition, "carrier frequency must be positive");
    }

    Vec3 x_axis() const
    {
        const double h = deg2rad(boresight_azimuth_deg + 90.0);
        return {std::cos(h), std::sin(h), 0.0};
    }
    Vec3 broadside() const
    {
        const double h = deg2rad(boresight_azimuth_deg);
        return {std::cos(h), std::sin(h), 0.0};
    }
};

/// Spatial frequencies (cycles per element) of a direction along the two array axes.
struct SpatialFrequency
{
    double u = 0.0; // horizontal: spacing * cos(az) * sin(zen)
    double v = 0.0; // vertical:   spacing * cos(zen)
};

inline void check_doa(const Doa &d)
{
    auto ok = [](double a) { return a >= 0.0 && a <= 180.0; };
    if (!ok(d.azimuth_deg) || !ok(d.zenith_deg))
        fail(ErrorKind::Domain, "DoA ", to_string(d), " outside [0, 180] degrees");
}

inline SpatialFrequency spatial_frequency(const ArrayGeometry &g, const Doa &d)
{
    const double az = deg2rad(d.azimuth_deg), zen = deg2rad(d.zenith_deg);
    return {g.spacing_over_lambda * std::cos(az) * std::sin(zen), g.spacing_over_lambda * std::cos(zen)};
}

inline CVec steering_from_frequency(const ArrayGeometry &g, SpatialFrequency f)
{
    CVec out(g.elements());
    for (int ix = 0; ix < g.mx; ++ix)
    {
        const cd ax = std::polar(1.0, 2.0 * kPi * ix * f.u);
        for (int iz = 0; iz < g.mz; ++iz)
            out(ix * g.mz + iz) = ax * std::polar(1.0, 2.0 * kPi * iz * f.v);
    }
    return out;
}

inline CVec steering_vector(const ArrayGeometry &g, const Doa &d)
{
    check_doa(d);
    return steering_from_frequency(g, spatial_frequency(g, d));
}

/// Stacks steering vectors column-wise.
inline CMat steering_matrix(const ArrayGeometry &g, const std::vector<Doa> &doas)
{
    CMat out(g.elements(), static_cast<Eigen::Index>(doas.size()));
    for (std::size_t k = 0; k < doas.size(); ++k)
        out.col(static_cast<Eigen::Index>(k)) = steering_vector(g, doas[k]);
    return out;
}

/// Doppler shift of a bistatic radial velocity. The propagation speed is exposed so that
/// tabulated values computed with the rounded 3e8 m/s can be reproduced.
inline double doppler_from_velocity(double velocity_mps, double carrier_hz, double speed = kSpeedOfLight)
{
    if (!(carrier_hz > 0.0))
        fail(ErrorKind::Domain, "carrier frequency must be positive");
    return velocity_mps * carrier_hz / speed;
}

// ------------------------------------------------------------------------

enum class PathKind
{
    Clutter,
    Target,
};

inline const char *to_string(PathKind k) { return k == PathKind::Clutter ? "clutter" : "target"; }

struct PathParams
{
    cd gain{1.0, 0.0};
    double delay_s = 0.0;
    double doppler_hz = 0.0;
    Doa doa;
    PathKind kind = PathKind::Target;
};

struct ClutterScatterer
{
    Vec3 position_m = Vec3::Zero();
    cd reflectivity{1.0, 0.0};
    Vec3 velocity_mps = Vec3::Zero();
    std::optional<double> doppler_hz; // overrides the velocity-derived value
    bool follows_ue = false;          // line-of-sight path: the scatterer is the UE itself
};

struct TargetRecord
{
    Vec3 position_m = Vec3::Zero();
    cd reflectivity{1.0, 0.0};
    double bistatic_radial_velocity_mps = 0.0;
};

struct NoiseModel
{
    std::optional<double> snr_db;
};

/// A sensing scene. Either geometric (positions) or an explicit path list; when `paths`
/// is non-empty it takes precedence and the geometric fields only serve localization.
struct Scene
{
    std::string name;
    ArrayGeometry array;
    Vec3 bs_position_m{0.0, 1000.0, 0.0};
    Vec3 ue_position_m{100.0, 0.0, 0.0};
    std::vector<ClutterScatterer> clutter;
    std::vector<TargetRecord> targets;
    std::vector<PathParams> paths;
    NoiseModel noise;

    bool is_path_list() const { return !paths.empty(); }
};

/// Direction of `point` seen from the array at `bs`.
inline Doa doa_from_position(const ArrayGeometry &g, const Vec3 &bs, const Vec3 &point)
{
    const Vec3 d = point - bs;
    const double r = d.norm();
    if (r < 1e-9)
        fail(ErrorKind::Geometry, "point coincides with the base station");
    const Vec3 u = d / r;
    const double zen = std::acos(std::clamp(u.z(), -1.0, 1.0));
    const double s = std::sin(zen);
    double az = kPi / 2.0;
    if (s > 1e-12)
        az = std::acos(std::clamp(u.dot(g.x_axis()) / s, -1.0, 1.0));
    return {rad2deg(az), rad2deg(zen)};
}

inline void validate_scene(const Scene &s)
{
    s.array.validate();
    if (!s.is_path_list() && (s.bs_position_m - s.ue_position_m).norm() < 1e-9)
        fail(ErrorKind::Geometry, "UE and BS positions coincide");
    for (const auto &p : s.paths)
    {
        check_doa(p.doa);
        if (p.delay_s < 0.0)
            fail(ErrorKind::Domain, "negative path delay ", p.delay_s);
    }
}

namespace detail
{
inline PathParams bistatic_path(const Scene &s, const Vec3 &ue, const Vec3 &x, cd reflectivity, PathKind kind)
{
    const double d1 = (x - ue).norm();
    const double d2 = (x - s.bs_position_m).norm();
    if (d2 < 1e-9)
        fail(ErrorKind::Geometry, "scatterer coincides with the base station");
    PathParams p;
    p.kind = kind;
    p.doa = doa_from_position(s.array, s.bs_position_m, x);
    p.delay_s = (d1 + d2) / kSpeedOfLight;
    p.gain = reflectivity / (d1 < 1e-9 ? d2 : d1 * d2);
    return p;
}
} // namespace detail

/// Path parameters for all clutter and targets, clutter first, for a UE at `ue`.
inline std::vector<PathParams> derive_paths_at(const Scene &s, const Vec3 &ue)
{
    validate_scene(s);
    if (s.is_path_list())
        return s.paths;
    if ((s.bs_position_m - ue).norm() < 1e-9)
        fail(ErrorKind::Geometry, "UE and BS positions coincide");

    std::vector<PathParams> out;
    const double lambda = s.array.wavelength_m();
    for (const auto &c : s.clutter)
    {
        const Vec3 x = c.follows_ue ? ue : c.position_m;
        auto p = detail::bistatic_path(s, ue, x, c.reflectivity, PathKind::Clutter);
        if (c.doppler_hz)
            p.doppler_hz = *c.doppler_hz;
        else
        {
            // Rate of change of the UE -> scatterer -> BS path length.
            double rate = 0.0;
            if (!c.follows_ue && (x - ue).norm() > 1e-9)
                rate += c.velocity_mps.dot((x - ue).normalized());
            rate += c.velocity_mps.dot((x - s.bs_position_m).normalized());
            p.doppler_hz = -rate / lambda;
        }
        out.push_back(p);
    }
    for (const auto &t : s.targets)
    {
        auto p = detail::bistatic_path(s, ue, t.position_m, t.reflectivity, PathKind::Target);
        p.doppler_hz = doppler_from_velocity(t.bistatic_radial_velocity_mps, s.array.carrier_hz);
        out.push_back(p);
    }
    return out;
}

inline std::vector<PathParams> derive_paths(const Scene &s) { return derive_paths_at(s, s.ue_position_m); }

inline std::vector<PathParams> filter_paths(const std::vector<PathParams> &paths, PathKind kind)
{
    std::vector<PathParams> out;
    std::copy_if(paths.begin(), paths.end(), std::back_inserter(out),
                 [kind](const PathParams &p) { return p.kind == kind; });
    return out;
}

} // namespace clamsense
