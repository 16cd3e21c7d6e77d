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

#include "synth.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>

namespace clamsense
{

using json = nlohmann::json;

namespace detail
{
inline cd complex_from_json(const json &j)
{
    if (j.is_number())
        return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2)
        return {j[0].get<double>(), j[1].get<double>()};
    if (j.is_object() && j.contains("amplitude"))
        return std::polar(j.at("amplitude").get<double>(), deg2rad(j.value("phase_deg", 0.0)));
    fail(ErrorKind::Io, "expected a number, [re, im] or {amplitude, phase_deg}, got ", j.dump());
}

inline json complex_to_json(cd c) { return json::array({c.real(), c.imag()}); }

inline Vec3 vec3_from_json(const json &j)
{
    if (!j.is_array() || j.size() < 2 || j.size() > 3)
        fail(ErrorKind::Io, "expected a 2- or 3-element position, got ", j.dump());
    return {j[0].get<double>(), j[1].get<double>(), j.size() == 3 ? j[2].get<double>() : 0.0};
}

inline json vec3_to_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }
} // namespace detail

inline ArrayGeometry array_from_json(const json &j)
{
    ArrayGeometry g;
    g.mx = j.value("mx", g.mx);
    g.mz = j.value("mz", g.mz);
    g.spacing_over_lambda = j.value("spacing_over_lambda", g.spacing_over_lambda);
    g.carrier_hz = j.value("carrier_hz", g.carrier_hz);
    g.boresight_azimuth_deg = j.value("boresight_azimuth_deg", g.boresight_azimuth_deg);
    return g;
}

inline json array_to_json(const ArrayGeometry &g)
{
    return {{"mx", g.mx},
            {"mz", g.mz},
            {"spacing_over_lambda", g.spacing_over_lambda},
            {"carrier_hz", g.carrier_hz},
            {"boresight_azimuth_deg", g.boresight_azimuth_deg}};
}

/// Accepts a profile name ("desk", "full") or an object; object fields override the profile.
inline OfdmParams ofdm_from_json(const json &j)
{
    if (j.is_string())
    {
        const auto name = j.get<std::string>();
        if (name == "desk")
            return OfdmParams::desk();
        if (name == "full")
            return OfdmParams::full();
        fail(ErrorKind::Io, "unknown OFDM profile '", name, "'");
    }
    OfdmParams o = ofdm_from_json(j.value("profile", std::string("desk")));
    o.n_sc = j.value("n_sc", o.n_sc);
    o.n_sym = j.value("n_sym", o.n_sym);
    o.delta_f_hz = j.value("delta_f_hz", o.delta_f_hz);
    if (j.contains("cp_samples"))
        o.t_cp_s = j.at("cp_samples").get<double>() / (o.n_sc * o.delta_f_hz);
    o.t_cp_s = j.value("t_cp_s", o.t_cp_s);
    return o;
}

inline json ofdm_to_json(const OfdmParams &o)
{
    return {{"n_sc", o.n_sc}, {"n_sym", o.n_sym}, {"delta_f_hz", o.delta_f_hz}, {"t_cp_s", o.t_cp_s}};
}

inline PathKind path_kind_from_string(const std::string &s)
{
    if (s == "clutter")
        return PathKind::Clutter;
    if (s == "target")
        return PathKind::Target;
    fail(ErrorKind::Io, "unknown path kind '", s, "'");
}

inline Scene scene_from_json(const json &j)
{
    Scene s;
    s.name = j.value("name", std::string());
    if (j.contains("array"))
        s.array = array_from_json(j.at("array"));
    if (j.contains("bs_position_m"))
        s.bs_position_m = detail::vec3_from_json(j.at("bs_position_m"));
    if (j.contains("ue_position_m"))
        s.ue_position_m = detail::vec3_from_json(j.at("ue_position_m"));
    for (const auto &c : j.value("clutter", json::array()))
    {
        ClutterScatterer x;
        x.follows_ue = c.value("follows_ue", false);
        if (!x.follows_ue)
            x.position_m = detail::vec3_from_json(c.at("position_m"));
        if (c.contains("reflectivity"))
            x.reflectivity = detail::complex_from_json(c.at("reflectivity"));
        if (c.contains("velocity_mps"))
            x.velocity_mps = detail::vec3_from_json(c.at("velocity_mps"));
        if (c.contains("doppler_hz"))
            x.doppler_hz = c.at("doppler_hz").get<double>();
        s.clutter.push_back(x);
    }
    for (const auto &t : j.value("targets", json::array()))
    {
        TargetRecord x;
        x.position_m = detail::vec3_from_json(t.at("position_m"));
        if (t.contains("reflectivity"))
            x.reflectivity = detail::complex_from_json(t.at("reflectivity"));
        x.bistatic_radial_velocity_mps = t.value("bistatic_radial_velocity_mps", 0.0);
        s.targets.push_back(x);
    }
    for (const auto &p : j.value("paths", json::array()))
    {
        PathParams x;
        x.kind = path_kind_from_string(p.at("kind").get<std::string>());
        x.gain = p.contains("gain") ? detail::complex_from_json(p.at("gain")) : cd(1.0);
        x.delay_s = p.contains("delay_us") ? p.at("delay_us").get<double>() * 1e-6 : p.value("delay_s", 0.0);
        x.doppler_hz = p.value("doppler_hz", 0.0);
        x.doa = {p.at("azimuth_deg").get<double>(), p.at("zenith_deg").get<double>()};
        s.paths.push_back(x);
    }
    if (j.contains("noise") && j.at("noise").contains("snr_db") && !j.at("noise").at("snr_db").is_null())
        s.noise.snr_db = j.at("noise").at("snr_db").get<double>();
    validate_scene(s);
    return s;
}

inline json scene_to_json(const Scene &s)
{
    json j;
    j["format"] = "clamsense-scene";
    j["version"] = 1;
    j["name"] = s.name;
    j["array"] = array_to_json(s.array);
    j["bs_position_m"] = detail::vec3_to_json(s.bs_position_m);
    j["ue_position_m"] = detail::vec3_to_json(s.ue_position_m);
    j["clutter"] = json::array();
    for (const auto &c : s.clutter)
    {
        json x = {{"reflectivity", detail::complex_to_json(c.reflectivity)},
                  {"velocity_mps", detail::vec3_to_json(c.velocity_mps)}};
        if (c.follows_ue)
            x["follows_ue"] = true;
        else
            x["position_m"] = detail::vec3_to_json(c.position_m);
        if (c.doppler_hz)
            x["doppler_hz"] = *c.doppler_hz;
        j["clutter"].push_back(x);
    }
    j["targets"] = json::array();
    for (const auto &t : s.targets)
        j["targets"].push_back({{"position_m", detail::vec3_to_json(t.position_m)},
                                {"reflectivity", detail::complex_to_json(t.reflectivity)},
                                {"bistatic_radial_velocity_mps", t.bistatic_radial_velocity_mps}});
    j["paths"] = json::array();
    for (const auto &p : s.paths)
        j["paths"].push_back({{"kind", to_string(p.kind)},
                              {"gain", detail::complex_to_json(p.gain)},
                              {"delay_us", p.delay_s * 1e6},
                              {"doppler_hz", p.doppler_hz},
                              {"azimuth_deg", p.doa.azimuth_deg},
                              {"zenith_deg", p.doa.zenith_deg}});
    j["noise"] = {{"snr_db", s.noise.snr_db ? json(*s.noise.snr_db) : json(nullptr)}};
    return j;
}

inline json read_json(const std::string &path)
{
    std::ifstream is(path);
    if (!is)
        fail(ErrorKind::Io, "cannot open ", path);
    try
    {
        return json::parse(is);
    }
    catch (const json::exception &e)
    {
        fail(ErrorKind::Io, path, ": ", e.what());
    }
}

inline Scene load_scene(const std::string &path)
{
    try
    {
        return scene_from_json(read_json(path));
    }
    catch (const json::exception &e)
    {
        fail(ErrorKind::Io, path, ": ", e.what());
    }
}

/// 64-bit FNV-1a of a string; used to tie derived files to their scene.
inline std::uint64_t fnv1a(const std::string &s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s)
        h = (h ^ c) * 1099511628211ull;
    return h;
}

inline std::string scene_hash(const Scene &s)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(scene_to_json(s).dump());
    return os.str();
}

inline std::string utc_timestamp()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Comment header for text outputs. The timestamp line is the only non-deterministic line.
inline void write_header(std::ostream &os, const json &config)
{
    os << "# clamsense " << kVersion << "\n";
    os << "# config " << config.dump() << "\n";
    os << "# generated " << utc_timestamp() << "\n";
}

/// Fixed-precision number formatting for reproducible text output.
inline std::string fmt(double v, int digits = 6)
{
    if (std::isnan(v))
        return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::ofstream open_output(const std::string &path)
{
    std::ofstream os(path);
    if (!os)
        fail(ErrorKind::Io, "cannot open ", path, " for writing");
    return os;
}

} // namespace clamsense
