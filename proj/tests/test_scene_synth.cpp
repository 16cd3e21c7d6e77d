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

#include "catch_amalgamated.hpp"

#include "clamsense/io.hpp"

#include <filesystem>

using namespace clamsense;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{
const std::string kScenes = CLAMSENSE_SCENE_DIR;

// Independent steering oracle: element (ix, iz) carries the phase of its projected position.
cd steering_oracle(int ix, int iz, double spacing, double az_deg, double zen_deg)
{
    const double az = az_deg * std::numbers::pi / 180.0, zen = zen_deg * std::numbers::pi / 180.0;
    const double phase = 2.0 * std::numbers::pi * spacing * (ix * std::cos(az) * std::sin(zen) + iz * std::cos(zen));
    return {std::cos(phase), std::sin(phase)};
}
} // namespace

TEST_CASE("steering vector matches hand-computed 2x2 values", "[scene]")
{
    ArrayGeometry g;
    g.mx = 2;
    g.mz = 2;
    // u = 0.5 cos 60 = 0.25, v = 0: the x-neighbour is a quarter turn ahead.
    const CVec a = steering_vector(g, {60.0, 90.0});
    REQUIRE(a.size() == 4);
    CHECK(std::abs(a(0) - cd(1.0, 0.0)) < 1e-12);
    CHECK(std::abs(a(1) - cd(1.0, 0.0)) < 1e-12);
    CHECK(std::abs(a(2) - cd(0.0, 1.0)) < 1e-12);
    CHECK(std::abs(a(3) - cd(0.0, 1.0)) < 1e-12);
}

TEST_CASE("steering vector is the Kronecker product of the axis vectors", "[scene]")
{
    ArrayGeometry g;
    g.mx = 5;
    g.mz = 3;
    g.spacing_over_lambda = 0.4;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ang(0.0, 180.0);
    for (int trial = 0; trial < 50; ++trial)
    {
        const double az = ang(rng), zen = ang(rng);
        const CVec a = steering_vector(g, {az, zen});
        CHECK_THAT(a.squaredNorm(), WithinRel(15.0, 1e-12));
        for (int ix = 0; ix < g.mx; ++ix)
            for (int iz = 0; iz < g.mz; ++iz)
                CHECK(std::abs(a(ix * g.mz + iz) - steering_oracle(ix, iz, 0.4, az, zen)) < 1e-10);
    }
}

TEST_CASE("directions outside [0, 180] are rejected", "[scene]")
{
    ArrayGeometry g;
    CHECK_THROWS_AS(steering_vector(g, {-1.0, 90.0}), Error);
    CHECK_THROWS_AS(steering_vector(g, {90.0, 180.5}), Error);
}

TEST_CASE("Doppler from bistatic velocity", "[scene]")
{
    // 40 m/s at 28 GHz with c = 3e8 is 40 * 28e9 / 3e8 = 3733.33 Hz.
    CHECK_THAT(doppler_from_velocity(40.0, 28e9, 3e8), WithinAbs(3733.333333, 1e-5));
    CHECK_THAT(doppler_from_velocity(4.0, 28e9, 3e8), WithinAbs(373.333333, 1e-5));
    // The exact propagation speed shifts it by 0.07 %.
    CHECK_THAT(doppler_from_velocity(40.0, 28e9), WithinAbs(40.0 * 28e9 / 299792458.0, 1e-9));
    CHECK_THROWS_AS(doppler_from_velocity(1.0, 0.0), Error);
}

TEST_CASE("geometric scene reproduces the tabulated path parameters", "[scene]")
{
    const auto scene = load_scene(kScenes + "/table3_geometric.json");
    const auto paths = derive_paths(scene);
    REQUIRE(paths.size() == 5);

    struct Row
    {
        PathKind kind;
        double delay_us, azimuth_deg, doppler_hz;
    };
    // Tabulated rows; azimuths are horizontal-plane (zenith 90).
    const Row rows[] = {{PathKind::Clutter, 3.35, 84.3, 186.7},
                        {PathKind::Clutter, 7.34, 38.7, 466.7},
                        {PathKind::Clutter, 5.25, 111.8, 746.7},
                        {PathKind::Target, 4.50, 52.4, 3733.3},
                        {PathKind::Target, 3.74, 66.8, 373.3}};
    for (std::size_t k = 0; k < 5; ++k)
    {
        INFO("path " << k);
        CHECK(paths[k].kind == rows[k].kind);
        CHECK_THAT(paths[k].delay_s * 1e6, WithinAbs(rows[k].delay_us, 0.02));
        CHECK_THAT(paths[k].doa.azimuth_deg, WithinAbs(rows[k].azimuth_deg, 0.05));
        CHECK_THAT(paths[k].doa.zenith_deg, WithinAbs(90.0, 1e-9));
        // Target Dopplers use the exact speed of light, 0.07 % above the tabulated values.
        CHECK_THAT(paths[k].doppler_hz, WithinRel(rows[k].doppler_hz, 1e-3));
    }
    // Line of sight gain is reflectivity over the UE-BS distance.
    CHECK_THAT(std::abs(paths[0].gain), WithinRel(1.0 / std::hypot(100.0, 1000.0), 1e-12));
}

TEST_CASE("clutter Doppler follows the bistatic path-length rate when not given", "[scene]")
{
    Scene s;
    s.bs_position_m = {0.0, 0.0, 0.0};
    s.ue_position_m = {100.0, 0.0, 0.0};
    ClutterScatterer c;
    c.position_m = {0.0, 50.0, 0.0};
    c.velocity_mps = {0.0, 3.0, 0.0}; // moving straight away from the BS
    s.clutter.push_back(c);
    const auto p = derive_paths(s).at(0);
    // Path-length rate: 3 (BS leg) + 3 * 50 / |(-100, 50)| (UE leg); Doppler = -rate / lambda.
    const double rate = 3.0 + 3.0 * 50.0 / std::hypot(100.0, 50.0);
    CHECK_THAT(p.doppler_hz, WithinRel(-rate / s.array.wavelength_m(), 1e-12));
}

TEST_CASE("degenerate geometry is reported", "[scene]")
{
    Scene s;
    s.ue_position_m = s.bs_position_m;
    CHECK_THROWS_AS(validate_scene(s), Error);
    Scene t;
    ClutterScatterer c;
    c.position_m = t.bs_position_m;
    t.clutter.push_back(c);
    CHECK_THROWS_AS(derive_paths(t), Error);
}

TEST_CASE("synthesized noiseless entry follows the path model", "[synth]")
{
    ArrayGeometry g;
    g.mx = 3;
    g.mz = 2;
    const OfdmParams ofdm{16, 8, 30e3, 288.0 / 30.72e6};
    PathParams p;
    p.gain = std::polar(0.7, 0.3);
    p.delay_s = 2.1e-6;
    p.doppler_hz = 1234.0;
    p.doa = {70.0, 100.0};
    const auto t = synthesize({p}, ofdm, g, std::nullopt, 1);
    for (int m = 0; m < g.elements(); ++m)
        for (int n : {0, 5, 15})
            for (int s : {0, 3, 7})
            {
                const int ix = m / g.mz, iz = m % g.mz;
                const double ph = -2.0 * std::numbers::pi * n * 30e3 * 2.1e-6 +
                                  2.0 * std::numbers::pi * 1234.0 * (s * ofdm.t_s() + ofdm.t_cp_s);
                const cd expect = p.gain * steering_oracle(ix, iz, 0.5, 70.0, 100.0) * std::polar(1.0, ph);
                CHECK(std::abs(t.at(m, n, s) - expect) < 1e-12);
            }
}

TEST_CASE("empirical SNR matches the request", "[synth]")
{
    const auto scene = load_scene(kScenes + "/table3.json");
    auto g = scene.array;
    g.mx = g.mz = 8;
    const auto paths = derive_paths(scene);
    const auto ofdm = OfdmParams::desk();
    for (double snr : {-10.0, 0.0, 10.0})
    {
        const auto clean = synthesize(paths, ofdm, g, std::nullopt, 3);
        const auto noisy = synthesize(paths, ofdm, g, snr, 3);
        const double sig = clean.data.squaredNorm(), noise = (noisy.data - clean.data).squaredNorm();
        CHECK_THAT(10.0 * std::log10(sig / noise), WithinAbs(snr, 0.2));
        CHECK_THAT(noisy.noise_variance, WithinRel(clean.signal_power / std::pow(10.0, snr / 10.0), 1e-12));
    }
}

TEST_CASE("synthesis is deterministic in the seed", "[synth]")
{
    const auto paths = derive_paths(load_scene(kScenes + "/sparse.json"));
    const auto ofdm = OfdmParams{32, 8, 30e3, 288.0 / 30.72e6};
    ArrayGeometry g;
    const auto a = synthesize(paths, ofdm, g, 0.0, 11);
    const auto b = synthesize(paths, ofdm, g, 0.0, 11);
    const auto c = synthesize(paths, ofdm, g, 0.0, 12);
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);
}

TEST_CASE("synthesis preconditions", "[synth]")
{
    ArrayGeometry g;
    const auto ofdm = OfdmParams::desk();
    CHECK_THROWS_AS(synthesize({}, ofdm, g, std::nullopt, 1), Error);
    PathParams late;
    late.delay_s = ofdm.t_cp_s * 1.01;
    late.doa = {90.0, 90.0};
    try
    {
        synthesize({late}, ofdm, g, std::nullopt, 1);
        FAIL("expected a precondition error");
    }
    catch (const Error &e)
    {
        CHECK(e.kind() == ErrorKind::Precondition);
        CHECK_THAT(std::string(e.what()), ContainsSubstring("delay <= T_CP"));
    }
    // Noise only: unit reference power.
    const auto n = synthesize({}, OfdmParams{64, 16, 30e3, 1e-6}, g, 0.0, 5);
    CHECK_THAT(n.data.squaredNorm() / static_cast<double>(n.data.size()), WithinAbs(1.0, 0.05));
}

TEST_CASE("tensor and snapshot views are a bijection", "[synth]")
{
    ArrayGeometry g;
    g.mx = 2;
    g.mz = 3;
    const OfdmParams ofdm{5, 4, 30e3, 1e-6};
    const auto t = synthesize({}, ofdm, g, 0.0, 9);
    const CMat y = snapshot_matrix(t);
    for (int m = 0; m < 6; ++m)
        for (int n = 0; n < 5; ++n)
            for (int s = 0; s < 4; ++s)
                CHECK(y(m, s * 5 + n) == t.at(m, n, s));
    const auto back = tensor_from_snapshots(y, g, ofdm);
    CHECK(back.data == t.data);
    CHECK_THROWS_AS(tensor_from_snapshots(CMat(6, 19), g, ofdm), Error);
}

TEST_CASE("tensor dump round-trips bit-exactly", "[synth]")
{
    ArrayGeometry g;
    g.mx = 2;
    g.mz = 2;
    const OfdmParams ofdm{8, 3, 30e3, 1e-6};
    const auto t = synthesize({}, ofdm, g, 3.0, 21);
    const auto path = (std::filesystem::temp_directory_path() / "clamsense_tensor_test.bin").string();
    write_tensor(path, t);
    const auto back = read_tensor(path, g, ofdm);
    CHECK(back.data == t.data);
    std::filesystem::remove(path);
}

TEST_CASE("scene JSON round-trips", "[io]")
{
    const auto scene = load_scene(kScenes + "/table3_geometric.json");
    const auto again = scene_from_json(scene_to_json(scene));
    CHECK(scene_hash(scene) == scene_hash(again));
    const auto a = derive_paths(scene), b = derive_paths(again);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k)
    {
        CHECK(a[k].delay_s == b[k].delay_s);
        CHECK(a[k].doa.azimuth_deg == b[k].doa.azimuth_deg);
    }
}

TEST_CASE("OFDM profiles", "[io]")
{
    const auto full = ofdm_from_json(json("full"));
    CHECK(full.n_sc == 1024);
    CHECK(full.n_sym == 100);
    CHECK_THAT(full.t_cp_s, WithinRel(9.375e-6, 1e-12));
    CHECK_THAT(full.t_s(), WithinRel(1.0 / 30e3 + 9.375e-6, 1e-12));
    const auto custom = ofdm_from_json(json{{"profile", "desk"}, {"n_sym", 16}, {"cp_samples", 144}});
    CHECK(custom.n_sc == 128);
    CHECK(custom.n_sym == 16);
    CHECK_THAT(custom.t_cp_s, WithinRel(144.0 / (128 * 30e3), 1e-12));
    CHECK_THROWS_AS(ofdm_from_json(json("huge")), Error);
}
