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
#include "clamsense/pipeline.hpp"

#include <random>

using namespace clamsense;
using Catch::Matchers::WithinAbs;

namespace
{
const std::string kScenes = CLAMSENSE_SCENE_DIR;

struct Prepared
{
    std::vector<PathParams> paths;
    std::vector<Doa> clutter;
    ReceivedTensor data;
};

Prepared prepare(const std::string &scene_file, std::optional<double> snr = std::nullopt)
{
    const auto scene = load_scene(kScenes + "/" + scene_file);
    Prepared p;
    p.paths = derive_paths(scene);
    for (const auto &c : filter_paths(p.paths, PathKind::Clutter))
        p.clutter.push_back(c.doa);
    p.data = synthesize(p.paths, OfdmParams::desk(), scene.array, snr, 3);
    return p;
}

// Nearest estimate to a truth, by angle.
const EstimateRecord &nearest(const std::vector<EstimateRecord> &est, const Doa &truth)
{
    REQUIRE_FALSE(est.empty());
    return *std::min_element(est.begin(), est.end(), [&](const auto &a, const auto &b) {
        return std::hypot(a.doa.azimuth_deg - truth.azimuth_deg, a.doa.zenith_deg - truth.zenith_deg) <
               std::hypot(b.doa.azimuth_deg - truth.azimuth_deg, b.doa.zenith_deg - truth.zenith_deg);
    });
}

EstimateRecord record(double az, double zen, double tau_bins, double fd_bins, double power)
{
    EstimateRecord r;
    r.stage = Stage::Step2;
    r.doa = {az, zen};
    r.delay_s = tau_bins;
    r.doppler_hz = fd_bins;
    r.power = power;
    return r;
}
} // namespace

TEST_CASE("noiseless joint estimation recovers every target parameter", "[joint]")
{
    const auto p = prepare("sparse.json");
    PipelineConfig cfg;
    const auto delay_bin = 1.0 / (p.data.ofdm.delta_f_hz * p.data.ofdm.n_sc * cfg.joint.delay_oversample);
    const auto doppler_bin = 1.0 / (p.data.ofdm.t_s() * p.data.ofdm.n_sym * cfg.joint.doppler_oversample);
    for (auto m : {Method::JointMusic, Method::JointFft})
    {
        const auto out = run_method(m, p.data, p.clutter, cfg);
        INFO(to_string(m));
        REQUIRE(out.estimates.size() == 2);
        const double angle_tol = m == Method::JointMusic ? 0.5 : 2.0;
        for (const auto &t : filter_paths(p.paths, PathKind::Target))
        {
            const auto &e = nearest(out.estimates, t.doa);
            CHECK_THAT(e.doa.azimuth_deg, WithinAbs(t.doa.azimuth_deg, angle_tol));
            CHECK_THAT(e.doa.zenith_deg, WithinAbs(t.doa.zenith_deg, angle_tol));
            CHECK_THAT(e.delay_s, WithinAbs(t.delay_s, delay_bin));
            CHECK_THAT(e.doppler_hz, WithinAbs(t.doppler_hz, doppler_bin));
        }
        // Final records point back at Step2 records.
        for (const auto &e : out.estimates)
            for (int idx : e.members)
                CHECK(out.detail.records.at(static_cast<std::size_t>(idx)).stage == Stage::Step2);
    }
}

TEST_CASE("every method runs on a noiseless scene", "[joint]")
{
    const auto p = prepare("sparse.json");
    PipelineConfig cfg;
    for (auto m : kAllMethods)
    {
        INFO(to_string(m));
        const auto out = run_method(m, p.data, p.clutter, cfg);
        CHECK_FALSE(out.estimates.empty());
        CHECK(method_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(method_from_string("beamscan"), Error);

    // With clutter knowledge both targets are resolved; without it the S strongest of the
    // L + S peaks need not be the targets.
    const auto out = run_method(Method::SpatialMusic, p.data, p.clutter, cfg);
    for (const auto &t : filter_paths(p.paths, PathKind::Target))
        CHECK_THAT(nearest(out.estimates, t.doa).doa.azimuth_deg, WithinAbs(t.doa.azimuth_deg, 0.5));
}

TEST_CASE("clustering drops mapped clutter and merges neighbours", "[joint]")
{
    ClusterConfig cfg;
    const std::vector<Doa> clutter{{84.3, 65.0}};
    const std::vector<EstimateRecord> recs{
        record(84.8, 65.2, 10, 5, 9.0), // on the clutter direction
        record(52.0, 126.0, 20, 40, 1.0),
        record(53.0, 126.0, 21, 40, 3.0), // links with the previous one
        record(66.8, 92.0, 14, 4, 2.0),
        record(120.0, 90.0, 60, 2, 0.5),
    };
    const auto out = cluster_match(recs, 2, clutter, cfg);
    REQUIRE(out.size() == 2);
    CHECK(out[0].members == std::vector<int>{1, 2});
    CHECK_THAT(out[0].doa.azimuth_deg, WithinAbs(52.75, 1e-12));
    CHECK_THAT(out[0].delay_s, WithinAbs(20.75, 1e-12));
    CHECK(out[0].power == 3.0);
    CHECK(out[1].members == std::vector<int>{3});
    CHECK(out[0].cls == 0);
    CHECK(out[1].cls == 1);

    // A Doppler list keeps records that share the clutter angle but move differently.
    cfg.clutter_dopplers_hz = {100.0};
    cfg.doppler_bin_hz = 10.0;
    const std::vector<EstimateRecord> moving{record(84.3, 65.0, 10, 500.0, 1.0)};
    CHECK(cluster_match(moving, 1, clutter, cfg).size() == 1);
    const std::vector<EstimateRecord> parked{record(84.3, 65.0, 10, 105.0, 1.0)};
    CHECK(cluster_match(parked, 1, clutter, cfg).empty());
    CHECK_THROWS_AS(cluster_match(recs, 0, clutter, cfg), Error);
}

TEST_CASE("localization inverts the forward bistatic geometry", "[joint]")
{
    ArrayGeometry array;
    const Vec3 bs(0.0, 1000.0, 0.0), ue(100.0, 0.0, 0.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ux(-600.0, 600.0), uy(-600.0, 950.0), uz(-80.0, 80.0);
    double worst = 0.0, worst_flat = 0.0;
    for (int k = 0; k < 1000; ++k)
    {
        for (bool flat : {false, true})
        {
            const Vec3 x(ux(rng), uy(rng), flat ? 0.0 : uz(rng));
            const Vec3 d = (x - bs).normalized();
            const double az = rad2deg(std::atan2(d.dot(array.broadside()), d.dot(array.x_axis())));
            const double zen = rad2deg(std::acos(d.z()));
            const double tau = ((x - bs).norm() + (x - ue).norm()) / kSpeedOfLight;
            const auto loc = flat ? localize(tau, az, ue, bs, array) : localize(tau, Doa{az, zen}, ue, bs, array);
            (flat ? worst_flat : worst) = std::max(flat ? worst_flat : worst, (loc.position_m - x).norm());
            CHECK_THAT(loc.range_m, WithinAbs((x - bs).norm(), 1e-6));
        }
    }
    CHECK(worst <= 1e-6);
    CHECK(worst_flat <= 1e-6);
    CHECK_THROWS_AS(localize(0.5 * (bs - ue).norm() / kSpeedOfLight, 90.0, ue, bs, array), Error);
}
