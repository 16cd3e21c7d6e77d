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

#include "clamsense/clam.hpp"

#include <filesystem>

using namespace clamsense;
using Catch::Matchers::WithinAbs;

namespace
{
const std::string kScenes = CLAMSENSE_SCENE_DIR;

GridSpec ten_by_ten()
{
    GridSpec g;
    g.origin = {50.0, -50.0, -5.0};
    g.cell_size_m = 10.0;
    g.nx = 10;
    g.ny = 10;
    g.nz = 1;
    return g;
}
} // namespace

TEST_CASE("grid cells are half-open", "[clam]")
{
    const auto g = ten_by_ten();
    CHECK(g.cells() == 100);
    CHECK(g.index_of({50.0, -50.0, 0.0}) == 0);
    CHECK(g.index_of({59.999, -50.0, 0.0}) == 0);
    CHECK(g.index_of({60.0, -50.0, 0.0}) == 1);
    CHECK(g.index_of({55.0, -40.0, 0.0}) == 10);
    CHECK_FALSE(g.index_of({150.0, 0.0, 0.0}).has_value());
    CHECK_FALSE(g.index_of({100.0, 0.0, 5.0}).has_value());
    CHECK_FALSE(g.index_of({49.999, 0.0, 0.0}).has_value());
    for (int c = 0; c < g.cells(); ++c)
        CHECK(g.index_of(g.center(c)) == c);
    GridSpec bad;
    bad.cell_size_m = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("geometric map stores the exact clutter directions", "[clam]")
{
    const auto scene = load_scene(kScenes + "/table3_geometric.json");
    GridSpec g;
    g.origin = {95.0, -5.0, -5.0}; // single cell centred on the UE
    const auto map = build_geometric(scene, g, 3);
    const auto &doas = clam_lookup(map, scene.ue_position_m);
    REQUIRE(doas.size() == 3);
    // Strongest first: (-400, 0) scatterer, line of sight, (1000, 200) scatterer.
    const auto clutter = filter_paths(derive_paths(scene), PathKind::Clutter);
    CHECK(doas[0].azimuth_deg == clutter[2].doa.azimuth_deg);
    CHECK(doas[1].azimuth_deg == clutter[0].doa.azimuth_deg);
    CHECK(doas[2].azimuth_deg == clutter[1].doa.azimuth_deg);
    CHECK_THAT(doas[0].azimuth_deg, WithinAbs(111.8, 0.05));

    // Ranking by bare reflectivity keeps the scatterers ahead of the unit line of sight.
    const auto by_refl = build_geometric(scene, g, 2, true);
    const auto &two = clam_lookup(by_refl, scene.ue_position_m);
    REQUIRE(two.size() == 2);
    CHECK(two[0].azimuth_deg == clutter[1].doa.azimuth_deg);
    CHECK(two[1].azimuth_deg == clutter[2].doa.azimuth_deg);
}

TEST_CASE("lookup outside the grid is an error", "[clam]")
{
    const auto scene = load_scene(kScenes + "/table3_geometric.json");
    const auto map = build_geometric(scene, ten_by_ten(), 3);
    try
    {
        clam_lookup(map, {0.0, 0.0, 0.0});
        FAIL("lookup outside the grid succeeded");
    }
    catch (const Error &e)
    {
        CHECK(e.kind() == ErrorKind::Lookup);
    }
}

TEST_CASE("map file round-trips exactly", "[clam]")
{
    const auto scene = load_scene(kScenes + "/table3_geometric.json");
    const auto map = build_geometric(scene, ten_by_ten(), 3);
    const auto path = (std::filesystem::temp_directory_path() / "clamsense_clam_test.json").string();
    save_clam(map, path);
    const auto back = load_clam(path);
    std::filesystem::remove(path);
    CHECK(back.method == "geometric");
    CHECK(back.scene_hash == scene_hash(scene));
    REQUIRE(back.cells.size() == map.cells.size());
    for (std::size_t c = 0; c < map.cells.size(); ++c)
    {
        REQUIRE(back.cells[c].doas.size() == map.cells[c].doas.size());
        for (std::size_t k = 0; k < map.cells[c].doas.size(); ++k)
        {
            CHECK(back.cells[c].doas[k].azimuth_deg == map.cells[c].doas[k].azimuth_deg);
            CHECK(back.cells[c].doas[k].zenith_deg == map.cells[c].doas[k].zenith_deg);
        }
    }
    CHECK_THROWS_AS(clam_from_json(json{{"format", "other"}}), Error);
}

TEST_CASE("estimated map agrees with the geometric one", "[clam]")
{
    const auto scene = load_scene(kScenes + "/table3_geometric.json");
    const auto grid = ten_by_ten();
    const auto truth = build_geometric(scene, grid, 3);
    EstimatedClamConfig cfg;
    cfg.snr_db = 0.0;
    cfg.seed = 17;
    cfg.threads = 1;
    const auto est = build_estimated(scene, grid, cfg);
    int good = 0;
    for (int c = 0; c < grid.cells(); ++c)
    {
        const auto &t = truth.cells[static_cast<std::size_t>(c)].doas;
        const auto &e = est.cells[static_cast<std::size_t>(c)].doas;
        bool ok = !t.empty() && e.size() == t.size();
        for (const auto &d : t)
        {
            double best = 1e9;
            for (const auto &x : e)
                best = std::min(best, std::hypot(d.azimuth_deg - x.azimuth_deg, d.zenith_deg - x.zenith_deg));
            ok = ok && best <= 1.0;
        }
        good += ok;
    }
    INFO("cells within 1 degree: " << good);
    CHECK(good >= 95);
}
