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
#include "io.hpp"

namespace clamsense
{

/// Regular grid of candidate UE positions. Cell (ix, iy, iz) covers
/// [origin + i * size, origin + (i + 1) * size) on each axis.
struct GridSpec
{
    Vec3 origin = Vec3::Zero();
    double cell_size_m = 10.0;
    int nx = 1, ny = 1, nz = 1;

    int cells() const { return nx * ny * nz; }

    void validate() const
    {
        if (!(cell_size_m > 0.0) || nx < 1 || ny < 1 || nz < 1)
            fail(ErrorKind::Precondition, "CLAM grid needs a positive cell size and dimensions");
    }

    Vec3 center(int index) const
    {
        const int ix = index % nx, iy = (index / nx) % ny, iz = index / (nx * ny);
        return origin + cell_size_m * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
    }

    std::optional<int> index_of(const Vec3 &p) const
    {
        const Vec3 rel = (p - origin) / cell_size_m;
        const int dims[3] = {nx, ny, nz};
        int idx[3];
        for (int a = 0; a < 3; ++a)
        {
            const double f = std::floor(rel(a));
            if (!(f >= 0.0 && f < dims[a]))
                return std::nullopt;
            idx[a] = static_cast<int>(f);
        }
        return idx[0] + nx * (idx[1] + ny * idx[2]);
    }
};

struct ClamCell
{
    std::vector<Doa> doas; // strongest clutter first
    bool empty = false;
};

struct ClamMap
{
    GridSpec grid;
    std::vector<ClamCell> cells;
    std::string method;
    int clutter_count = 0;
    std::string scene_hash;
    std::string created;
    std::vector<std::string> warnings;
};

/// Clutter DoAs stored for the cell containing `position`; empty cells yield an empty list.
inline const std::vector<Doa> &clam_lookup(const ClamMap &map, const Vec3 &position)
{
    const auto idx = map.grid.index_of(position);
    if (!idx)
        fail(ErrorKind::Lookup, "position (", position.x(), ", ", position.y(), ", ", position.z(),
             ") outside the CLAM grid");
    return map.cells[static_cast<std::size_t>(*idx)].doas;
}

/// Exact clutter DoAs from scene geometry, strongest `clutter_count` per cell. Ranking uses
/// the path gain, or the bare reflectivity when `reflectivity_only` is set.
inline ClamMap build_geometric(const Scene &scene, const GridSpec &grid, int clutter_count,
                               bool reflectivity_only = false)
{
    grid.validate();
    validate_scene(scene);
    if (clutter_count < 0)
        fail(ErrorKind::Domain, "clutter count must be non-negative");

    ClamMap map;
    map.grid = grid;
    map.method = "geometric";
    map.clutter_count = clutter_count;
    map.scene_hash = scene_hash(scene);
    map.created = utc_timestamp();
    map.cells.resize(static_cast<std::size_t>(grid.cells()));
    for (int c = 0; c < grid.cells(); ++c)
    {
        auto &cell = map.cells[static_cast<std::size_t>(c)];
        std::vector<PathParams> clutter;
        try
        {
            clutter = filter_paths(derive_paths_at(scene, grid.center(c)), PathKind::Clutter);
        }
        catch (const Error &e)
        {
            if (e.kind() != ErrorKind::Geometry)
                throw;
            cell.empty = true;
            map.warnings.push_back("cell " + std::to_string(c) + ": " + e.what());
            continue;
        }
        std::vector<double> strength(clutter.size());
        for (std::size_t k = 0; k < clutter.size(); ++k)
            strength[k] = reflectivity_only && !scene.is_path_list() ? std::norm(scene.clutter[k].reflectivity)
                                                                     : std::norm(clutter[k].gain);
        std::vector<std::size_t> order(clutter.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return strength[a] > strength[b]; });
        for (std::size_t k = 0; k < order.size() && static_cast<int>(k) < clutter_count; ++k)
            cell.doas.push_back(clutter[order[k]].doa);
        cell.empty = cell.doas.empty();
    }
    return map;
}

struct EstimatedClamConfig
{
    int clutter_count = 3;
    OfdmParams ofdm{32, 16, 30e3, 288.0 / 30.72e6};
    std::optional<double> snr_db;
    std::uint64_t seed = 1;
    AngleGrid grid{0.5};
    unsigned threads = 0;
};

/// Clutter DoAs estimated per cell with MUSIC on synthesized clutter-only data. Cell c uses
/// noise seed `seed + c`. Cells whose spectrum lacks enough local maxima are flagged empty.
inline ClamMap build_estimated(const Scene &scene, const GridSpec &grid, const EstimatedClamConfig &cfg)
{
    grid.validate();
    validate_scene(scene);
    if (cfg.clutter_count < 1)
        fail(ErrorKind::Domain, "estimated CLAM needs at least one clutter source");

    ClamMap map;
    map.grid = grid;
    map.method = "estimated";
    map.clutter_count = cfg.clutter_count;
    map.scene_hash = scene_hash(scene);
    map.created = utc_timestamp();
    map.cells.resize(static_cast<std::size_t>(grid.cells()));
    std::vector<std::string> notes(static_cast<std::size_t>(grid.cells()));
    parallel_for(
        static_cast<std::size_t>(grid.cells()),
        [&](std::size_t c) {
            auto &cell = map.cells[c];
            std::vector<PathParams> clutter;
            try
            {
                clutter = filter_paths(derive_paths_at(scene, grid.center(static_cast<int>(c))), PathKind::Clutter);
            }
            catch (const Error &e)
            {
                if (e.kind() != ErrorKind::Geometry)
                    throw;
                notes[c] = e.what();
            }
            if (clutter.empty())
            {
                cell.empty = true;
                return;
            }
            const auto data = synthesize(clutter, cfg.ofdm, scene.array, cfg.snr_db, cfg.seed + c);
            const int sources = std::min<int>(cfg.clutter_count, static_cast<int>(clutter.size()));
            const auto peaks = music_doas(covariance(data.data), sources, sources, scene.array, cfg.grid);
            if (peaks.padded)
            {
                cell.empty = true;
                notes[c] = "too few spectral peaks";
                return;
            }
            cell.doas = peaks.doas();
        },
        cfg.threads);
    for (std::size_t c = 0; c < notes.size(); ++c)
        if (!notes[c].empty())
            map.warnings.push_back("cell " + std::to_string(c) + ": " + notes[c]);
    return map;
}

inline json clam_to_json(const ClamMap &map)
{
    json cells = json::array();
    for (const auto &c : map.cells)
    {
        json doas = json::array();
        for (const auto &d : c.doas)
            doas.push_back({d.azimuth_deg, d.zenith_deg});
        cells.push_back({{"doas", doas}, {"empty", c.empty}});
    }
    return {{"format", "clamsense-clam"},
            {"version", 1},
            {"method", map.method},
            {"clutter_count", map.clutter_count},
            {"scene_hash", map.scene_hash},
            {"created", map.created},
            {"warnings", map.warnings},
            {"grid",
             {{"origin_m", detail::vec3_to_json(map.grid.origin)},
              {"cell_size_m", map.grid.cell_size_m},
              {"dims", {map.grid.nx, map.grid.ny, map.grid.nz}}}},
            {"cells", cells}};
}

inline ClamMap clam_from_json(const json &j)
{
    if (j.value("format", std::string()) != "clamsense-clam")
        fail(ErrorKind::Io, "not a CLAM file");
    if (j.value("version", 0) != 1)
        fail(ErrorKind::Io, "unsupported CLAM version ", j.value("version", 0));
    ClamMap map;
    map.method = j.value("method", std::string());
    map.clutter_count = j.value("clutter_count", 0);
    map.scene_hash = j.value("scene_hash", std::string());
    map.created = j.value("created", std::string());
    map.warnings = j.value("warnings", std::vector<std::string>{});
    const auto &g = j.at("grid");
    map.grid.origin = detail::vec3_from_json(g.at("origin_m"));
    map.grid.cell_size_m = g.at("cell_size_m").get<double>();
    const auto dims = g.at("dims").get<std::vector<int>>();
    if (dims.size() != 3)
        fail(ErrorKind::Io, "CLAM grid dims must have three entries");
    map.grid.nx = dims[0];
    map.grid.ny = dims[1];
    map.grid.nz = dims[2];
    map.grid.validate();
    for (const auto &c : j.at("cells"))
    {
        ClamCell cell;
        cell.empty = c.value("empty", false);
        for (const auto &d : c.at("doas"))
            cell.doas.push_back({d.at(0).get<double>(), d.at(1).get<double>()});
        map.cells.push_back(cell);
    }
    if (static_cast<int>(map.cells.size()) != map.grid.cells())
        fail(ErrorKind::Io, "CLAM file has ", map.cells.size(), " cells, grid expects ", map.grid.cells());
    return map;
}

inline void save_clam(const ClamMap &map, const std::string &path)
{
    auto os = open_output(path);
    os << clam_to_json(map).dump(1) << "\n";
}

inline ClamMap load_clam(const std::string &path)
{
    try
    {
        return clam_from_json(read_json(path));
    }
    catch (const json::exception &e)
    {
        fail(ErrorKind::Io, path, ": ", e.what());
    }
}

} // namespace clamsense
