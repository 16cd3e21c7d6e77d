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

// Command-line front end. Kept in a header so tests can drive run() in-process.

#pragma once

#include "clamsense/clamsense.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>

namespace clamsense::cli
{

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

namespace detail
{

inline std::string default_out_dir()
{
    const char *env = std::getenv("CLAMSENSE_OUT");
    return env && *env ? env : ".";
}

inline std::string join_path(const std::string &dir, const std::string &file)
{
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / file).string();
}

inline std::optional<double> parse_snr(const std::string &s)
{
    if (s == "off" || s == "none" || s == "inf")
        return std::nullopt;
    try
    {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size() && std::isfinite(v))
            return v;
    }
    catch (const std::exception &)
    {
    }
    fail(ErrorKind::Domain, "SNR '", s, "' is neither a number nor 'off'");
}

inline Vec3 parse_vec3(const std::vector<double> &v, const char *what)
{
    if (v.size() < 2 || v.size() > 3)
        fail(ErrorKind::Domain, what, " needs two or three coordinates");
    return {v[0], v[1], v.size() == 3 ? v[2] : 0.0};
}

/// Clutter directions for the scene's UE: from a CLAM file when given, else the geometric truth.
inline std::vector<Doa> clutter_doas(const Scene &scene, const std::string &clam_path, json &config)
{
    if (!clam_path.empty())
    {
        const auto map = load_clam(clam_path);
        config["clutter_source"] = "clam:" + clam_path;
        return clam_lookup(map, scene.ue_position_m);
    }
    config["clutter_source"] = "scene";
    std::vector<Doa> out;
    for (const auto &p : filter_paths(derive_paths(scene), PathKind::Clutter))
        out.push_back(p.doa);
    return out;
}

inline std::string csv_num(double v, int digits = 6) { return fmt(v, digits); }

inline void write_records_csv(std::ostream &os, const json &config, const std::string &method,
                              const std::vector<EstimateRecord> &records, const std::vector<PathParams> &truth)
{
    write_header(os, config);
    os << "method,tag,stage,iteration,class,azimuth_deg,zenith_deg,delay_us,doppler_hz,power,flags,members\n";
    for (std::size_t k = 0; k < truth.size(); ++k)
        os << method << ",Truth-" << k << ",Truth,-1," << k << ',' << csv_num(truth[k].doa.azimuth_deg) << ','
           << csv_num(truth[k].doa.zenith_deg) << ',' << csv_num(truth[k].delay_s * 1e6) << ','
           << csv_num(truth[k].doppler_hz, 3) << ',' << csv_num(std::norm(truth[k].gain), 9) << ",0,\n";
    for (const auto &r : records)
    {
        os << method << ',' << r.tag() << ',' << to_string(r.stage) << ',' << r.iteration << ',' << r.cls << ','
           << csv_num(r.doa.azimuth_deg) << ',' << csv_num(r.doa.zenith_deg) << ',' << csv_num(r.delay_s * 1e6)
           << ',' << csv_num(r.doppler_hz, 3) << ',' << csv_num(r.power, 9) << ',' << r.flags << ',';
        for (std::size_t i = 0; i < r.members.size(); ++i)
            os << (i ? ";" : "") << r.members[i];
        os << '\n';
    }
}

inline void write_music_spectrum_csv(std::ostream &os, const json &config, const MusicSpectrum &spec)
{
    write_header(os, config);
    os << "azimuth_deg,zenith_deg,value\n";
    for (Eigen::Index iz = 0; iz < spec.values.cols(); ++iz)
        for (Eigen::Index ia = 0; ia < spec.values.rows(); ++ia)
            os << csv_num(spec.grid.value(static_cast<int>(ia)), 2) << ','
               << csv_num(spec.grid.value(static_cast<int>(iz)), 2) << ',' << std::scientific
               << std::setprecision(9) << spec.values(ia, iz) << std::defaultfloat << '\n';
}

inline void write_fft_spectrum_csv(std::ostream &os, const json &config, const FftDoaResult &res)
{
    write_header(os, config);
    os << "u,v,power\n";
    for (int kv = 0; kv < res.fft_size; ++kv)
        for (int ku = 0; ku < res.fft_size; ++ku)
            os << csv_num(fft_bin_frequency(ku, res.fft_size)) << ',' << csv_num(fft_bin_frequency(kv, res.fft_size))
               << ',' << std::scientific << std::setprecision(9) << res.power(ku, kv) << std::defaultfloat << '\n';
}

/// Spatial spectrum that the chosen method ranks its peaks on (joint methods: the Step 1 view).
inline void write_method_spectrum(std::ostream &os, json config, Method method, const ReceivedTensor &t,
                                  const std::vector<Doa> &clutter, const PipelineConfig &cfg)
{
    const auto &g = t.array;
    const int all = cfg.targets + cfg.clutter;
    config["spectrum"] = to_string(method);
    switch (method)
    {
    case Method::Fft:
        write_fft_spectrum_csv(os, config, fft_doa(CMat(t.valid_snapshots()), g, cfg.fft_size, cfg.targets));
        return;
    case Method::SpatialFft:
    case Method::JointFft: {
        const auto proj = zf_build(g, clutter, cfg.joint.condition_cap);
        write_fft_spectrum_csv(os, config,
                               fft_doa(zf_apply(proj, CMat(t.valid_snapshots())), g, cfg.fft_size, cfg.targets, &proj,
                                       cfg.joint.gain_floor));
        return;
    }
    case Method::SpatialMusic:
    case Method::JointMusic: {
        const auto proj = zf_build(g, clutter, cfg.joint.condition_cap);
        write_music_spectrum_csv(
            os, config, music_spectrum(covariance(zf_apply(proj, CMat(t.valid_snapshots()))), cfg.targets, g, cfg.grid, &proj));
        return;
    }
    case Method::MtiMusic: {
        const auto filtered = mti_apply(t, mti_design(cfg.mti_order, t.ofdm.t_s()));
        write_music_spectrum_csv(os, config, music_spectrum(covariance(filtered.valid_snapshots()), all, g, cfg.grid));
        return;
    }
    case Method::Music:
    case Method::SequentialZfMusic:
    case Method::SmoothingMusic:
        write_music_spectrum_csv(os, config, music_spectrum(covariance(t.valid_snapshots()), all, g, cfg.grid));
        return;
    }
}

struct RunInputs
{
    Scene scene;
    OfdmParams ofdm;
    std::vector<PathParams> paths;
    std::vector<Doa> clutter;
    ReceivedTensor data;
};

inline RunInputs prepare_run(const std::string &scene_path, const std::string &clam_path, const std::string &profile,
                             const std::string &snr, std::uint64_t seed, json &config)
{
    RunInputs in;
    in.scene = load_scene(scene_path);
    in.ofdm = ofdm_from_json(json(profile));
    in.paths = derive_paths(in.scene);
    check_delays_within_cp(in.paths, in.ofdm);
    in.clutter = clutter_doas(in.scene, clam_path, config);
    const auto snr_db = parse_snr(snr);
    config["scene"] = scene_to_json(in.scene);
    config["scene_hash"] = scene_hash(in.scene);
    config["ofdm"] = ofdm_to_json(in.ofdm);
    config["snr_db"] = snr_db ? json(*snr_db) : json(nullptr);
    config["seed"] = seed;
    json clutter = json::array();
    for (const auto &d : in.clutter)
        clutter.push_back({d.azimuth_deg, d.zenith_deg});
    config["clutter_doas"] = clutter;
    in.data = synthesize(in.paths, in.ofdm, in.scene.array, snr_db, seed);
    return in;
}

/// Minimal reader for the CSV files this tool writes: '#' lines skipped, first row is the header.
struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string &name) const
    {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            fail(ErrorKind::Io, "CSV lacks column '", name, "'");
        return static_cast<int>(it - header.begin());
    }
};

inline CsvTable read_csv(const std::string &path)
{
    std::ifstream is(path);
    if (!is)
        fail(ErrorKind::Io, "cannot open ", path);
    CsvTable t;
    std::string line;
    auto split = [](const std::string &l) {
        std::vector<std::string> out;
        std::stringstream ss(l);
        std::string cell;
        while (std::getline(ss, cell, ','))
            out.push_back(cell);
        if (!l.empty() && l.back() == ',')
            out.emplace_back();
        return out;
    };
    while (std::getline(is, line))
    {
        if (line.empty() || line.front() == '#')
            continue;
        if (t.header.empty())
            t.header = split(line);
        else
            t.rows.push_back(split(line));
    }
    if (t.header.empty())
        fail(ErrorKind::Io, path, " has no header row");
    return t;
}

inline double to_double(const std::string &s)
{
    if (s == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf")
        return std::numeric_limits<double>::infinity();
    return std::stod(s);
}

} // namespace detail

/// Parses argv and executes one subcommand. Returns 0 on success, 2 on configuration or
/// precondition violations and 1 on other failures.
inline int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err)
{
    using namespace detail;
    CLI::App app{"clamsense: clutter-angle-map aided sensing toolkit", "clamsense"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    std::string out_dir = default_out_dir();
    app.add_option("--out-dir", out_dir, "Directory for output files (default: $CLAMSENSE_OUT or .)");

    const std::vector<std::string> method_names = [] {
        std::vector<std::string> v;
        for (auto m : kAllMethods)
            v.emplace_back(to_string(m));
        return v;
    }();

    // scene validate
    auto *scene_cmd = app.add_subcommand("scene", "Scene utilities")->require_subcommand(1);
    auto *scene_validate = scene_cmd->add_subcommand("validate", "Check a scene file against an OFDM profile");
    std::string scene_path, profile = "desk";
    scene_validate->add_option("--scene", scene_path, "Scene JSON")->required();
    scene_validate->add_option("--profile", profile, "OFDM profile")->check(CLI::IsMember({"desk", "full"}));

    // clam build | lookup
    auto *clam_cmd = app.add_subcommand("clam", "Clutter angle map")->require_subcommand(1);
    auto *clam_build = clam_cmd->add_subcommand("build", "Build a CLAM over a grid of UE positions");
    std::string clam_method = "geometric", clam_out;
    std::vector<double> grid_origin{0.0, 0.0, 0.0}, position;
    std::vector<int> grid_dims{1, 1, 1};
    double cell_size = 10.0;
    int clutter_count = 3;
    bool reflectivity_only = false;
    std::string snr = "off";
    std::uint64_t seed = 1;
    unsigned threads = 0;
    clam_build->add_option("--scene", scene_path, "Scene JSON")->required();
    clam_build->add_option("--method", clam_method, "Construction method")
        ->check(CLI::IsMember({"geometric", "estimated"}));
    clam_build->add_option("--origin", grid_origin, "Grid origin x,y[,z] in metres")->delimiter(',');
    clam_build->add_option("--cell-size", cell_size, "Cell edge in metres");
    clam_build->add_option("--dims", grid_dims, "Cells per axis nx,ny,nz")->delimiter(',')->expected(3);
    clam_build->add_option("--clutter", clutter_count, "Clutter directions stored per cell");
    clam_build->add_flag("--reflectivity-only", reflectivity_only, "Rank clutter by reflectivity instead of path gain");
    clam_build->add_option("--snr", snr, "SNR in dB for the estimated method, or 'off'");
    clam_build->add_option("--seed", seed, "Master noise seed");
    clam_build->add_option("--threads", threads, "Worker threads (0: all cores)");
    clam_build->add_option("--out", clam_out, "Output file (default: <out-dir>/clam.json)");
    auto *clam_lookup_cmd = clam_cmd->add_subcommand("lookup", "Print the clutter DoAs stored for a position");
    std::string clam_path;
    clam_lookup_cmd->add_option("--clam", clam_path, "CLAM JSON")->required();
    clam_lookup_cmd->add_option("--position", position, "UE position x,y[,z]")->delimiter(',')->required();

    // pipeline run
    auto *pipeline_cmd = app.add_subcommand("pipeline", "Single estimator runs")->require_subcommand(1);
    auto *pipeline_run = pipeline_cmd->add_subcommand("run", "Run one method on one synthesized realisation");
    std::string method_name = "joint-music";
    double grid_step = 0.5;
    int fft_size = 64;
    pipeline_run->add_option("--scene", scene_path, "Scene JSON")->required();
    pipeline_run->add_option("--clam", clam_path, "CLAM JSON (default: scene clutter geometry)");
    pipeline_run->add_option("--method", method_name, "Estimator")->check(CLI::IsMember(method_names));
    pipeline_run->add_option("--snr", snr, "SNR in dB, or 'off' for noiseless");
    pipeline_run->add_option("--seed", seed, "Noise seed");
    pipeline_run->add_option("--profile", profile, "OFDM profile")->check(CLI::IsMember({"desk", "full"}));
    pipeline_run->add_option("--grid-step", grid_step, "Angle grid step in degrees");
    pipeline_run->add_option("--fft-size", fft_size, "Spatial FFT points per axis");
    bool no_spectrum = false;
    pipeline_run->add_flag("--no-spectrum", no_spectrum, "Skip the spectrum CSV");

    // joint run
    auto *joint_cmd = app.add_subcommand("joint", "Joint spatial and delay-Doppler estimation")->require_subcommand(1);
    auto *joint_run = joint_cmd->add_subcommand("run", "Run the two-step joint estimator");
    std::string estimator = "music";
    bool iterate_all = false;
    joint_run->add_option("--scene", scene_path, "Scene JSON")->required();
    joint_run->add_option("--clam", clam_path, "CLAM JSON (default: scene clutter geometry)");
    joint_run->add_option("--snr", snr, "SNR in dB, or 'off' for noiseless");
    joint_run->add_option("--seed", seed, "Noise seed");
    joint_run->add_option("--profile", profile, "OFDM profile")->check(CLI::IsMember({"desk", "full"}));
    joint_run->add_option("--estimator", estimator, "Direction estimator")->check(CLI::IsMember({"music", "fft"}));
    joint_run->add_flag("--iterate-all", iterate_all, "Run Step 2 for every Step 1 candidate");
    joint_run->add_option("--grid-step", grid_step, "Angle grid step in degrees");

    // experiment run
    auto *experiment_cmd = app.add_subcommand("experiment", "Monte Carlo experiments")->require_subcommand(1);
    auto *experiment_run = experiment_cmd->add_subcommand("run", "Run an experiment spec");
    std::string spec_path;
    int trials_override = 0;
    std::optional<std::uint64_t> seed_override;
    experiment_run->add_option("--spec", spec_path, "Experiment JSON")->required();
    experiment_run->add_option("--trials", trials_override, "Override the trial count");
    experiment_run->add_option("--seed", seed_override, "Override the master seed");
    experiment_run->add_option("--threads", threads, "Worker threads (0: all cores)");

    // complexity table
    auto *complexity_cmd = app.add_subcommand("complexity", "Closed-form complexity")->require_subcommand(1);
    auto *complexity_table = complexity_cmd->add_subcommand("table", "Multiplication counts per algorithm and array size");
    bool fig6 = false;
    std::vector<std::uint64_t> sizes{16, 64, 256, 1024};
    ComplexityParams cparams;
    complexity_table->add_flag("--fig6", fig6, "Use the reference sweep (sizes 16..1024, default parameters)");
    complexity_table->add_option("--sizes", sizes, "Array sizes M")->delimiter(',');
    complexity_table->add_option("--n-sym", cparams.n_sym, "OFDM symbols");
    complexity_table->add_option("--n-sc", cparams.n_sc, "Subcarriers");
    complexity_table->add_option("--n-fft", cparams.n_fft, "Spatial FFT points");
    complexity_table->add_option("--n-tau", cparams.n_tau, "Delay transform length");
    complexity_table->add_option("--n-fd", cparams.n_fd, "Doppler transform length");
    complexity_table->add_option("--targets", cparams.s, "Targets S");
    complexity_table->add_option("--clutter", cparams.l, "Clutter paths L");
    complexity_table->add_option("--grid-points", cparams.r_az, "Grid points per angle");

    // mti demo (also reachable as 'suppress mti-demo')
    auto *mti_cmd = app.add_subcommand("mti", "Moving target indication")->require_subcommand(1);
    auto *mti_demo_cmd = mti_cmd->add_subcommand("demo", "Canceller time and frequency series");
    auto *suppress_cmd = app.add_subcommand("suppress", "Clutter suppression utilities")->require_subcommand(1);
    auto *suppress_demo_cmd = suppress_cmd->add_subcommand("mti-demo", "Alias of 'mti demo'");
    double mti_interval = 10e-3, mti_doppler = 20.0;
    for (auto *c : {mti_demo_cmd, suppress_demo_cmd})
    {
        c->add_option("--interval", mti_interval, "Pulse repetition interval in seconds");
        c->add_option("--doppler", mti_doppler, "Doppler of the moving component in Hz");
    }

    // plotdata fig7 | fig8 | fig10
    auto *plot_cmd = app.add_subcommand("plotdata", "Reshape result CSVs into per-figure series")->require_subcommand(1);
    std::string input_path, quantity = "rmse_azimuth_deg";
    std::vector<CLI::App *> rmse_figs;
    for (const char *name : {"fig7", "fig8"})
    {
        auto *c = plot_cmd->add_subcommand(name, "Error versus SNR per method from a summary CSV");
        c->add_option("--summary", input_path, "summary.csv from 'experiment run'")->required();
        c->add_option("--quantity", quantity, "Summary column to plot");
        rmse_figs.push_back(c);
    }
    auto *fig10 = plot_cmd->add_subcommand("fig10", "Azimuth-delay scatter from a joint polar CSV");
    fig10->add_option("--polar", input_path, "polar.csv from 'joint run'")->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try
    {
        json config = {{"command", std::vector<std::string>(argv + 1, argv + argc)}};

        if (*scene_validate)
        {
            const auto scene = load_scene(scene_path);
            const auto ofdm = ofdm_from_json(json(profile));
            ofdm.validate();
            const auto paths = derive_paths(scene);
            check_delays_within_cp(paths, ofdm);
            out << "kind,azimuth_deg,zenith_deg,delay_us,doppler_hz,gain_db\n";
            for (const auto &p : paths)
                out << to_string(p.kind) << ',' << fmt(p.doa.azimuth_deg, 3) << ',' << fmt(p.doa.zenith_deg, 3) << ','
                    << fmt(p.delay_s * 1e6, 4) << ',' << fmt(p.doppler_hz, 2) << ','
                    << fmt(10.0 * std::log10(std::max(std::norm(p.gain), 1e-300)), 2) << '\n';
            out << "scene '" << scene.name << "' valid for profile " << profile << " (T_CP " << fmt(ofdm.t_cp_s * 1e6, 4)
                << " us)\n";
            return kExitOk;
        }

        if (*clam_build)
        {
            const auto scene = load_scene(scene_path);
            GridSpec grid;
            grid.origin = parse_vec3(grid_origin, "--origin");
            grid.cell_size_m = cell_size;
            grid.nx = grid_dims[0], grid.ny = grid_dims[1], grid.nz = grid_dims[2];
            ClamMap map;
            if (clam_method == "geometric")
                map = build_geometric(scene, grid, clutter_count, reflectivity_only);
            else
            {
                EstimatedClamConfig ec;
                ec.clutter_count = clutter_count;
                ec.snr_db = parse_snr(snr);
                ec.seed = seed;
                ec.threads = threads;
                map = build_estimated(scene, grid, ec);
            }
            auto j = clam_to_json(map);
            j["generator"] = {{"version", kVersion}, {"config", config}};
            const auto path = clam_out.empty() ? join_path(out_dir, "clam.json") : clam_out;
            auto os = open_output(path);
            os << j.dump(1) << "\n";
            out << "wrote " << path << " (" << map.cells.size() << " cells, " << map.warnings.size() << " warnings)\n";
            return kExitOk;
        }

        if (*clam_lookup_cmd)
        {
            const auto map = load_clam(clam_path);
            const auto &doas = clam_lookup(map, parse_vec3(position, "--position"));
            out << "rank,azimuth_deg,zenith_deg\n";
            for (std::size_t k = 0; k < doas.size(); ++k)
                out << k << ',' << fmt(doas[k].azimuth_deg) << ',' << fmt(doas[k].zenith_deg) << '\n';
            return kExitOk;
        }

        if (*pipeline_run || *joint_run)
        {
            const bool joint = joint_run->parsed();
            Method method = joint ? (estimator == "fft" ? Method::JointFft : Method::JointMusic)
                                  : method_from_string(method_name);
            config["method"] = to_string(method);
            auto in = prepare_run(scene_path, clam_path, profile, snr, seed, config);
            PipelineConfig cfg;
            cfg.targets = static_cast<int>(filter_paths(in.paths, PathKind::Target).size());
            cfg.clutter = static_cast<int>(in.clutter.size());
            cfg.grid = AngleGrid{grid_step};
            cfg.fft_size = fft_size;
            cfg.joint.iterate_all = iterate_all;
            if (cfg.targets < 1)
                fail(ErrorKind::Precondition, "scene has no target paths");
            config["grid_step_deg"] = grid_step;
            config["fft_size"] = fft_size;
            config["iterate_all"] = iterate_all;

            const auto res = run_method(method, in.data, in.clutter, cfg);
            const auto truth = filter_paths(in.paths, PathKind::Target);
            const std::string prefix = joint ? "joint" : "pipeline";
            {
                const auto path = join_path(out_dir, prefix + "_estimates.csv");
                auto os = open_output(path);
                const bool staged = method == Method::JointFft || method == Method::JointMusic;
                write_records_csv(os, config, to_string(method), staged ? res.detail.records : res.estimates, truth);
                out << "wrote " << path << "\n";
            }
            if (!joint && !no_spectrum)
            {
                const auto path = join_path(out_dir, prefix + "_spectrum.csv");
                auto os = open_output(path);
                write_method_spectrum(os, config, method, in.data, in.clutter, cfg);
                out << "wrote " << path << "\n";
            }
            if (joint)
            {
                // Polar view: azimuth against bistatic delay, with positions when the scene has geometry.
                const bool geometric = !in.scene.is_path_list();
                const auto path = join_path(out_dir, "joint_polar.csv");
                auto os = open_output(path);
                write_header(os, config);
                os << "label,index,azimuth_deg,delay_us,x_m,y_m\n";
                auto row = [&](const char *label, std::size_t k, const Doa &d, double delay) {
                    double x = NAN, y = NAN;
                    if (geometric && std::isfinite(delay))
                        try
                        {
                            const auto loc = localize(delay, d, in.scene.ue_position_m, in.scene.bs_position_m,
                                                      in.scene.array);
                            x = loc.position_m.x(), y = loc.position_m.y();
                        }
                        catch (const Error &)
                        {
                        }
                    os << label << ',' << k << ',' << fmt(d.azimuth_deg) << ',' << fmt(delay * 1e6) << ','
                       << fmt(x, 3) << ',' << fmt(y, 3) << '\n';
                };
                for (std::size_t k = 0; k < truth.size(); ++k)
                    row("truth", k, truth[k].doa, truth[k].delay_s);
                for (std::size_t k = 0; k < res.estimates.size(); ++k)
                    row("estimate", k, res.estimates[k].doa, res.estimates[k].delay_s);
                out << "wrote " << path << "\n";
            }
            out << "tag,azimuth_deg,zenith_deg,delay_us,doppler_hz\n";
            for (const auto &r : res.estimates)
                out << r.tag() << ',' << fmt(r.doa.azimuth_deg, 3) << ',' << fmt(r.doa.zenith_deg, 3) << ','
                    << fmt(r.delay_s * 1e6, 4) << ',' << fmt(r.doppler_hz, 2) << '\n';
            for (const auto &n : res.notes)
                err << "note: " << n << '\n';
            return kExitOk;
        }

        if (*experiment_run)
        {
            const auto base = std::filesystem::path(spec_path).parent_path().string();
            auto spec = experiment_from_json(read_json(spec_path), base.empty() ? "." : base);
            if (trials_override > 0)
                spec.trials = trials_override;
            if (seed_override)
                spec.seed = *seed_override;
            if (threads > 0)
                spec.threads = threads;
            const auto result = monte_carlo(spec);
            const auto trials_csv = join_path(out_dir, spec.name + "_trials.csv");
            const auto summary_csv = join_path(out_dir, spec.name + "_summary.csv");
            {
                auto os = open_output(trials_csv);
                write_trials_csv(os, spec, result);
            }
            {
                auto os = open_output(summary_csv);
                write_summary_csv(os, spec, result);
            }
            std::size_t failed = 0;
            for (const auto &t : result.trials)
                failed += t.failed;
            out << "wrote " << trials_csv << "\nwrote " << summary_csv << "\n";
            if (failed)
                err << "note: " << failed << " method runs failed; see the 'failed' column\n";
            return kExitOk;
        }

        if (*complexity_table)
        {
            if (fig6)
                cparams = ComplexityParams{}, sizes = {16, 64, 256, 1024};
            cparams.r_zen = cparams.r_az;
            config["params"] = {{"n_sym", cparams.n_sym}, {"n_sc", cparams.n_sc},   {"n_fft", cparams.n_fft},
                                {"n_tau", cparams.n_tau}, {"n_fd", cparams.n_fd},   {"targets", cparams.s},
                                {"clutter", cparams.l},   {"grid_points", cparams.r_az}};
            const auto rows = complexity_sweep(sizes, cparams);
            const auto path = join_path(out_dir, "complexity.csv");
            {
                auto os = open_output(path);
                write_header(os, config);
                os << "algorithm";
                for (const auto &r : rows)
                    os << ",m_" << r.m;
                os << '\n';
                for (auto a : kAllAlgorithms)
                {
                    os << to_string(a);
                    for (const auto &r : rows)
                        os << ',' << r.counts.at(a);
                    os << '\n';
                }
            }
            std::vector<Series> series;
            for (auto a : kAllAlgorithms)
            {
                Series s{to_string(a), {}, {}};
                for (const auto &r : rows)
                    s.x.push_back(static_cast<double>(r.m)), s.y.push_back(static_cast<double>(r.counts.at(a)));
                series.push_back(s);
            }
            const auto svg = join_path(out_dir, "complexity.svg");
            auto os = open_output(svg);
            write_svg_chart(os, series, {"Complex multiplications", "array size M", "multiplications", true}, config);
            out << "wrote " << path << "\nwrote " << svg << "\n";
            return kExitOk;
        }

        if (*mti_demo_cmd || *suppress_demo_cmd)
        {
            config["interval_s"] = mti_interval;
            config["doppler_hz"] = mti_doppler;
            const auto d = mti_demo(mti_interval, mti_doppler);
            const auto time_csv = join_path(out_dir, "mti_time.csv");
            const auto freq_csv = join_path(out_dir, "mti_spectrum.csv");
            {
                auto os = open_output(time_csv);
                write_header(os, config);
                os << "time_s,input_mag,output_mag\n";
                for (std::size_t i = 0; i < d.time_s.size(); ++i)
                    os << fmt(d.time_s[i], 6) << ',' << fmt(d.input_mag[i]) << ',' << fmt(d.output_mag[i]) << '\n';
            }
            {
                auto os = open_output(freq_csv);
                write_header(os, config);
                os << "freq_hz,input_spectrum,output_spectrum,filter_gain\n";
                for (std::size_t i = 0; i < d.freq_hz.size(); ++i)
                    os << fmt(d.freq_hz[i], 3) << ',' << fmt(d.input_spectrum[i], 9) << ','
                       << fmt(d.output_spectrum[i], 9) << ',' << fmt(d.filter_gain[i], 9) << '\n';
            }
            const auto svg = join_path(out_dir, "mti_spectrum.svg");
            {
                auto os = open_output(svg);
                write_svg_chart(os,
                                {{"input", d.freq_hz, d.input_spectrum},
                                 {"output", d.freq_hz, d.output_spectrum},
                                 {"filter gain", d.freq_hz, d.filter_gain}},
                                {"First-order canceller", "frequency (Hz)", "magnitude"}, config);
            }
            out << "3 dB cutoff " << fmt(d.cutoff_hz, 3) << " Hz\n";
            out << "wrote " << time_csv << "\nwrote " << freq_csv << "\nwrote " << svg << "\n";
            return kExitOk;
        }

        for (auto *c : rmse_figs)
            if (*c)
            {
                const std::string name = c->get_name();
                const auto table = read_csv(input_path);
                const int mc = table.column("method"), sc = table.column("snr_db"), qc = table.column(quantity);
                std::vector<Series> series;
                std::vector<double> snrs;
                for (const auto &row : table.rows)
                {
                    const double snr_v = to_double(row.at(sc));
                    auto it = std::find_if(series.begin(), series.end(),
                                           [&](const Series &s) { return s.label == row.at(mc); });
                    if (it == series.end())
                        it = series.insert(series.end(), Series{row.at(mc), {}, {}});
                    it->x.push_back(snr_v);
                    it->y.push_back(to_double(row.at(qc)));
                    if (std::find(snrs.begin(), snrs.end(), snr_v) == snrs.end())
                        snrs.push_back(snr_v);
                }
                config["source"] = input_path;
                config["quantity"] = quantity;
                const auto path = join_path(out_dir, name + ".csv");
                {
                    auto os = open_output(path);
                    write_header(os, config);
                    os << "snr_db";
                    for (const auto &s : series)
                        os << ',' << s.label;
                    os << '\n';
                    for (double v : snrs)
                    {
                        os << snr_label(v);
                        for (const auto &s : series)
                        {
                            const auto it = std::find(s.x.begin(), s.x.end(), v);
                            os << ',' << (it == s.x.end() ? "nan" : fmt(s.y[static_cast<std::size_t>(it - s.x.begin())]));
                        }
                        os << '\n';
                    }
                }
                const auto svg = join_path(out_dir, name + ".svg");
                auto os = open_output(svg);
                write_svg_chart(os, series, {name + ": " + quantity + " versus SNR", "SNR (dB)", quantity, true}, config);
                out << "wrote " << path << "\nwrote " << svg << "\n";
                return kExitOk;
            }

        if (*fig10)
        {
            const auto table = read_csv(input_path);
            const int lc = table.column("label"), ac = table.column("azimuth_deg"), dc = table.column("delay_us");
            Series truth{"truth", {}, {}, true}, estimate{"estimate", {}, {}, true};
            for (const auto &row : table.rows)
            {
                auto &s = row.at(lc) == "truth" ? truth : estimate;
                s.x.push_back(to_double(row.at(ac)));
                s.y.push_back(to_double(row.at(dc)));
            }
            config["source"] = input_path;
            const auto path = join_path(out_dir, "fig10.csv");
            {
                auto os = open_output(path);
                write_header(os, config);
                os << "label,azimuth_deg,delay_us,polar_x,polar_y\n";
                for (const auto *s : {&truth, &estimate})
                    for (std::size_t i = 0; i < s->x.size(); ++i)
                    {
                        const double az = deg2rad(s->x[i]);
                        os << s->label << ',' << fmt(s->x[i]) << ',' << fmt(s->y[i]) << ','
                           << fmt(s->y[i] * std::cos(az)) << ',' << fmt(s->y[i] * std::sin(az)) << '\n';
                    }
            }
            const auto svg = join_path(out_dir, "fig10.svg");
            auto os = open_output(svg);
            write_svg_chart(os, {truth, estimate}, {"Targets in azimuth and delay", "azimuth (deg)", "delay (us)"},
                            config);
            out << "wrote " << path << "\nwrote " << svg << "\n";
            return kExitOk;
        }
    }
    catch (const Error &e)
    {
        err << "clamsense: error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
        return e.kind() == ErrorKind::Estimation ? kExitFailure : kExitConfig;
    }
    catch (const std::filesystem::filesystem_error &e)
    {
        err << "clamsense: error [io]: " << e.what() << '\n';
        return kExitConfig;
    }
    catch (const std::exception &e)
    {
        err << "clamsense: error [internal]: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}

} // namespace clamsense::cli
