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

#include "clamsense/estimate.hpp"
#include "clamsense/io.hpp"

using namespace clamsense;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{
const std::string kScenes = CLAMSENSE_SCENE_DIR;

// Smallest angular distance from `d` to any of `set`.
double nearest(const Doa &d, const std::vector<Doa> &set)
{
    double best = 1e9;
    for (const auto &s : set)
        best = std::min(best, std::hypot(d.azimuth_deg - s.azimuth_deg, d.zenith_deg - s.zenith_deg));
    return best;
}

std::vector<Doa> doas_of(const std::vector<PathParams> &paths)
{
    std::vector<Doa> out;
    for (const auto &p : paths)
        out.push_back(p.doa);
    return out;
}

struct SparseScene
{
    std::vector<PathParams> paths, clutter, targets;
    ArrayGeometry array;
};

SparseScene sparse()
{
    const auto scene = load_scene(kScenes + "/sparse.json");
    SparseScene s;
    s.paths = derive_paths(scene);
    s.clutter = filter_paths(s.paths, PathKind::Clutter);
    s.targets = filter_paths(s.paths, PathKind::Target);
    s.array = scene.array;
    return s;
}
} // namespace

TEST_CASE("sample covariance", "[covariance]")
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    CMat y(5, 1300);
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y(i) = cd(n(rng), n(rng));
    op_counters().reset();
    const CMat r = covariance(y);
    // Direct sum oracle.
    CMat oracle = CMat::Zero(5, 5);
    for (Eigen::Index c = 0; c < y.cols(); ++c)
        oracle += y.col(c) * y.col(c).adjoint();
    oracle /= 1300.0;
    CHECK((r - oracle).norm() < 1e-12 * oracle.norm());
    CHECK(r == r.adjoint());
    CHECK(op_counters().covariance == 1300u * 25u);
    CHECK_THROWS_AS(covariance(CMat(5, 0)), Error);
}

TEST_CASE("MUSIC resolves the sparse scene without suppression", "[music]")
{
    const auto s = sparse();
    const auto t = synthesize(s.paths, OfdmParams::desk(), s.array, std::nullopt, 1);
    const auto peaks = music_doas(covariance(t.data), 5, 5, s.array, AngleGrid{0.5});
    REQUIRE(peaks.peaks.size() == 5);
    CHECK_FALSE(peaks.padded);
    const auto truth = doas_of(s.paths);
    for (const auto &p : peaks.peaks)
        CHECK(nearest(p.doa, truth) < 0.5);
    for (const auto &d : truth)
        CHECK(nearest(d, peaks.doas()) < 0.5);
}

TEST_CASE("noise subspace is orthogonal to the true directions", "[music]")
{
    const auto s = sparse();
    const auto t = synthesize(s.paths, OfdmParams::desk(), s.array, std::nullopt, 1);
    const auto spec = music_spectrum(covariance(t.data), 5, s.array, AngleGrid{1.0});
    for (const auto &p : s.paths)
        CHECK(spec.at(p.doa) > 1e8);
    CHECK(spec.at({150.0, 20.0}) < 10.0);
    // Eigenvalues descend and only five are non-negligible.
    CHECK(spec.eigenvalues(4) > 1e-6 * spec.eigenvalues(0));
    CHECK(spec.eigenvalues(5) < 1e-12 * spec.eigenvalues(0));
}

TEST_CASE("grid spectrum agrees with direct evaluation", "[music]")
{
    const auto s = sparse();
    const auto t = synthesize(s.paths, OfdmParams::desk(), s.array, 0.0, 2);
    const auto p = zf_build(s.array, doas_of(s.clutter));
    const CMat r = covariance(zf_apply(p, t.data));
    for (auto scan : {ScanModel::Steering, ScanModel::Projected, ScanModel::ProjectedNormalized, ScanModel::GainWeighted})
    {
        const auto spec = music_spectrum(r, 2, s.array, AngleGrid{2.0}, &p, scan);
        for (int ia : {3, 26, 40, 77})
            for (int iz : {5, 45, 63, 80})
                CHECK_THAT(spec.values(ia, iz), WithinRel(spec.at(spec.doa(ia, iz)), 1e-9));
    }
    // Without a projector the closed form is 1 / (M - |Qs^H a|^2).
    const CMat r0 = covariance(t.data);
    const auto spec = music_spectrum(r0, 5, s.array, AngleGrid{2.0});
    Eigen::SelfAdjointEigenSolver<CMat> eig(r0);
    const CMat qn = eig.eigenvectors().leftCols(59);
    const CVec a = steering_vector(s.array, spec.doa(20, 30));
    CHECK_THAT(spec.values(20, 30), WithinRel(1.0 / (qn.adjoint() * a).squaredNorm(), 1e-6));
}

TEST_CASE("clutter-aided MUSIC nulls the mapped clutter", "[music]")
{
    const auto s = sparse();
    for (std::optional<double> snr : {std::optional<double>{}, std::optional<double>{0.0}})
    {
        const auto t = synthesize(s.paths, OfdmParams::desk(), s.array, snr, 3);
        const auto p = zf_build(s.array, doas_of(s.clutter));
        const auto spec = music_spectrum(covariance(zf_apply(p, t.data)), 2, s.array, AngleGrid{0.5}, &p);
        const auto peaks = refine_peaks(spec, music_peaks(spec, 2));
        for (const auto &d : doas_of(s.targets))
            CHECK(nearest(d, peaks.doas()) < 0.5);
        const double top = spec.values.maxCoeff();
        for (const auto &c : s.clutter)
            CHECK(spec.at(c.doa) <= 1e-3 * top);
    }
}

TEST_CASE("peak picking pads when maxima run out", "[music]")
{
    ArrayGeometry g;
    g.mx = g.mz = 2;
    const auto spec = music_spectrum(CMat::Identity(4, 4), 1, g, AngleGrid{10.0});
    const auto peaks = music_peaks(spec, 40);
    CHECK(peaks.peaks.size() == 40);
    CHECK(peaks.padded);
}

TEST_CASE("MUSIC argument checks", "[music]")
{
    ArrayGeometry g;
    g.mx = g.mz = 2;
    CHECK_THROWS_AS(music_spectrum(CMat::Identity(4, 4), 0, g, AngleGrid{1.0}), Error);
    CHECK_THROWS_AS(music_spectrum(CMat::Identity(4, 4), 4, g, AngleGrid{1.0}), Error);
    CHECK_THROWS_AS(music_spectrum(CMat::Identity(5, 5), 1, g, AngleGrid{1.0}), Error);
    CMat skew = CMat::Identity(4, 4);
    skew(0, 1) = 1.0;
    CHECK_THROWS_AS(music_spectrum(skew, 1, g, AngleGrid{1.0}), Error);
    CHECK_THROWS_AS(music_spectrum(CMat::Identity(4, 4), 1, g, AngleGrid{0.0}), Error);
}

TEST_CASE("golden-section refinement converges on a smooth peak", "[music]")
{
    auto f = [](const Doa &d) { return -std::pow(d.azimuth_deg - 61.234, 2) - 2.0 * std::pow(d.zenith_deg - 97.5, 2); };
    const Peak start{{61.0, 97.0}, f({61.0, 97.0})};
    const auto p = refine_peak(f, start, 0.5);
    CHECK_THAT(p.doa.azimuth_deg, WithinAbs(61.234, 1e-3));
    CHECK_THAT(p.doa.zenith_deg, WithinAbs(97.5, 1e-3));
}

TEST_CASE("spatial FFT peaks lie within one bin of the truth", "[fft]")
{
    const auto s = sparse();
    const auto t = synthesize(s.paths, OfdmParams::desk(), s.array, std::nullopt, 1);
    const int f = 64;
    const auto res = fft_doa(t.data, s.array, f, 5);
    REQUIRE(res.peaks.peaks.size() == 5);
    for (const auto &p : s.paths)
    {
        const auto truth = spatial_frequency(s.array, p.doa);
        bool found = false;
        for (const auto &e : res.peaks.peaks)
        {
            const auto est = spatial_frequency(s.array, e.doa);
            found = found || (std::abs(est.u - truth.u) <= 1.0 / f && std::abs(est.v - truth.v) <= 1.0 / f);
        }
        CHECK(found);
    }
}

TEST_CASE("spatial FFT power matches a direct DFT", "[fft]")
{
    ArrayGeometry g;
    g.mx = 3;
    g.mz = 2;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int cols : {4, 20})
    {
        CMat y(6, cols);
        for (Eigen::Index i = 0; i < y.size(); ++i)
            y(i) = cd(n(rng), n(rng));
        const int f = 8;
        const auto res = fft_doa(y, g, f, 1);
        for (int ku : {0, 3, 7})
            for (int kv : {1, 6})
            {
                double oracle = 0.0;
                for (int c = 0; c < cols; ++c)
                {
                    cd acc = 0.0;
                    for (int x = 0; x < 3; ++x)
                        for (int z = 0; z < 2; ++z)
                            acc += y(x * 2 + z, c) * std::polar(1.0, -2.0 * std::numbers::pi * (ku * x + kv * z) / f);
                    oracle += std::norm(acc);
                }
                CHECK_THAT(res.power(ku, kv), WithinRel(oracle / cols, 1e-9));
            }
    }
}

TEST_CASE("Hann taps", "[delay-doppler]")
{
    const auto w = window_taps(Window::Hann, 3);
    // sin^2(pi k / 4) for k = 1..3.
    CHECK_THAT(w[0], WithinAbs(0.5, 1e-15));
    CHECK_THAT(w[1], WithinAbs(1.0, 1e-15));
    CHECK_THAT(w[2], WithinAbs(0.5, 1e-15));
    for (double x : window_taps(Window::Rect, 5))
        CHECK(x == 1.0);
}

TEST_CASE("delay-Doppler bin mapping", "[delay-doppler]")
{
    ArrayGeometry g;
    g.mx = g.mz = 1;
    auto ofdm = OfdmParams::full();
    ofdm.n_sym = 4;
    const auto t = synthesize({}, ofdm, g, 0.0, 1);
    const auto dd = delay_doppler(t, 5 * 1024, 5 * 4);
    // 691 / (30 kHz * 5120) = 4.4987 us.
    CHECK_THAT(dd.delay_of_bin(691) * 1e6, WithinAbs(4.4987, 5e-5));
    CHECK_THAT(dd.doppler_of_bin(3), WithinRel(3.0 / (ofdm.t_s() * 20), 1e-12));
    CHECK_THAT(dd.doppler_of_bin(17), WithinRel(-3.0 / (ofdm.t_s() * 20), 1e-12));
}

TEST_CASE("on-bin path lands on its bin with full coherent gain", "[delay-doppler]")
{
    ArrayGeometry g;
    g.mx = g.mz = 2;
    const auto ofdm = OfdmParams::desk();
    const int nt = 512, nf = 128;
    for (int dop_bin : {20, -20})
    {
        PathParams p;
        p.gain = std::polar(0.8, 0.5);
        p.delay_s = 100.0 / (ofdm.delta_f_hz * nt);
        p.doppler_hz = dop_bin / (ofdm.t_s() * nf);
        p.doa = {70.0, 80.0};
        const auto dd = delay_doppler(synthesize({p}, ofdm, g, std::nullopt, 1), nt, nf);
        Eigen::Index i = 0, j = 0;
        dd.summed.maxCoeff(&i, &j);
        CHECK(i == 100);
        CHECK(j == (dop_bin + nf) % nf);
        CHECK_THAT(dd.summed(i, j), WithinRel(4.0 * 128 * 32 * 0.64, 1e-9));
        CHECK_THAT(dd.doppler_of_bin(static_cast<double>(j)), WithinRel(p.doppler_hz, 1e-9));
    }
}

TEST_CASE("delay-Doppler transform preserves energy without padding", "[delay-doppler]")
{
    ArrayGeometry g;
    g.mx = g.mz = 2;
    const OfdmParams ofdm{32, 16, 30e3, 9.375e-6};
    const auto t = synthesize({}, ofdm, g, 0.0, 6);
    const auto dd = delay_doppler(t, 32, 16);
    CHECK_THAT(dd.summed.sum(), WithinRel(t.data.squaredNorm(), 1e-10));
    CHECK_THROWS_AS(delay_doppler(t, 16, 16), Error);
}

TEST_CASE("chi-square margin", "[grouping]")
{
    // Two degrees of freedom: exponential, threshold / median = ln(1/pfa) / ln 2.
    const double exact = 10.0 * std::log10(std::log(1e6) / std::log(2.0));
    CHECK_THAT(chi_square_margin_db(2, 1e-6), WithinAbs(exact, 0.5));
    CHECK(chi_square_margin_db(128, 1e-6) < chi_square_margin_db(2, 1e-6));
    CHECK(chi_square_margin_db(128, 1e-6) > 0.0);
}

TEST_CASE("grouping separates two paths and ignores noise", "[grouping]")
{
    ArrayGeometry g;
    g.mx = g.mz = 2;
    const auto ofdm = OfdmParams::desk();
    const int nt = 512, nf = 128;
    PathParams a{cd(1.0), 100.0 / (ofdm.delta_f_hz * nt), 20.0 / (ofdm.t_s() * nf), {70.0, 80.0}, PathKind::Target};
    PathParams b{cd(0.5), 120.0 / (ofdm.delta_f_hz * nt), -40.0 / (ofdm.t_s() * nf), {110.0, 95.0}, PathKind::Target};
    const auto dd = delay_doppler(synthesize({a, b}, ofdm, g, 0.0, 4), nt, nf, Window::Hann);
    const auto classes = dd_peaks_and_group(dd);
    REQUIRE(classes.size() == 2);
    CHECK(classes[0].delay_bin == 100);
    CHECK(classes[0].doppler_bin == 20);
    CHECK(classes[1].delay_bin == 120);
    CHECK(classes[1].doppler_bin == nf - 40);
    CHECK_THAT(classes[1].delay_s, WithinRel(b.delay_s, 1e-12));

    const auto noise = delay_doppler(synthesize({}, ofdm, g, 0.0, 5), nt, nf, Window::Hann);
    CHECK(dd_peaks_and_group(noise).size() <= 1);
}

TEST_CASE("sequential ZF-MUSIC recovers every path noiselessly", "[baseline]")
{
    const auto s = sparse();
    const auto t = synthesize(s.paths, OfdmParams::desk(), s.array, std::nullopt, 1);
    const auto r = sequential_zf_music(t.data, s.array, 5, AngleGrid{0.5});
    REQUIRE(r.doas.size() == 5);
    CHECK_FALSE(r.partial);
    for (const auto &d : doas_of(s.paths))
        CHECK(nearest(d, r.doas) < 0.5);
}

TEST_CASE("spatial smoothing decorrelates coherent paths", "[baseline]")
{
    // Two paths with identical delay and Doppler are fully coherent.
    ArrayGeometry g;
    std::vector<PathParams> paths{{cd(1.0), 2e-6, 300.0, {60.0, 80.0}, PathKind::Target},
                                  {cd(0.0, 1.0), 2e-6, 300.0, {115.0, 100.0}, PathKind::Target}};
    const auto t = synthesize(paths, OfdmParams{32, 8, 30e3, 9.375e-6}, g, 20.0, 2);
    const auto smoothed = spatial_smoothing_music(t.data, g, 2, 2, AngleGrid{0.5});
    for (const auto &p : paths)
        CHECK(nearest(p.doa, smoothed.doas()) < 1.5);
    CHECK_THROWS_AS(spatial_smoothing_music(t.data, g, 16, 2, AngleGrid{0.5}, 4, 4), Error);
}
