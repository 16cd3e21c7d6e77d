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

#include "suppress.hpp"

#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>

namespace clamsense
{

namespace detail
{
inline std::uint64_t half_n_log2n(std::uint64_t n)
{
    return static_cast<std::uint64_t>(std::llround(0.5 * static_cast<double>(n) * std::log2(static_cast<double>(n))));
}
} // namespace detail

// ------------------------------------------------------------------------
// Covariance

/// Sample covariance Y Y^H / P, accumulated over column blocks.
inline CMat covariance(const Eigen::Ref<const CMat> &y)
{
    if (y.cols() == 0 || y.rows() == 0)
        fail(ErrorKind::Domain, "covariance of an empty snapshot matrix");
    const Eigen::Index m = y.rows(), p = y.cols(), block = 512;
    CMat r = CMat::Zero(m, m);
    for (Eigen::Index c = 0; c < p; c += block)
    {
        const auto cols = std::min(block, p - c);
        r.noalias() += y.middleCols(c, cols) * y.middleCols(c, cols).adjoint();
    }
    r /= static_cast<double>(p);
    r = 0.5 * (r + r.adjoint()).eval();
    op_counters().covariance += static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(m * m);
    return r;
}

// ------------------------------------------------------------------------
// Angle grid and manifold scanning

/// Square grid over azimuth and zenith, both spanning [0, 180] degrees.
struct AngleGrid
{
    double step_deg = 0.5;

    int count() const { return static_cast<int>(std::lround(180.0 / step_deg)) + 1; }
    double value(int i) const { return std::min(180.0, i * step_deg); }
    void validate() const
    {
        if (!(step_deg > 0.0) || step_deg > 90.0)
            fail(ErrorKind::Domain, "grid step must lie in (0, 90] degrees, got ", step_deg);
    }
};

/// Calls f(ia, iz, mags) for every grid node, where mags[k] = |v_k^H a(az, zen)|^2 for the
/// columns v_k of `probes`. Uses the Kronecker structure of the steering vector.
template <typename F>
void scan_manifold(const ArrayGeometry &g, const CMat &probes, const AngleGrid &grid, F &&f)
{
    const int n = grid.count(), k = static_cast<int>(probes.cols());
    const double s = g.spacing_over_lambda;
    std::vector<double> cos_az(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        cos_az[i] = std::cos(deg2rad(grid.value(i)));

    CMat partial(k, g.mx); // partial(k, ix) = sum_iz conj(v_k[ix, iz]) * a_z[iz]
    CVec az_factor(g.mz);
    std::vector<cd> acc(static_cast<std::size_t>(k));
    std::vector<double> mags(static_cast<std::size_t>(k));
    for (int iz = 0; iz < n; ++iz)
    {
        const double zen = deg2rad(grid.value(iz));
        const double cz = std::cos(zen), sz = std::sin(zen);
        for (int z = 0; z < g.mz; ++z)
            az_factor(z) = std::polar(1.0, 2.0 * kPi * s * z * cz);
        for (int kk = 0; kk < k; ++kk)
            for (int x = 0; x < g.mx; ++x)
                partial(kk, x) = probes.col(kk).segment(x * g.mz, g.mz).dot(az_factor);
        for (int ia = 0; ia < n; ++ia)
        {
            const cd step = std::polar(1.0, 2.0 * kPi * s * cos_az[ia] * sz);
            std::fill(acc.begin(), acc.end(), cd(0.0));
            cd w = 1.0;
            for (int x = 0; x < g.mx; ++x)
            {
                for (int kk = 0; kk < k; ++kk)
                    acc[kk] += partial(kk, x) * w;
                w *= step;
            }
            for (int kk = 0; kk < k; ++kk)
                mags[kk] = std::norm(acc[kk]);
            f(ia, iz, mags.data());
        }
    }
}

// ------------------------------------------------------------------------
// MUSIC

/// How the scanning vector relates to the steering vector when a projector is present.
enum class ScanModel
{
    Steering,            // b = a; the signal subspace is confined to the projector range
    Projected,           // b = W_bar a, unnormalised
    ProjectedNormalized, // b = W_bar a / |W_bar a|; directions mostly inside the null space read as noise
    GainWeighted,        // ProjectedNormalized scaled by the share of |a|^2 the projector keeps
};

inline const char *to_string(ScanModel m)
{
    switch (m)
    {
    case ScanModel::Steering: return "steering";
    case ScanModel::Projected: return "projected";
    case ScanModel::ProjectedNormalized: return "projected-normalized";
    case ScanModel::GainWeighted: return "gain-weighted";
    }
    return "unknown";
}

/// Everything needed to evaluate a pseudo-spectrum at an arbitrary direction.
struct SpectrumModel
{
    ArrayGeometry array;
    ScanModel scan = ScanModel::Steering;
    CMat probes;   // signal probes first, then the null-space basis
    int n_signal = 0;
    double w_fro2 = 1.0;
    double gain_floor = 1e-2;
    bool has_projector = false;

    static constexpr double kFloor = 1e-300;

    double from_mags(const double *mags) const
    {
        const double m = array.elements();
        double sig = 0.0, nul = 0.0;
        for (int k = 0; k < n_signal; ++k)
            sig += mags[k];
        for (int k = n_signal; k < probes.cols(); ++k)
            nul += mags[k];
        if (!has_projector || scan == ScanModel::Steering)
            return 1.0 / (std::max(0.0, m - sig) + kFloor);
        const double b2 = std::max(0.0, m - nul) / w_fro2;
        if (scan == ScanModel::Projected)
            return 1.0 / (std::max(0.0, b2 - sig) + kFloor);
        const double kept = std::max(0.0, m - nul) / m;
        const double normalized =
            kept < gain_floor ? 1.0 / (1.0 + kFloor) : 1.0 / (std::clamp(1.0 - sig / b2, 0.0, 1.0) + kFloor);
        return scan == ScanModel::GainWeighted ? kept * normalized : normalized;
    }

    double evaluate(const Doa &d) const
    {
        const CVec a = steering_vector(array, d);
        const Eigen::VectorXd mags = (probes.adjoint() * a).cwiseAbs2();
        return from_mags(mags.data());
    }
};

struct MusicSpectrum
{
    AngleGrid grid;
    Eigen::MatrixXd values; // rows: azimuth index, columns: zenith index
    Eigen::VectorXd eigenvalues; // descending
    std::shared_ptr<const SpectrumModel> model;

    Doa doa(int ia, int iz) const { return {grid.value(ia), grid.value(iz)}; }
    double at(const Doa &d) const { return model->evaluate(d); }
};

inline void check_hermitian(const CMat &r)
{
    if (r.rows() != r.cols())
        fail(ErrorKind::Domain, "covariance must be square");
    if ((r - r.adjoint()).norm() > 1e-8 * std::max(r.norm(), 1e-300))
        fail(ErrorKind::Domain, "covariance is not Hermitian");
}

/// MUSIC pseudo-spectrum 1 / (b^H Qn Qn^H b + floor) over the angle grid. The noise
/// subspace term is evaluated as |b|^2 - |Qs^H b|^2.
///
/// Without a projector b is the steering vector. With one, `scan` selects the scanning
/// vector; GainWeighted is the default, so mapped clutter directions show as nulls.
inline MusicSpectrum music_spectrum(const CMat &r, int sources, const ArrayGeometry &g, const AngleGrid &grid,
                                    const ZfProjector *projector = nullptr,
                                    ScanModel scan = ScanModel::GainWeighted, double gain_floor = 1e-2)
{
    g.validate();
    grid.validate();
    check_hermitian(r);
    const int m = g.elements();
    if (r.rows() != m)
        fail(ErrorKind::Domain, "covariance size ", r.rows(), " does not match ", m, " array elements");
    if (sources < 1 || sources >= m)
        fail(ErrorKind::Domain, "source count ", sources, " must lie in [1, ", m - 1, "]");
    if (projector && projector->w_bar.rows() != m)
        fail(ErrorKind::Domain, "projector size does not match the array");

    Eigen::SelfAdjointEigenSolver<CMat> eig(r);
    if (eig.info() != Eigen::Success)
        fail(ErrorKind::Estimation, "eigendecomposition failed");

    auto model = std::make_shared<SpectrumModel>();
    model->array = g;
    model->scan = scan;
    model->gain_floor = gain_floor;
    model->has_projector = projector != nullptr;
    CMat qs = eig.eigenvectors().rightCols(sources).rowwise().reverse();
    if (projector)
    {
        model->w_fro2 = projector->fro_norm * projector->fro_norm;
        if (scan == ScanModel::Steering)
        {
            const CMat confined = qs - projector->basis * (projector->basis.adjoint() * qs);
            Eigen::HouseholderQR<CMat> qr(confined);
            qs = qr.householderQ() * CMat::Identity(m, sources);
        }
        else
            qs = projector->w_bar * qs;
    }
    model->n_signal = sources;
    const Eigen::Index nb = projector ? projector->basis.cols() : 0;
    model->probes.resize(m, sources + nb);
    model->probes.leftCols(sources) = qs;
    if (nb > 0)
        model->probes.rightCols(nb) = projector->basis;

    MusicSpectrum out;
    out.grid = grid;
    out.eigenvalues = eig.eigenvalues().reverse();
    const int n = grid.count();
    out.values.resize(n, n);
    scan_manifold(g, model->probes, grid, [&](int ia, int iz, const double *mags) {
        out.values(ia, iz) = model->from_mags(mags);
    });
    out.model = std::move(model);

    auto &ops = op_counters();
    const auto um = static_cast<std::uint64_t>(m);
    ops.eigen += um * um * um;
    ops.spectrum_scan += static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n) * (um + 1) *
                         (um - static_cast<std::uint64_t>(sources));
    return out;
}

// ------------------------------------------------------------------------
// Peak picking

struct Peak
{
    Doa doa;
    double value = 0.0;
};

struct PeakSet
{
    std::vector<Peak> peaks;
    bool padded = false; // fewer strict local maxima than requested

    std::vector<Doa> doas() const
    {
        std::vector<Doa> out;
        for (const auto &p : peaks)
            out.push_back(p.doa);
        return out;
    }
};

namespace detail
{
/// Picks `count` strict local maxima by value (ties: lowest linear index), padding from
/// the global ranking when too few exist. `neighbours(idx, out)` lists neighbour indices;
/// `eligible(idx)` filters nodes.
template <typename Neighbours, typename Eligible>
std::vector<std::pair<Eigen::Index, bool>> pick_maxima(const Eigen::MatrixXd &v, int count, Neighbours &&neighbours,
                                                       Eligible &&eligible)
{
    std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return v(a) > v(b); });

    std::vector<std::pair<Eigen::Index, bool>> out;
    std::vector<Eigen::Index> nb;
    for (auto idx : order)
    {
        if (static_cast<int>(out.size()) == count)
            break;
        if (!eligible(idx))
            continue;
        nb.clear();
        neighbours(idx, nb);
        bool strict = true;
        for (auto j : nb)
            if (eligible(j) && !(v(idx) > v(j)))
            {
                strict = false;
                break;
            }
        if (strict)
            out.emplace_back(idx, false);
    }
    for (auto idx : order)
    {
        if (static_cast<int>(out.size()) >= count)
            break;
        if (!eligible(idx))
            continue;
        if (std::none_of(out.begin(), out.end(), [&](const auto &p) { return p.first == idx; }))
            out.emplace_back(idx, true);
    }
    return out;
}
} // namespace detail

/// Strict 8-neighbour local maxima of the spectrum, strongest first.
inline PeakSet music_peaks(const MusicSpectrum &spec, int count)
{
    if (count < 1)
        fail(ErrorKind::Domain, "peak count must be positive");
    const Eigen::Index n = spec.values.rows();
    auto neighbours = [n](Eigen::Index idx, std::vector<Eigen::Index> &out) {
        const Eigen::Index r = idx % n, c = idx / n;
        for (Eigen::Index dc = -1; dc <= 1; ++dc)
            for (Eigen::Index dr = -1; dr <= 1; ++dr)
            {
                if (!dr && !dc)
                    continue;
                const Eigen::Index rr = r + dr, cc = c + dc;
                if (rr >= 0 && rr < n && cc >= 0 && cc < n)
                    out.push_back(cc * n + rr);
            }
    };
    PeakSet out;
    for (auto [idx, pad] : detail::pick_maxima(spec.values, count, neighbours, [](Eigen::Index) { return true; }))
    {
        const int ia = static_cast<int>(idx % n), iz = static_cast<int>(idx / n);
        out.peaks.push_back({spec.doa(ia, iz), spec.values(ia, iz)});
        out.padded = out.padded || pad;
    }
    return out;
}

namespace detail
{
template <typename F>
double golden_max(F &&f, double lo, double hi, double tol)
{
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol)
    {
        if (fc > fd)
            b = d, d = c, fd = fc, c = b - r * (b - a), fc = f(c);
        else
            a = c, c = d, fc = fd, d = a + r * (b - a), fd = f(d);
    }
    return 0.5 * (a + b);
}
} // namespace detail

/// Refines a peak by alternating golden-section searches within one grid step on each axis.
inline Peak refine_peak(const std::function<double(const Doa &)> &f, Peak p, double step_deg, double tol_deg = 1e-4)
{
    for (int round = 0; round < 3; ++round)
    {
        const Doa cur = p.doa;
        p.doa.azimuth_deg = detail::golden_max(
            [&](double az) { return f({az, cur.zenith_deg}); }, std::max(0.0, cur.azimuth_deg - step_deg),
            std::min(180.0, cur.azimuth_deg + step_deg), tol_deg);
        const double az = p.doa.azimuth_deg;
        p.doa.zenith_deg = detail::golden_max(
            [&](double zen) { return f({az, zen}); }, std::max(0.0, cur.zenith_deg - step_deg),
            std::min(180.0, cur.zenith_deg + step_deg), tol_deg);
    }
    p.value = f(p.doa);
    return p;
}

inline PeakSet refine_peaks(const MusicSpectrum &spec, PeakSet peaks)
{
    auto f = [&](const Doa &d) { return spec.model->evaluate(d); };
    for (auto &p : peaks.peaks)
    {
        const Peak start = p;
        p = refine_peak(f, p, spec.grid.step_deg);
        if (p.value < start.value)
            p = start;
    }
    return peaks;
}

/// MUSIC with a `subspace`-dimensional signal subspace, returning the `count` strongest refined peaks.
inline PeakSet music_doas(const CMat &r, int subspace, int count, const ArrayGeometry &g, const AngleGrid &grid,
                          const ZfProjector *projector = nullptr, bool refine = true,
                          ScanModel scan = ScanModel::GainWeighted)
{
    const auto spec = music_spectrum(r, subspace, g, grid, projector, scan);
    auto peaks = music_peaks(spec, count);
    return refine ? refine_peaks(spec, std::move(peaks)) : peaks;
}

// ------------------------------------------------------------------------
// Spatial FFT beamforming

struct FftDoaResult
{
    int fft_size = 0;
    Eigen::MatrixXd power; // rows: horizontal frequency bin, columns: vertical frequency bin
    PeakSet peaks;
};

/// Spatial frequency of FFT bin k, wrapped to [-0.5, 0.5).
inline double fft_bin_frequency(int k, int size) { return (k < (size + 1) / 2 ? k : k - size) / double(size); }

inline Doa doa_from_frequency(const ArrayGeometry &g, SpatialFrequency f)
{
    const double s = g.spacing_over_lambda;
    const double zen = std::acos(std::clamp(f.v / s, -1.0, 1.0));
    const double sz = std::sin(zen);
    const double az = sz > 1e-12 ? std::acos(std::clamp(f.u / (s * sz), -1.0, 1.0)) : kPi / 2.0;
    return {rad2deg(az), rad2deg(zen)};
}

/// Snapshot-averaged 2D zero-padded DFT beam power, |a^H y|^2 averaged over columns of y.
///
/// With a projector, the power is divided by the retained share of each steering vector
/// and directions retaining less than `gain_floor` are zeroed. Peaks are strict local
/// maxima inside the visible region.
inline FftDoaResult fft_doa(const CMat &y, const ArrayGeometry &g, int fft_size, int count,
                            const ZfProjector *projector = nullptr, double gain_floor = 1e-2)
{
    g.validate();
    if (y.rows() != g.elements())
        fail(ErrorKind::Domain, "snapshot rows ", y.rows(), " do not match ", g.elements(), " array elements");
    if (fft_size < std::max(g.mx, g.mz))
        fail(ErrorKind::Domain, "FFT size ", fft_size, " smaller than the array dimension");
    if (y.cols() == 0)
        fail(ErrorKind::Domain, "no snapshots");
    if (count < 1)
        fail(ErrorKind::Domain, "peak count must be positive");

    // Average power equals sum_i w_i |DFT(v_i)|^2 over any factorisation R = sum_i w_i v_i v_i^H.
    std::vector<std::pair<double, CVec>> terms;
    if (y.cols() <= y.rows())
        for (Eigen::Index c = 0; c < y.cols(); ++c)
            terms.emplace_back(1.0 / static_cast<double>(y.cols()), y.col(c));
    else
    {
        const CMat r = covariance(y);
        Eigen::SelfAdjointEigenSolver<CMat> eig(r);
        const double top = eig.eigenvalues().maxCoeff();
        for (Eigen::Index i = 0; i < r.rows(); ++i)
            if (eig.eigenvalues()(i) > 1e-14 * top)
                terms.emplace_back(eig.eigenvalues()(i), eig.eigenvectors().col(i));
    }

    const int f = fft_size;
    FftDoaResult out;
    out.fft_size = f;
    out.power = Eigen::MatrixXd::Zero(f, f);
    Eigen::FFT<double> fft;
    std::vector<cd> line(static_cast<std::size_t>(f)), spec;
    std::vector<std::vector<cd>> rows(static_cast<std::size_t>(g.mx));
    for (const auto &[w, v] : terms)
    {
        for (int x = 0; x < g.mx; ++x)
        {
            std::fill(line.begin(), line.end(), cd(0.0));
            for (int z = 0; z < g.mz; ++z)
                line[z] = v(x * g.mz + z);
            fft.fwd(rows[x], line);
        }
        for (int kv = 0; kv < f; ++kv)
        {
            std::fill(line.begin(), line.end(), cd(0.0));
            for (int x = 0; x < g.mx; ++x)
                line[x] = rows[x][kv];
            fft.fwd(spec, line);
            for (int ku = 0; ku < f; ++ku)
                out.power(ku, kv) += w * std::norm(spec[ku]);
        }
    }

    const double s = g.spacing_over_lambda;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> visible(f, f);
    for (int ku = 0; ku < f; ++ku)
        for (int kv = 0; kv < f; ++kv)
        {
            const double u = fft_bin_frequency(ku, f), v = fft_bin_frequency(kv, f);
            visible(ku, kv) = u * u + v * v <= s * s * (1.0 + 1e-12);
            if (projector && projector->basis.cols() > 0)
            {
                const double kept = projector->retained_fraction(steering_from_frequency(g, {u, v}));
                out.power(ku, kv) = kept < gain_floor ? 0.0 : out.power(ku, kv) / kept;
            }
        }

    auto neighbours = [f](Eigen::Index idx, std::vector<Eigen::Index> &nb) {
        const int ku = static_cast<int>(idx % f), kv = static_cast<int>(idx / f);
        for (int dv = -1; dv <= 1; ++dv)
            for (int du = -1; du <= 1; ++du)
                if (du || dv)
                    nb.push_back(static_cast<Eigen::Index>((kv + dv + f) % f) * f + (ku + du + f) % f);
    };
    for (auto [idx, pad] : detail::pick_maxima(out.power, count, neighbours,
                                               [&](Eigen::Index i) { return visible(i); }))
    {
        const int ku = static_cast<int>(idx % f), kv = static_cast<int>(idx / f);
        out.peaks.peaks.push_back(
            {doa_from_frequency(g, {fft_bin_frequency(ku, f), fft_bin_frequency(kv, f)}), out.power(ku, kv)});
        out.peaks.padded = out.peaks.padded || pad;
    }

    const auto nfft = static_cast<std::uint64_t>(f) * static_cast<std::uint64_t>(f);
    op_counters().spatial_fft += static_cast<std::uint64_t>(y.cols()) * (nfft + detail::half_n_log2n(nfft));
    return out;
}

// ------------------------------------------------------------------------
// Delay-Doppler periodogram

enum class Window
{
    Rect,
    Hann,
};

inline std::vector<double> window_taps(Window w, int n)
{
    std::vector<double> t(static_cast<std::size_t>(n), 1.0);
    if (w == Window::Hann)
        for (int i = 0; i < n; ++i)
        {
            const double s = std::sin(kPi * (i + 1) / (n + 1));
            t[i] = s * s;
        }
    return t;
}

/// Per-antenna periodogram over (delay bin, Doppler bin). The complex transform is kept so
/// that spatial snapshots can be read out at any bin.
struct DelayDopplerSpectrum
{
    int antennas = 0, n_tau = 0, n_fd = 0, n_sc = 0, n_sym = 0;
    double delta_f_hz = 0.0, t_s = 0.0;
    std::vector<cd> data;   // index ((m * n_fd) + j) * n_tau + i
    Eigen::MatrixXd summed; // sum over antennas of the scaled magnitude, n_tau x n_fd

    cd complex_at(int m, int i, int j) const
    {
        return data[(static_cast<std::size_t>(m) * n_fd + j) * n_tau + i];
    }
    double magnitude(int m, int i, int j) const
    {
        return std::norm(complex_at(m, i, j)) / (static_cast<double>(n_sc) * n_sym);
    }
    CVec snapshot(int i, int j) const
    {
        CVec out(antennas);
        for (int m = 0; m < antennas; ++m)
            out(m) = complex_at(m, i, j);
        return out;
    }
    double delay_of_bin(double i) const { return i / (delta_f_hz * n_tau); }
    double doppler_of_bin(double j) const
    {
        return (j > n_fd / 2.0 ? j - n_fd : j) / (t_s * n_fd);
    }
};

/// Inverse DFT over subcarriers (zero-padded to n_tau) and forward DFT over symbols
/// (zero-padded to n_fd), both unscaled. Symbols before the tensor's first valid symbol
/// are zeroed.
inline DelayDopplerSpectrum delay_doppler(const ReceivedTensor &t, int n_tau, int n_fd, Window window = Window::Rect)
{
    const int nsc = t.ofdm.n_sc, nsym = t.ofdm.n_sym, m_total = t.antennas();
    if (n_tau < nsc || n_fd < nsym)
        fail(ErrorKind::Domain, "transform sizes ", n_tau, "x", n_fd, " smaller than the grid ", nsc, "x", nsym);

    DelayDopplerSpectrum out;
    out.antennas = m_total;
    out.n_tau = n_tau;
    out.n_fd = n_fd;
    out.n_sc = nsc;
    out.n_sym = nsym;
    out.delta_f_hz = t.ofdm.delta_f_hz;
    out.t_s = t.ofdm.t_s();
    out.data.assign(static_cast<std::size_t>(m_total) * n_tau * n_fd, cd(0.0));
    out.summed = Eigen::MatrixXd::Zero(n_tau, n_fd);

    const auto w_sc = window_taps(window, nsc), w_sym = window_taps(window, nsym);
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    std::vector<cd> in_tau(static_cast<std::size_t>(n_tau)), out_tau, in_fd(static_cast<std::size_t>(n_fd)), out_fd;
    CMat stage(n_tau, nsym);
    const double scale = 1.0 / (static_cast<double>(nsc) * nsym);
    for (int m = 0; m < m_total; ++m)
    {
        for (int s = 0; s < nsym; ++s)
        {
            std::fill(in_tau.begin(), in_tau.end(), cd(0.0));
            if (s >= t.first_valid_symbol)
                for (int n = 0; n < nsc; ++n)
                    in_tau[n] = t.at(m, n, s) * w_sc[n] * w_sym[s];
            fft.inv(out_tau, in_tau);
            for (int i = 0; i < n_tau; ++i)
                stage(i, s) = out_tau[i];
        }
        for (int i = 0; i < n_tau; ++i)
        {
            std::fill(in_fd.begin(), in_fd.end(), cd(0.0));
            for (int s = 0; s < nsym; ++s)
                in_fd[s] = stage(i, s);
            fft.fwd(out_fd, in_fd);
            for (int j = 0; j < n_fd; ++j)
            {
                out.data[(static_cast<std::size_t>(m) * n_fd + j) * n_tau + i] = out_fd[j];
                out.summed(i, j) += std::norm(out_fd[j]) * scale;
            }
        }
    }

    auto &ops = op_counters();
    const auto um = static_cast<std::uint64_t>(m_total), ut = static_cast<std::uint64_t>(n_tau),
               uf = static_cast<std::uint64_t>(n_fd);
    ops.delay_doppler += um * (static_cast<std::uint64_t>(nsym) * detail::half_n_log2n(ut) +
                               ut * detail::half_n_log2n(uf) + ut * uf);
    ++ops.delay_doppler_runs;
    return out;
}

struct GroupingConfig
{
    double rel_threshold_db = -10.0;  // class region: connected cells within this of the class peak
    std::optional<double> noise_margin_db; // stop below median + margin; unset: derived from false_alarm
    double false_alarm = 1e-6;        // per-cell probability used to derive the margin
    int channels = 0;                 // independent noise channels summed in the map; 0: all antennas
    double dynamic_range_db = 30.0;   // stop below strongest class + this (negative of)
    double guard_native_bins = 2.0;   // candidates this close to an accepted class are sidelobes
    int max_classes = 8;
};

/// Ratio, in dB, between the (1 - pfa) quantile and the median of a chi-square variable with
/// `dof` degrees of freedom (Wilson-Hilferty approximation). Noise in a map summed over K
/// complex channels follows a scaled chi-square with 2K degrees of freedom.
inline double chi_square_margin_db(int dof, double pfa)
{
    if (dof < 1 || !(pfa > 0.0 && pfa < 0.5))
        fail(ErrorKind::Domain, "chi-square margin needs dof >= 1 and pfa in (0, 0.5)");
    // Upper-tail normal quantile by bisection on erfc.
    double lo = 0.0, hi = 40.0;
    for (int it = 0; it < 200; ++it)
    {
        const double mid = 0.5 * (lo + hi);
        (0.5 * std::erfc(mid / std::sqrt(2.0)) > pfa ? lo : hi) = mid;
    }
    const double z = 0.5 * (lo + hi), k = dof, c = 2.0 / (9.0 * k);
    const double q = std::pow(1.0 - c + z * std::sqrt(c), 3.0);
    const double med = std::pow(1.0 - c, 3.0);
    return 10.0 * std::log10(q / med);
}

struct DdClass
{
    int delay_bin = 0;
    int doppler_bin = 0;
    double delay_s = 0.0;
    double doppler_hz = 0.0;
    double peak_power = 0.0;
    std::vector<Eigen::Index> cells;
};

/// Iterative peak extraction on the antenna-summed map with 4-connected flood fill.
inline std::vector<DdClass> dd_peaks_and_group(const DelayDopplerSpectrum &spec, const GroupingConfig &cfg = {})
{
    if (spec.summed.size() == 0)
        fail(ErrorKind::Domain, "empty delay-Doppler spectrum");
    if (!(cfg.rel_threshold_db < 0.0))
        fail(ErrorKind::Domain, "relative threshold must be negative");

    const Eigen::MatrixXd &map = spec.summed;
    const int nt = spec.n_tau, nf = spec.n_fd;
    std::vector<double> sorted(map.data(), map.data() + map.size());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    const double margin_db =
        cfg.noise_margin_db ? *cfg.noise_margin_db
                            : chi_square_margin_db(2 * (cfg.channels > 0 ? cfg.channels : spec.antennas), cfg.false_alarm);
    const double floor = sorted[sorted.size() / 2] * std::pow(10.0, margin_db / 10.0);

    const double guard_t = cfg.guard_native_bins * nt / spec.n_sc, guard_f = cfg.guard_native_bins * nf / spec.n_sym;
    auto wrap_dist = [](int a, int b, int n) {
        const int d = std::abs(a - b) % n;
        return std::min(d, n - d);
    };

    std::vector<char> masked(static_cast<std::size_t>(map.size()), 0);
    std::vector<DdClass> classes;
    double strongest = 0.0;
    while (static_cast<int>(classes.size()) < cfg.max_classes)
    {
        Eigen::Index best = -1;
        for (Eigen::Index k = 0; k < map.size(); ++k)
            if (!masked[k] && (best < 0 || map(k) > map(best)))
                best = k;
        if (best < 0)
            break;
        const double peak = map(best);
        if (!(peak > floor) || (strongest > 0.0 && peak < strongest * std::pow(10.0, -cfg.dynamic_range_db / 10.0)))
            break;

        DdClass c;
        c.delay_bin = static_cast<int>(best % nt);
        c.doppler_bin = static_cast<int>(best / nt);
        c.peak_power = peak;
        c.delay_s = spec.delay_of_bin(c.delay_bin);
        c.doppler_hz = spec.doppler_of_bin(c.doppler_bin);
        const double thr = peak * std::pow(10.0, cfg.rel_threshold_db / 10.0);
        std::queue<Eigen::Index> q;
        q.push(best);
        masked[best] = 1;
        while (!q.empty())
        {
            const Eigen::Index k = q.front();
            q.pop();
            c.cells.push_back(k);
            const int i = static_cast<int>(k % nt), j = static_cast<int>(k / nt);
            const Eigen::Index nbs[4] = {static_cast<Eigen::Index>(j) * nt + (i + 1) % nt,
                                         static_cast<Eigen::Index>(j) * nt + (i + nt - 1) % nt,
                                         static_cast<Eigen::Index>((j + 1) % nf) * nt + i,
                                         static_cast<Eigen::Index>((j + nf - 1) % nf) * nt + i};
            for (auto nb : nbs)
                if (!masked[nb] && map(nb) >= thr)
                {
                    masked[nb] = 1;
                    q.push(nb);
                }
        }
        const bool sidelobe = std::any_of(classes.begin(), classes.end(), [&](const DdClass &o) {
            return wrap_dist(o.delay_bin, c.delay_bin, nt) <= guard_t &&
                   wrap_dist(o.doppler_bin, c.doppler_bin, nf) <= guard_f;
        });
        if (sidelobe)
            continue;
        strongest = std::max(strongest, peak);
        classes.push_back(std::move(c));
    }
    return classes;
}

// ------------------------------------------------------------------------
// Baselines

struct SequentialResult
{
    std::vector<Doa> doas;
    bool partial = false;
    std::string error;
};

/// Greedy estimate-and-null: each round nulls all earlier estimates and keeps the
/// strongest MUSIC peak of the remaining data.
inline SequentialResult sequential_zf_music(const CMat &y, const ArrayGeometry &g, int total_paths,
                                            const AngleGrid &grid)
{
    if (total_paths < 1)
        fail(ErrorKind::Domain, "path count must be positive");
    SequentialResult out;
    for (int k = 0; k < total_paths; ++k)
    {
        try
        {
            const auto proj = zf_build(g, out.doas);
            const CMat r = covariance(zf_apply(proj, y));
            const auto peaks = music_doas(r, total_paths - k, 1, g, grid, &proj);
            out.doas.push_back(peaks.peaks.front().doa);
        }
        catch (const Error &e)
        {
            if (e.kind() != ErrorKind::Projector)
                throw;
            out.partial = true;
            out.error = e.what();
            break;
        }
    }
    return out;
}

/// Forward spatial smoothing over all subarrays of the given size.
inline CMat smoothed_covariance(const CMat &r, const ArrayGeometry &g, int sub_mx, int sub_mz)
{
    if (sub_mx < 1 || sub_mz < 1 || sub_mx > g.mx || sub_mz > g.mz)
        fail(ErrorKind::Domain, "subarray ", sub_mx, "x", sub_mz, " does not fit the ", g.mx, "x", g.mz, " array");
    const int sub = sub_mx * sub_mz;
    CMat out = CMat::Zero(sub, sub);
    int count = 0;
    std::vector<int> idx(static_cast<std::size_t>(sub));
    for (int ox = 0; ox + sub_mx <= g.mx; ++ox)
        for (int oz = 0; oz + sub_mz <= g.mz; ++oz)
        {
            for (int x = 0; x < sub_mx; ++x)
                for (int z = 0; z < sub_mz; ++z)
                    idx[x * sub_mz + z] = (ox + x) * g.mz + oz + z;
            for (int a = 0; a < sub; ++a)
                for (int b = 0; b < sub; ++b)
                    out(a, b) += r(idx[a], idx[b]);
            ++count;
        }
    return out / static_cast<double>(count);
}

/// MUSIC on the spatially smoothed covariance; subarray defaults to half the array per axis.
inline PeakSet spatial_smoothing_music(const CMat &y, const ArrayGeometry &g, int subspace, int count,
                                       const AngleGrid &grid, int sub_mx = 0, int sub_mz = 0)
{
    sub_mx = sub_mx > 0 ? sub_mx : std::max(1, (g.mx + 1) / 2);
    sub_mz = sub_mz > 0 ? sub_mz : std::max(1, (g.mz + 1) / 2);
    if (sub_mx * sub_mz <= subspace)
        fail(ErrorKind::Domain, "subarray ", sub_mx, "x", sub_mz, " too small for ", subspace, " sources");
    ArrayGeometry sub = g;
    sub.mx = sub_mx;
    sub.mz = sub_mz;
    return music_doas(smoothed_covariance(covariance(y), g, sub_mx, sub_mz), subspace, count, sub, grid);
}

} // namespace clamsense
