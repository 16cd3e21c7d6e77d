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

#include <unsupported/Eigen/FFT>

namespace clamsense
{

// ------------------------------------------------------------------------
// Moving-target indication

/// FIR canceller applied across OFDM symbols: out[s] = sum_k coeffs[k] * in[s - k].
struct MtiFilter
{
    std::vector<double> coeffs;
    double interval_s = 0.0;

    int order() const { return static_cast<int>(coeffs.size()) - 1; }
};

/// N-th order binomial canceller, coefficients (-1)^n C(N, n).
inline MtiFilter mti_design(int order, double interval_s)
{
    if (order < 1)
        fail(ErrorKind::Domain, "MTI order must be at least 1, got ", order);
    if (!(interval_s > 0.0))
        fail(ErrorKind::Domain, "MTI interval must be positive");
    MtiFilter f;
    f.interval_s = interval_s;
    double c = 1.0;
    for (int n = 0; n <= order; ++n)
    {
        f.coeffs.push_back((n % 2 ? -1.0 : 1.0) * c);
        c = c * (order - n) / (n + 1);
    }
    return f;
}

inline cd mti_response(const MtiFilter &f, double freq_hz)
{
    cd h = 0.0;
    for (std::size_t n = 0; n < f.coeffs.size(); ++n)
        h += f.coeffs[n] * std::polar(1.0, -2.0 * kPi * freq_hz * static_cast<double>(n) * f.interval_s);
    return h;
}

/// Lowest frequency in [0, 1/(2T)] where |H| reaches 1/sqrt(2) of its maximum on that band.
inline double mti_cutoff_hz(const MtiFilter &f)
{
    const double nyq = 0.5 / f.interval_s;
    const int samples = 4096;
    double peak = 0.0;
    for (int i = 0; i <= samples; ++i)
        peak = std::max(peak, std::abs(mti_response(f, nyq * i / samples)));
    const double level = peak / std::sqrt(2.0);
    for (int i = 1; i <= samples; ++i)
    {
        double lo = nyq * (i - 1) / samples, hi = nyq * i / samples;
        if (std::abs(mti_response(f, hi)) < level)
            continue;
        for (int it = 0; it < 80; ++it)
        {
            const double mid = 0.5 * (lo + hi);
            (std::abs(mti_response(f, mid)) < level ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }
    return nyq;
}

/// Filters along the symbol axis with zero history. The first `order` output symbols are
/// marked invalid for downstream estimation.
inline ReceivedTensor mti_apply(const ReceivedTensor &in, const MtiFilter &f)
{
    ReceivedTensor out = in;
    const int nsc = in.ofdm.n_sc;
    out.data.setZero();
    for (int s = 0; s < in.ofdm.n_sym; ++s)
        for (int k = 0; k <= f.order() && k <= s; ++k)
            out.data.middleCols(static_cast<Eigen::Index>(s) * nsc, nsc) +=
                f.coeffs[static_cast<std::size_t>(k)] * in.data.middleCols(static_cast<Eigen::Index>(s - k) * nsc, nsc);
    out.first_valid_symbol = std::min(in.ofdm.n_sym, in.first_valid_symbol + f.order());
    return out;
}

/// Time and frequency series of a first-order canceller acting on a static pulse train
/// plus a Doppler-shifted copy.
struct MtiDemo
{
    std::vector<double> time_s, input_mag, output_mag;
    std::vector<double> freq_hz, input_spectrum, output_spectrum, filter_gain;
    double cutoff_hz = 0.0;
};

inline MtiDemo mti_demo(double interval_s = 10e-3, double doppler_hz = 20.0, double sample_rate_hz = 2000.0,
                        double duration_s = 0.5, double pulse_width_s = 1e-3)
{
    const auto filter = mti_design(1, interval_s);
    const int n = static_cast<int>(std::lround(duration_s * sample_rate_hz));
    const int lag = static_cast<int>(std::lround(interval_s * sample_rate_hz));
    auto pulse = [&](double t) { return std::fmod(t, interval_s) < pulse_width_s ? 1.0 : 0.0; };

    std::vector<cd> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
    MtiDemo d;
    d.cutoff_hz = mti_cutoff_hz(filter);
    for (int i = 0; i < n; ++i)
    {
        const double t = i / sample_rate_hz;
        in[i] = pulse(t) * (1.0 + std::polar(1.0, 2.0 * kPi * doppler_hz * t));
    }
    for (int i = 0; i < n; ++i)
    {
        out[i] = in[i] - (i >= lag ? in[i - lag] : cd(0.0));
        d.time_s.push_back(i / sample_rate_hz);
        d.input_mag.push_back(std::abs(in[i]));
        d.output_mag.push_back(std::abs(out[i]));
    }

    Eigen::FFT<double> fft;
    std::vector<cd> in_f, out_f;
    fft.fwd(in_f, in);
    fft.fwd(out_f, out);
    for (int k = 0; k < n; ++k)
    {
        // Centre the spectrum on zero frequency.
        const int idx = (k + n / 2) % n;
        const double f = (idx < (n + 1) / 2 ? idx : idx - n) * sample_rate_hz / n;
        d.freq_hz.push_back(f);
        d.input_spectrum.push_back(std::abs(in_f[idx]) / n);
        d.output_spectrum.push_back(std::abs(out_f[idx]) / n);
        d.filter_gain.push_back(std::abs(mti_response(filter, f)));
    }
    return d;
}

// ------------------------------------------------------------------------
// Zero-forcing spatial projection

/// Orthogonal projector onto the complement of a set of steering vectors, normalised to
/// unit Frobenius norm.
struct ZfProjector
{
    ArrayGeometry array;
    std::vector<Doa> nulls;
    CMat basis; // orthonormal basis of the nulled subspace
    CMat w_bar;
    double fro_norm = 0.0; // Frobenius norm of the unnormalised projector

    /// Share of a vector's energy that survives the projection.
    double retained_fraction(const CVec &a) const
    {
        const double e = a.squaredNorm();
        if (basis.cols() == 0 || e == 0.0)
            return 1.0;
        return std::max(0.0, 1.0 - (basis.adjoint() * a).squaredNorm() / e);
    }
};

inline ZfProjector zf_build(const ArrayGeometry &g, const std::vector<Doa> &doas, double condition_cap = 1e10)
{
    g.validate();
    const int m = g.elements();
    const auto k = static_cast<Eigen::Index>(doas.size());
    if (k >= m)
        fail(ErrorKind::Projector, "cannot null ", k, " directions with ", m, " elements");

    ZfProjector p;
    p.array = g;
    p.nulls = doas;
    if (k == 0)
        p.basis = CMat(m, 0);
    else
    {
        const CMat c = steering_matrix(g, doas);
        // Most coherent pair, reported when the Gram matrix is singular or ill-conditioned.
        double worst = -1.0;
        std::size_t wi = 0, wj = 0;
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = i + 1; j < k; ++j)
            {
                const double coh = std::abs(c.col(i).dot(c.col(j))) / m;
                if (coh > worst)
                    worst = coh, wi = static_cast<std::size_t>(i), wj = static_cast<std::size_t>(j);
            }
        if (k > 1 && worst > 1.0 - 1e-12)
            fail(ErrorKind::Projector, "duplicate null directions ", wi, " ", to_string(doas[wi]), " and ", wj, " ",
                 to_string(doas[wj]));
        Eigen::JacobiSVD<CMat> svd(c);
        const auto &sv = svd.singularValues();
        const double smin = sv(sv.size() - 1);
        const double cond = smin > 0.0 ? (sv(0) / smin) * (sv(0) / smin) : std::numeric_limits<double>::infinity();
        if (!(cond <= condition_cap))
            fail(ErrorKind::Projector, "null directions are ill-conditioned (Gram condition ", cond, " > ",
                 condition_cap, "); most coherent pair ", wi, " ", to_string(doas[wi]), " and ", wj, " ",
                 to_string(doas[wj]));
        Eigen::HouseholderQR<CMat> qr(c);
        p.basis = qr.householderQ() * CMat::Identity(m, k);
    }
    CMat w = CMat::Identity(m, m) - p.basis * p.basis.adjoint();
    p.fro_norm = w.norm();
    p.w_bar = w / p.fro_norm;

    auto &ops = op_counters();
    const auto uk = static_cast<std::uint64_t>(k), um = static_cast<std::uint64_t>(m);
    ops.projector_build += uk * (um + uk) * (um + uk);
    ++ops.projector_builds;
    return p;
}

inline CMat zf_apply(const ZfProjector &p, const CMat &y)
{
    if (y.rows() != p.w_bar.cols())
        fail(ErrorKind::Domain, "snapshot rows ", y.rows(), " do not match projector size ", p.w_bar.cols());
    const auto m = static_cast<std::uint64_t>(y.rows());
    op_counters().projection += m * m * static_cast<std::uint64_t>(y.cols());
    return p.w_bar * y;
}

inline ReceivedTensor zf_apply(const ZfProjector &p, const ReceivedTensor &t)
{
    ReceivedTensor out = t;
    out.data = zf_apply(p, t.data);
    return out;
}

} // namespace clamsense
