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

#include "scene.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>

namespace clamsense
{

struct OfdmParams
{
    int n_sc = 128;
    int n_sym = 32;
    double delta_f_hz = 30e3;
    double t_cp_s = 9.375e-6;

    double t_sym_s() const { return 1.0 / delta_f_hz; }
    double t_s() const { return t_sym_s() + t_cp_s; }
    double bandwidth_hz() const { return n_sc * delta_f_hz; }

    void validate() const
    {
        if (n_sc < 1 || n_sym < 1)
            fail(ErrorKind::Precondition, "OFDM grid must have at least one subcarrier and symbol");
        if (!(delta_f_hz > 0.0) || !(t_cp_s >= 0.0))
            fail(ErrorKind::Precondition, "subcarrier spacing must be positive and CP non-negative");
    }

    /// 28 GHz numerology: 1024 subcarriers, 100 symbols, 30 kHz spacing, 288-sample CP at 30.72 MHz.
    static OfdmParams full()
    {
        return {1024, 100, 30e3, 288.0 / 30.72e6};
    }
    /// Reduced grid for fast runs; same spacing and CP length.
    static OfdmParams desk()
    {
        return {128, 32, 30e3, 288.0 / 30.72e6};
    }
};

/// Every path delay must fit inside the cyclic prefix.
inline void check_delays_within_cp(const std::vector<PathParams> &paths, const OfdmParams &ofdm)
{
    for (std::size_t k = 0; k < paths.size(); ++k)
        if (paths[k].delay_s > ofdm.t_cp_s)
            fail(ErrorKind::Precondition, "path ", k, " delay ", paths[k].delay_s * 1e6,
                 " us exceeds the cyclic prefix ", ofdm.t_cp_s * 1e6, " us (delay <= T_CP)");
}

/// Received frequency-domain samples. Stored as an M x (N_sc * N_sym) snapshot matrix
/// whose column p = symbol * N_sc + subcarrier.
struct ReceivedTensor
{
    CMat data;
    ArrayGeometry array;
    OfdmParams ofdm;
    int first_valid_symbol = 0; // leading symbols corrupted by a recursive filter
    double signal_power = 0.0;  // mean noiseless power per entry
    double noise_variance = 0.0;

    int antennas() const { return static_cast<int>(data.rows()); }
    Eigen::Index column(int subcarrier, int symbol) const
    {
        return static_cast<Eigen::Index>(symbol) * ofdm.n_sc + subcarrier;
    }
    cd at(int m, int subcarrier, int symbol) const { return data(m, column(subcarrier, symbol)); }

    /// Snapshot columns that survive the filter warm-up.
    auto valid_snapshots() const
    {
        const Eigen::Index start = static_cast<Eigen::Index>(first_valid_symbol) * ofdm.n_sc;
        return data.rightCols(data.cols() - start);
    }
};

inline CMat snapshot_matrix(const ReceivedTensor &t) { return t.data; }

inline ReceivedTensor tensor_from_snapshots(CMat y, const ArrayGeometry &g, const OfdmParams &ofdm)
{
    if (y.rows() != g.elements() || y.cols() != static_cast<Eigen::Index>(ofdm.n_sc) * ofdm.n_sym)
        fail(ErrorKind::Domain, "snapshot matrix shape ", y.rows(), "x", y.cols(), " does not match ",
             g.elements(), "x", ofdm.n_sc * ofdm.n_sym);
    ReceivedTensor t;
    t.data = std::move(y);
    t.array = g;
    t.ofdm = ofdm;
    return t;
}

/// Noiseless superposition of the given paths plus optional complex white noise.
///
/// Noise variance per entry is the mean noiseless power divided by 10^(snr/10); an empty
/// path list uses unit reference power. The generator is seeded with `seed` only.
inline ReceivedTensor synthesize(const std::vector<PathParams> &paths, const OfdmParams &ofdm, const ArrayGeometry &g,
                                 std::optional<double> snr_db, std::uint64_t seed)
{
    g.validate();
    ofdm.validate();
    if (paths.empty() && !snr_db)
        fail(ErrorKind::Domain, "nothing to synthesize: no paths and no noise");
    check_delays_within_cp(paths, ofdm);

    const int m = g.elements();
    const Eigen::Index p_total = static_cast<Eigen::Index>(ofdm.n_sc) * ofdm.n_sym;
    ReceivedTensor t;
    t.array = g;
    t.ofdm = ofdm;
    t.data = CMat::Zero(m, p_total);

    CVec time_freq(p_total);
    for (const auto &path : paths)
    {
        check_doa(path.doa);
        const CVec a = path.gain * steering_vector(g, path.doa);
        for (int s = 0; s < ofdm.n_sym; ++s)
        {
            const cd dop = std::polar(1.0, 2.0 * kPi * path.doppler_hz * (s * ofdm.t_s() + ofdm.t_cp_s));
            for (int n = 0; n < ofdm.n_sc; ++n)
                time_freq(s * ofdm.n_sc + n) = dop * std::polar(1.0, -2.0 * kPi * n * ofdm.delta_f_hz * path.delay_s);
        }
        t.data.noalias() += a * time_freq.transpose();
    }

    t.signal_power = paths.empty() ? 0.0 : t.data.squaredNorm() / static_cast<double>(t.data.size());
    if (snr_db)
    {
        const double ref = paths.empty() ? 1.0 : t.signal_power;
        t.noise_variance = ref / std::pow(10.0, *snr_db / 10.0);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, std::sqrt(t.noise_variance / 2.0));
        for (Eigen::Index c = 0; c < t.data.cols(); ++c)
            for (int r = 0; r < m; ++r)
            {
                const double re = normal(rng);
                const double im = normal(rng);
                t.data(r, c) += cd(re, im);
            }
    }
    return t;
}

// ------------------------------------------------------------------------
// Binary dump: one ASCII header line, then little-endian float64 pairs (re, im),
// first index fastest.

namespace detail
{
inline void write_le_doubles(std::ostream &os, const cd *data, std::size_t count)
{
    static_assert(std::endian::native == std::endian::little, "big-endian hosts need byte swapping");
    os.write(reinterpret_cast<const char *>(data), static_cast<std::streamsize>(count * sizeof(cd)));
}
} // namespace detail

/// Header: "clamsense-tensor 1 <antennas> <subcarriers> <symbols>".
inline void write_tensor(const std::string &path, const ReceivedTensor &t)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        fail(ErrorKind::Io, "cannot open ", path, " for writing");
    os << "clamsense-tensor 1 " << t.antennas() << ' ' << t.ofdm.n_sc << ' ' << t.ofdm.n_sym << '\n';
    detail::write_le_doubles(os, t.data.data(), static_cast<std::size_t>(t.data.size()));
}

/// Header: "clamsense-matrix 1 <rows> <cols>", column-major payload.
inline void write_matrix(const std::string &path, const CMat &m)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        fail(ErrorKind::Io, "cannot open ", path, " for writing");
    os << "clamsense-matrix 1 " << m.rows() << ' ' << m.cols() << '\n';
    detail::write_le_doubles(os, m.data(), static_cast<std::size_t>(m.size()));
}

/// Reads a tensor dump; array geometry and OFDM timing are not stored and must be supplied.
inline ReceivedTensor read_tensor(const std::string &path, const ArrayGeometry &g, OfdmParams ofdm)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        fail(ErrorKind::Io, "cannot open ", path);
    std::string magic;
    int version = 0, m = 0, nsc = 0, nsym = 0;
    is >> magic >> version >> m >> nsc >> nsym;
    if (magic != "clamsense-tensor" || version != 1)
        fail(ErrorKind::Io, path, " is not a tensor dump");
    is.get();
    ofdm.n_sc = nsc;
    ofdm.n_sym = nsym;
    CMat y(m, static_cast<Eigen::Index>(nsc) * nsym);
    is.read(reinterpret_cast<char *>(y.data()), static_cast<std::streamsize>(y.size() * sizeof(cd)));
    if (!is)
        fail(ErrorKind::Io, path, " is truncated");
    return tensor_from_snapshots(std::move(y), g, ofdm);
}

} // namespace clamsense
