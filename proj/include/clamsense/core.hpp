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

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace clamsense
{

inline constexpr const char *kVersion = "0.1.0";
inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = std::numbers::pi;

using cd = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Vec3 = Eigen::Vector3d;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Direction of arrival in the array frame, both angles in degrees within [0, 180].
struct Doa
{
    double azimuth_deg = 90.0;
    double zenith_deg = 90.0;

    friend bool operator==(const Doa &, const Doa &) = default;
};

enum class ErrorKind
{
    Domain,       // argument outside its mathematical domain
    Precondition, // configuration violates a modelling assumption
    Geometry,     // degenerate scene geometry
    Projector,    // ill-conditioned or duplicate null directions
    Lookup,       // position outside a map
    Estimation,   // estimator could not produce a result
    Io,           // file or format problem
};

inline const char *to_string(ErrorKind k)
{
    switch (k)
    {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::Projector: return "projector";
    case ErrorKind::Lookup: return "lookup";
    case ErrorKind::Estimation: return "estimation";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error
{
  public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

/// Builds a message from streamable parts and throws it as an Error.
template <typename... Parts>
[[noreturn]] void fail(ErrorKind kind, const Parts &...parts)
{
    std::ostringstream os;
    (os << ... << parts);
    throw Error(kind, os.str());
}

inline std::string to_string(const Doa &d)
{
    std::ostringstream os;
    os << "(" << d.azimuth_deg << ", " << d.zenith_deg << ")";
    return os.str();
}

// ------------------------------------------------------------------------
// Operation counters. Each instrumented routine charges the complex
// multiplication count of its closed-form cost model. Counters are process
// wide; reset them before a measured section.

struct OpCountSnapshot
{
    std::uint64_t covariance = 0;
    std::uint64_t projector_build = 0;
    std::uint64_t projection = 0;
    std::uint64_t eigen = 0;
    std::uint64_t spectrum_scan = 0;
    std::uint64_t delay_doppler = 0;
    std::uint64_t spatial_fft = 0;
    std::uint64_t projector_builds = 0; // number of builds, not multiplications
    std::uint64_t delay_doppler_runs = 0;

    std::uint64_t total() const
    {
        return covariance + projector_build + projection + eigen + spectrum_scan + delay_doppler + spatial_fft;
    }
};

struct OpCounters
{
    std::atomic<std::uint64_t> covariance{0};
    std::atomic<std::uint64_t> projector_build{0};
    std::atomic<std::uint64_t> projection{0};
    std::atomic<std::uint64_t> eigen{0};
    std::atomic<std::uint64_t> spectrum_scan{0};
    std::atomic<std::uint64_t> delay_doppler{0};
    std::atomic<std::uint64_t> spatial_fft{0};
    std::atomic<std::uint64_t> projector_builds{0};
    std::atomic<std::uint64_t> delay_doppler_runs{0};

    void reset()
    {
        for (auto *c : {&covariance, &projector_build, &projection, &eigen, &spectrum_scan, &delay_doppler,
                        &spatial_fft, &projector_builds, &delay_doppler_runs})
            c->store(0);
    }

    OpCountSnapshot snapshot() const
    {
        return {covariance.load(),    projector_build.load(), projection.load(),
                eigen.load(),         spectrum_scan.load(),   delay_doppler.load(),
                spatial_fft.load(),   projector_builds.load(), delay_doppler_runs.load()};
    }
};

inline OpCounters &op_counters()
{
    static OpCounters counters;
    return counters;
}

// ------------------------------------------------------------------------

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware concurrency).
/// Iterations must write to disjoint outputs; the first exception is rethrown.
template <typename Body>
void parallel_for(std::size_t n, Body &&body, unsigned threads = 0)
{
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try
            {
                for (std::size_t i = next++; i < n; i = next++)
                    body(i);
            }
            catch (...)
            {
                errors[t] = std::current_exception();
                next = n;
            }
        });
    for (auto &th : pool)
        th.join();
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace clamsense
