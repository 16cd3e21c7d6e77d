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

// Minimal SVG line-chart renderer for offline figure data.

#pragma once

#include "io.hpp"

namespace clamsense
{

struct Series
{
    std::string label;
    std::vector<double> x, y;
    bool markers = false; // scatter points instead of a polyline
};

struct ChartOptions
{
    std::string title;
    std::string x_label, y_label;
    bool log_y = false;
    int width = 640, height = 420;
};

namespace detail
{
inline std::string xml_escape(const std::string &s)
{
    std::string out;
    for (char c : s)
        switch (c)
        {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    return out;
}
} // namespace detail

/// Writes a line chart; points with non-finite coordinates (or y <= 0 on a log axis) are skipped.
inline void write_svg_chart(std::ostream &os, const std::vector<Series> &series, const ChartOptions &opt,
                            const json &config = json::object())
{
    static constexpr const char *kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#17becf"};
    auto ty = [&](double y) { return opt.log_y ? std::log10(y) : y; };
    auto usable = [&](double x, double y) { return std::isfinite(x) && std::isfinite(y) && (!opt.log_y || y > 0.0); };

    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto &s : series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
            if (usable(s.x[i], s.y[i]))
            {
                x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
                y0 = std::min(y0, ty(s.y[i])), y1 = std::max(y1, ty(s.y[i]));
            }
    if (!(x0 <= x1))
        x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    if (x0 == x1)
        x0 -= 0.5, x1 += 0.5;
    if (y0 == y1)
        y0 -= 0.5, y1 += 0.5;

    const double left = 70, right = 160, top = 40, bottom = 50;
    const double pw = opt.width - left - right, ph = opt.height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<!-- clamsense " << kVersion << " config " << detail::xml_escape(config.dump()) << " -->\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << opt.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << detail::xml_escape(opt.title) << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k)
    {
        const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
        const double gx = left + pw * k / 4.0, gy = top + ph * (1.0 - k / 4.0);
        os << "<text x=\"" << fmt(gx, 1) << "\" y=\"" << fmt(top + ph + 16, 1) << "\" text-anchor=\"middle\">"
           << fmt(fx, 2) << "</text>\n";
        os << "<text x=\"" << fmt(left - 6, 1) << "\" y=\"" << fmt(gy + 4, 1) << "\" text-anchor=\"end\">"
           << (opt.log_y ? "1e" + fmt(fy, 1) : fmt(fy, 2)) << "</text>\n";
    }
    os << "<text x=\"" << fmt(left + pw / 2, 1) << "\" y=\"" << opt.height - 10 << "\" text-anchor=\"middle\">"
       << detail::xml_escape(opt.x_label) << "</text>\n";
    os << "<text transform=\"translate(16," << fmt(top + ph / 2, 1) << ") rotate(-90)\" text-anchor=\"middle\">"
       << detail::xml_escape(opt.y_label) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k)
    {
        const auto &s = series[k];
        const char *color = kColors[k % std::size(kColors)];
        if (s.markers)
        {
            for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
                if (usable(s.x[i], s.y[i]))
                    os << "<circle cx=\"" << fmt(px(s.x[i]), 2) << "\" cy=\"" << fmt(py(s.y[i]), 2)
                       << "\" r=\"4\" fill=\"none\" stroke=\"" << color << "\"/>\n";
        }
        else
        {
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
                if (usable(s.x[i], s.y[i]))
                    os << fmt(px(s.x[i]), 2) << ',' << fmt(py(s.y[i]), 2) << ' ';
            os << "\"/>\n";
        }
        const double ly = top + 14 + 18.0 * static_cast<double>(k);
        os << "<line x1=\"" << fmt(left + pw + 10, 1) << "\" y1=\"" << fmt(ly, 1) << "\" x2=\""
           << fmt(left + pw + 30, 1) << "\" y2=\"" << fmt(ly, 1) << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << fmt(left + pw + 34, 1) << "\" y=\"" << fmt(ly + 4, 1) << "\">"
           << detail::xml_escape(s.label) << "</text>\n";
    }
    os << "</svg>\n";
}

} // namespace clamsense
