// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dvsr {

/// One polyline of a chart: points (x[i], y[i]) with optional symmetric
/// error bars yerr[i] (empty = no bars). Sizes of x and y must match.
struct PlotSeries {
  std::string label;
  std::array<std::uint8_t, 3> color{0, 0, 0};
  std::vector<double> x, y, yerr;
};

/// Renders a line chart with markers, +-1 error bars, tick labels, and a
/// legend into an 8-bit RGB PNG. Pure function of its inputs, so re-rendering
/// identical data produces byte-identical files. Text uses a built-in 5x7
/// glyph set (digits, upper-case letters and basic punctuation; lower-case
/// input is folded to upper-case).
void render_line_plot(const std::vector<PlotSeries>& series, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::string& path, int width = 640, int height = 480);

}  // namespace dvsr
