#pragma once

// Minimal self-contained SVG line charts; byte-deterministic output so plot
// files can be compared in tests and across reruns.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dcpo {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

void write_line_chart(std::ostream& out, std::span<const PlotSeries> series,
                      const std::string& title, const std::string& x_label,
                      const std::string& y_label);

}  // namespace dcpo
