#include "ccyd/plots.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ccyd {

void write_curve_svg(const std::string& path, const std::vector<std::pair<double, double>>& pts,
                     const std::string& xlabel, const std::string& ylabel,
                     const std::string& title) {
  constexpr int kSize = 420, kMargin = 50;
  constexpr int kPlot = kSize - 2 * kMargin;
  auto px = [](double v) { return kMargin + v * kPlot; };
  auto py = [](double v) { return kSize - kMargin - v * kPlot; };

  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_curve_svg: cannot write " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
    << "\" viewBox=\"0 0 " << kSize << " " << kSize << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes with 0..1 ticks
  f << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kPlot << "\" height=\""
    << kPlot << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    f << "<text x=\"" << px(v) << "\" y=\"" << kSize - kMargin + 18
      << "\" font-size=\"11\" text-anchor=\"middle\">" << buf << "</text>\n";
    f << "<text x=\"" << kMargin - 8 << "\" y=\"" << py(v) + 4
      << "\" font-size=\"11\" text-anchor=\"end\">" << buf << "</text>\n";
    f << "<line x1=\"" << px(v) << "\" y1=\"" << kMargin << "\" x2=\"" << px(v) << "\" y2=\""
      << kSize - kMargin << "\" stroke=\"#dddddd\"/>\n";
    f << "<line x1=\"" << kMargin << "\" y1=\"" << py(v) << "\" x2=\"" << kSize - kMargin
      << "\" y2=\"" << py(v) << "\" stroke=\"#dddddd\"/>\n";
  }
  f << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (const auto& [x, y] : pts) f << px(x) << "," << py(y) << " ";
  f << "\"/>\n";
  f << "<text x=\"" << kSize / 2 << "\" y=\"" << kSize - 10
    << "\" font-size=\"13\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  f << "<text x=\"14\" y=\"" << kSize / 2 << "\" font-size=\"13\" text-anchor=\"middle\" "
    << "transform=\"rotate(-90 14 " << kSize / 2 << ")\">" << ylabel << "</text>\n";
  f << "<text x=\"" << kSize / 2 << "\" y=\"25\" font-size=\"15\" text-anchor=\"middle\">" << title
    << "</text>\n";
  f << "</svg>\n";
}

}  // namespace ccyd
