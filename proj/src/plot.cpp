#include "dsaqc/plot.hpp"

#include <cstdio>
#include <fstream>

#include "dsaqc/errors.hpp"

namespace dsaqc::plot {

namespace {

constexpr double kWidth = 480, kHeight = 400;
constexpr double kLeft = 60, kRight = 140, kTop = 36, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

}  // namespace

std::string render_svg(const Figure& fig) {
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double xr = fig.x_max > fig.x_min ? fig.x_max - fig.x_min : 1.0;
  const double yr = fig.y_max > fig.y_min ? fig.y_max - fig.y_min : 1.0;
  auto X = [&](double x) { return kLeft + (x - fig.x_min) / xr * pw; };
  auto Y = [&](double y) { return kTop + ph - (y - fig.y_min) / yr * ph; };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
                  "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" + escape(fig.title) +
       "</text>\n";
  s += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = fig.x_min + xr * i / 5.0, fy = fig.y_min + yr * i / 5.0;
    s += "<text x=\"" + num(X(fx)) + "\" y=\"" + num(kTop + ph + 15) + "\" text-anchor=\"middle\">" + num(fx) +
         "</text>\n";
    s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(Y(fy) + 4) + "\" text-anchor=\"end\">" + num(fy) + "</text>\n";
  }
  s += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 12) + "\" text-anchor=\"middle\">" +
       escape(fig.x_label) + "</text>\n";
  s += "<text transform=\"translate(16," + num(kTop + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       escape(fig.y_label) + "</text>\n";
  if (fig.diagonal) {
    s += "<line x1=\"" + num(X(fig.x_min)) + "\" y1=\"" + num(Y(fig.y_min)) + "\" x2=\"" + num(X(fig.x_max)) +
         "\" y2=\"" + num(Y(fig.y_max)) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t k = 0; k < fig.series.size(); ++k) {
    const Series& ser = fig.series[k];
    const char* color = kColors[k % std::size(kColors)];
    std::string pts;
    for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i) pts += num(X(ser.x[i])) + "," + num(Y(ser.y[i])) + " ";
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.6\" points=\"" + pts + "\"/>\n";
    const double ly = kTop + 12 + 16.0 * k;
    s += "<line x1=\"" + num(kLeft + pw + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(kLeft + pw + 28) + "\" y2=\"" +
         num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + num(kLeft + pw + 32) + "\" y=\"" + num(ly + 4) + "\">" + escape(ser.name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

void write_svg(const std::filesystem::path& path, const Figure& fig) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write plot", path.string());
  out << render_svg(fig);
  if (!out) throw IoError("failed writing plot", path.string());
}

}  // namespace dsaqc::plot
