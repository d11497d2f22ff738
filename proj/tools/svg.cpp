#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace hdt::cli {

namespace {

constexpr double kSize = 600.0;
constexpr double kMargin = 30.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string colour(double frac) {
  const int r = static_cast<int>(std::lround(40 + 200 * frac));
  const int b = static_cast<int>(std::lround(240 - 200 * frac));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x50%02x", r, b);
  return buf;
}

}  // namespace

std::string sweep_svg(const std::vector<double>& times, const std::vector<Matrix>& snapshots,
                      const Matrix& reference) {
  const Eigen::Index qi = reference.rows() / 2;
  double lo_x = INFINITY, hi_x = -INFINITY, lo_y = INFINITY, hi_y = -INFINITY;
  auto extend = [&](const Matrix& m) {
    if (m.cols() == 0) return;
    lo_x = std::min(lo_x, m.row(0).minCoeff());
    hi_x = std::max(hi_x, m.row(0).maxCoeff());
    lo_y = std::min(lo_y, m.row(qi).minCoeff());
    hi_y = std::max(hi_y, m.row(qi).maxCoeff());
  };
  extend(reference);
  for (const auto& s : snapshots) extend(s);
  if (!(hi_x > lo_x)) hi_x = lo_x + 1.0;
  if (!(hi_y > lo_y)) hi_y = lo_y + 1.0;
  if (!std::isfinite(lo_x)) lo_x = lo_y = 0.0, hi_x = hi_y = 1.0;

  const double span = kSize - 2 * kMargin;
  auto px = [&](double x) { return kMargin + span * (x - lo_x) / (hi_x - lo_x); };
  auto py = [&](double y) { return kSize - kMargin - span * (y - lo_y) / (hi_y - lo_y); };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kMargin << "\" y=\"20\" font-size=\"12\">p_0 (horizontal) vs q_0 (vertical)</text>\n";

  out << "<g class=\"reference\" fill=\"#bbbbbb\">\n";
  for (Eigen::Index j = 0; j < reference.cols(); ++j) {
    out << "<circle cx=\"" << fmt(px(reference(0, j))) << "\" cy=\"" << fmt(py(reference(qi, j)))
        << "\" r=\"1.5\"/>\n";
  }
  out << "</g>\n";

  const double t_max = times.empty() ? 1.0 : std::max(times.back(), 1e-12);
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    const Matrix& s = snapshots[k];
    out << "<g class=\"time\" data-t=\"" << fmt(times[k]) << "\" fill=\"" << colour(times[k] / t_max)
        << "\" fill-opacity=\"0.6\">\n";
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      out << "<circle cx=\"" << fmt(px(s(0, j))) << "\" cy=\"" << fmt(py(s(qi, j))) << "\" r=\"1.5\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace hdt::cli
