#include "dsaqc/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dsaqc/dicom.hpp"
#include "dsaqc/errors.hpp"

namespace dsaqc::phantom {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMargin = 24;  // > largest motion offset
constexpr double kMaxValue = 4095.0;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
bool bernoulli(Rng& rng, double p) { return uniform(rng, 0.0, 1.0) < p; }

int sample_class(Rng& rng, const std::vector<double>& p) {
  const double u = uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<int>(k);
  }
  for (std::size_t k = p.size(); k-- > 0;) {
    if (p[k] > 0) return static_cast<int>(k);
  }
  return 0;
}

struct Canvas {
  int side = 0;
  std::vector<float> v;
  explicit Canvas(int s) : side(s), v(static_cast<std::size_t>(s) * s, 0.0f) {}
  float& at(int y, int x) { return v[static_cast<std::size_t>(y) * side + x]; }
  float at(int y, int x) const { return v[static_cast<std::size_t>(y) * side + x]; }
  void put(int y, int x, double val) {
    float& dst = at(y, x);
    dst = std::max(dst, static_cast<float>(val));
  }
};

struct Pt {
  double x, y;
};

/// Elliptic rim; `lower_only` keeps the half with positive rotated y.
void ring(Canvas& cv, Pt c, double rx, double ry, double angle, double thick, double amp, bool lower_only = false) {
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double r = 0.5 * (rx + ry);
  const int y0 = std::max(0, static_cast<int>(c.y - std::max(rx, ry) - 4 * thick));
  const int y1 = std::min(cv.side - 1, static_cast<int>(c.y + std::max(rx, ry) + 4 * thick));
  const int x0 = std::max(0, static_cast<int>(c.x - std::max(rx, ry) - 4 * thick));
  const int x1 = std::min(cv.side - 1, static_cast<int>(c.x + std::max(rx, ry) + 4 * thick));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - c.x, dy = y - c.y;
      const double u = ca * dx + sa * dy, w = -sa * dx + ca * dy;
      if (lower_only && w < 0) continue;
      const double rn = std::sqrt((u / rx) * (u / rx) + (w / ry) * (w / ry));
      const double d = (rn - 1.0) * r / thick;
      if (std::fabs(d) < 4) cv.put(y, x, amp * std::exp(-d * d));
    }
  }
}

void segment(Canvas& cv, Pt a, Pt b, double width, double amp) {
  const double pad = 3 * width + 1;
  const int y0 = std::max(0, static_cast<int>(std::min(a.y, b.y) - pad));
  const int y1 = std::min(cv.side - 1, static_cast<int>(std::max(a.y, b.y) + pad));
  const int x0 = std::max(0, static_cast<int>(std::min(a.x, b.x) - pad));
  const int x1 = std::min(cv.side - 1, static_cast<int>(std::max(a.x, b.x) + pad));
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = std::max(vx * vx + vy * vy, 1e-12);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double t = std::clamp(((x - a.x) * vx + (y - a.y) * vy) / len2, 0.0, 1.0);
      const double ex = x - (a.x + t * vx), ey = y - (a.y + t * vy);
      const double d2 = (ex * ex + ey * ey) / (width * width);
      if (d2 < 9) cv.put(y, x, amp * std::exp(-d2));
    }
  }
}

void polyline(Canvas& cv, const std::vector<Pt>& pts, double width, double amp) {
  for (std::size_t i = 1; i < pts.size(); ++i) segment(cv, pts[i - 1], pts[i], width, amp);
}

/// Soft rectangle rotated by `angle`.
void block(Canvas& cv, Pt c, double hw, double hh, double angle, double amp) {
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double ext = std::hypot(hw, hh) + 3;
  for (int y = std::max(0, static_cast<int>(c.y - ext)); y <= std::min(cv.side - 1, static_cast<int>(c.y + ext)); ++y) {
    for (int x = std::max(0, static_cast<int>(c.x - ext)); x <= std::min(cv.side - 1, static_cast<int>(c.x + ext));
         ++x) {
      const double dx = x - c.x, dy = y - c.y;
      const double u = std::fabs(ca * dx + sa * dy) - hw, w = std::fabs(-sa * dx + ca * dy) - hh;
      const double out = std::max(u, w);
      if (out < 2) cv.put(y, x, amp * std::clamp(0.5 - out / 2.0, 0.0, 1.0));
    }
  }
}

/// Wavy path from a to b.
std::vector<Pt> curvy(Rng& rng, Pt a, Pt b, int n, double wobble) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len = std::max(std::hypot(dx, dy), 1e-9);
  const double nx = -dy / len, ny = dx / len;
  const double amp = uniform(rng, 0.4, 1.0) * wobble;
  const double phase = uniform(rng, 0, 2 * kPi);
  const double freq = uniform(rng, 1.0, 2.5);
  std::vector<Pt> pts;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double off = amp * std::sin(phase + freq * kPi * t) * std::sin(kPi * t);
    pts.push_back({a.x + t * dx + off * nx, a.y + t * dy + off * ny});
  }
  return pts;
}

void texture(Canvas& cv, Rng& rng, int blobs, double side) {
  std::vector<double> acc(cv.v.size(), 0.0);
  for (int b = 0; b < blobs; ++b) {
    const double cx = uniform(rng, 0, cv.side), cy = uniform(rng, 0, cv.side);
    const double s = uniform(rng, 0.06, 0.2) * side;
    const double a = uniform(rng, -0.4, 1.0);
    for (int y = 0; y < cv.side; ++y) {
      for (int x = 0; x < cv.side; ++x) {
        const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s);
        if (d2 < 12) acc[static_cast<std::size_t>(y) * cv.side + x] += a * std::exp(-d2);
      }
    }
  }
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  const double range = std::max(*hi - *lo, 1e-9);
  for (std::size_t i = 0; i < acc.size(); ++i) cv.v[i] = static_cast<float>((acc[i] - *lo) / range);
}

struct Classes {
  int neuro, skull, projection, contrast, dsa, motion, hemisphere, ica, mca;
};

Classes unpack(const std::map<std::string, int>& t) {
  auto g = [&t](std::string_view l) { return t.at(std::string(l)); };
  return {g(label::kNeuroImaging), g(label::kSkullVisibility), g(label::kProjection),
          g(label::kContrastFluid), g(label::kDsa),            g(label::kMotionArtefact),
          g(label::kHemisphere),    g(label::kIcaTopVisible),   g(label::kMcaVisible)};
}

/// Per-patient geometry shared by all of that patient's acquisitions.
struct Anatomy {
  double cx, cy, scale;
};

/// Bone and skull-base structures on the padded canvas.
void draw_bone(Canvas& bone, Rng& rng, const Classes& k, const Anatomy& an, int S) {
  const double M = kMargin;
  auto P = [&](double u, double v) { return Pt{M + u * S, M + v * S}; };
  const double L = S * an.scale;

  if (k.neuro == 0) {
    // Thorax: spine and rib pairs.
    for (int i = 0; i < 7; ++i) block(bone, P(0.5, 0.08 + i * 0.135), 0.055 * S, 0.045 * S, 0.0, 0.8);
    for (int i = 0; i < 5; ++i) {
      const double y = 0.16 + i * 0.16 + uniform(rng, -0.02, 0.02);
      for (int side : {-1, 1}) {
        std::vector<Pt> rib;
        for (int j = 0; j <= 8; ++j) {
          const double t = j / 8.0;
          rib.push_back(P(0.5 + side * (0.07 + 0.38 * t), y - 0.05 * std::sin(kPi * t) + 0.08 * t * t));
        }
        polyline(bone, rib, 0.022 * S, 0.6);
      }
    }
    return;
  }

  const int proj = k.projection;  // 0 AP, 1 oblique, 2 left lat, 3 right lat
  if (k.skull == 0) {
    // Neck: cervical column and mandible.
    double col_x = 0.5, tilt = 0.0;
    if (proj == 2) col_x = 0.6;
    if (proj == 3) col_x = 0.4;
    if (proj == 1) tilt = 0.26 * (bernoulli(rng, 0.5) ? 1 : -1), col_x = 0.54;
    for (int i = 0; i < 7; ++i) {
      const double v = 0.3 + i * 0.11;
      block(bone, P(col_x + std::sin(tilt) * (v - 0.5), v), 0.06 * S, 0.04 * S, tilt, 0.8);
    }
    if (proj == 0) {
      ring(bone, P(0.5, 0.05), 0.3 * S, 0.22 * S, 0.0, 0.02 * S, 0.7, true);
    } else if (proj == 1) {
      ring(bone, P(0.44, 0.05), 0.3 * S, 0.2 * S, tilt, 0.02 * S, 0.7, true);
    } else {
      const double dir = proj == 2 ? -1.0 : 1.0;
      polyline(bone, {P(col_x - dir * 0.02, 0.02), P(col_x - dir * 0.05, 0.25), P(0.5 + dir * 0.38, 0.3)},
               0.022 * S, 0.7);
    }
    return;
  }

  // Skull: Full keeps the whole rim inside, Partial enlarges and offsets it.
  double cx = an.cx, cy = an.cy, sc = 1.0;
  double angle = 0.0, rx = 0.36, ry = 0.4;
  if (proj == 1) angle = 0.35 * (bernoulli(rng, 0.5) ? 1 : -1), rx = 0.39, ry = 0.38;
  if (proj >= 2) rx = 0.42, ry = 0.35;
  if (k.skull == 2) {
    sc = uniform(rng, 1.5, 1.75);
    const int which = static_cast<int>(uniform(rng, 0, 3));
    if (which == 0) cy += 0.32;
    if (which == 1) cx += 0.32;
    if (which == 2) cx -= 0.32;
  }
  const Pt c = P(cx, cy);
  ring(bone, c, rx * L * sc, ry * L * sc, angle, 0.028 * S, 1.0);

  auto rel = [&](double du, double dv) {
    const double x = du * L * sc, y = dv * L * sc;
    return Pt{c.x + std::cos(angle) * x - std::sin(angle) * y, c.y + std::sin(angle) * x + std::cos(angle) * y};
  };
  const double ot = 0.016 * S;
  switch (proj) {
    case 0:
      ring(bone, rel(-0.13, 0.1), 0.068 * L * sc, 0.052 * L * sc, 0.0, ot, 0.8);
      ring(bone, rel(0.13, 0.1), 0.068 * L * sc, 0.052 * L * sc, 0.0, ot, 0.8);
      segment(bone, rel(0.0, 0.02), rel(0.0, 0.22), 0.012 * S, 0.5);
      // Petrous ridges, symmetric about the midline.
      for (double side : {-1.0, 1.0}) polyline(bone, {rel(side * 0.34, 0.26), rel(side * 0.16, 0.2), rel(side * 0.04, 0.24)}, 0.02 * S, 0.9);
      break;
    case 1:
      ring(bone, rel(-0.2, 0.1), 0.075 * L * sc, 0.055 * L * sc, angle, ot, 0.8);
      ring(bone, rel(0.03, 0.1), 0.045 * L * sc, 0.045 * L * sc, angle, ot, 0.8);
      break;
    default: {
      const double dir = proj == 2 ? -1.0 : 1.0;
      ring(bone, rel(dir * 0.3, 0.08), 0.07 * L * sc, 0.055 * L * sc, 0.0, ot, 0.8);
      // Skull base and sella.
      polyline(bone, {rel(dir * 0.25, 0.14), rel(dir * 0.05, 0.12), rel(-dir * 0.05, 0.2), rel(-dir * 0.2, 0.3)},
               0.026 * S, 1.0);
      ring(bone, rel(-dir * 0.02, 0.1), 0.04 * L * sc, 0.03 * L * sc, 0.0, 0.012 * S, 0.6, true);
      break;
    }
  }
}

/// Vessel tree seen from the side: the siphon loops forward, branches fan toward front and back.
void draw_vessels_side(Canvas& ves, Rng& rng, const Classes& k, int S) {
  const double M = kMargin;
  auto P = [&](double u, double v) { return Pt{M + u * S, M + v * S}; };
  // Direction the face points; oblique views get a foreshortened version at a random side.
  double face = k.projection == 2 ? -1.0 : 1.0;
  double reach = 1.0;
  if (k.projection == 1) face = bernoulli(rng, 0.5) ? 1.0 : -1.0, reach = 0.55;
  const double root_x = 0.5 - face * 0.08 * reach + uniform(rng, -0.03, 0.03);
  const Pt root = P(root_x, 1.02);
  const Pt bend = P(root_x + face * 0.1 * reach, 0.6 + uniform(rng, -0.03, 0.03));
  const Pt top = P(root_x + face * 0.04 * reach, 0.48 + uniform(rng, -0.03, 0.03));
  const double w = 0.018 * S;

  auto trunk = curvy(rng, root, bend, 14, 0.03 * S);
  if (k.ica == 1) {
    polyline(ves, trunk, w, 1.0);
    polyline(ves, {bend, P(root_x + face * 0.16 * reach, 0.53), top}, w, 1.0);
    // Anterior cerebral branch running forward over the top.
    polyline(ves, curvy(rng, top, P(0.5 + face * 0.3 * reach, 0.22 + uniform(rng, -0.04, 0.04)), 10, 0.03 * S),
             0.7 * w, 1.0);
  } else {
    const std::size_t keep = trunk.size() * 5 / 10;
    polyline(ves, std::vector<Pt>(trunk.begin(), trunk.begin() + static_cast<std::ptrdiff_t>(keep)), w, 1.0);
  }
  if (k.mca == 1) {
    const Pt end = P(0.5 - face * uniform(rng, 0.22, 0.3) * reach, 0.34 + uniform(rng, -0.05, 0.05));
    auto mca = curvy(rng, top, end, 12, 0.03 * S);
    polyline(ves, mca, 0.8 * w, 1.0);
    for (int b = 0; b < 3; ++b) {
      const Pt from = mca[4 + 3 * b];
      const Pt to{from.x - face * uniform(rng, 0.02, 0.08) * S, from.y - uniform(rng, 0.08, 0.16) * S};
      polyline(ves, curvy(rng, from, to, 6, 0.015 * S), 0.5 * w, 1.0);
    }
  }
  const int extra = static_cast<int>(uniform(rng, 2, 5));
  for (int b = 0; b < extra; ++b) {
    const std::size_t i = 2 + static_cast<std::size_t>(uniform(rng, 0, 4));
    const Pt from = trunk[i];
    const Pt to{from.x + face * uniform(rng, 0.06, 0.14) * S, from.y + uniform(rng, -0.06, 0.02) * S};
    polyline(ves, curvy(rng, from, to, 6, 0.01 * S), 0.45 * w, 1.0);
  }
}

/// Contrast-filled vessels.
void draw_vessels(Canvas& ves, Rng& rng, const Classes& k, int S) {
  if (k.neuro == 1 && k.projection != 0) {
    draw_vessels_side(ves, rng, k, S);
    return;
  }
  const double M = kMargin;
  auto P = [&](double u, double v) { return Pt{M + u * S, M + v * S}; };
  double root_x = 0.5;
  if (k.hemisphere == 1) root_x = 0.35;
  if (k.hemisphere == 2) root_x = 0.65;
  root_x += uniform(rng, -0.03, 0.03);
  const double lateral = k.hemisphere == 1 ? -1.0 : k.hemisphere == 2 ? 1.0 : (bernoulli(rng, 0.5) ? -1.0 : 1.0);
  const Pt root = P(root_x, 1.02);
  const Pt top = P(root_x + uniform(rng, -0.02, 0.02), 0.52 + uniform(rng, -0.03, 0.03));
  const double w = 0.018 * S;

  auto trunk = curvy(rng, root, top, 16, 0.04 * S);
  if (k.ica == 1) {
    polyline(ves, trunk, w, 1.0);
    // Anterior branch running up and medially.
    polyline(ves, curvy(rng, top, P(0.5 - lateral * 0.02, 0.24 + uniform(rng, -0.04, 0.04)), 8, 0.03 * S), 0.7 * w,
             1.0);
  } else {
    // Only the cervical part: stops well below the terminus.
    const std::size_t keep = trunk.size() * 5 / 10;
    polyline(ves, std::vector<Pt>(trunk.begin(), trunk.begin() + static_cast<std::ptrdiff_t>(keep)), w, 1.0);
  }
  if (k.mca == 1) {
    const Pt end = P(root_x + lateral * uniform(rng, 0.28, 0.34), 0.42 + uniform(rng, -0.05, 0.05));
    auto mca = curvy(rng, top, end, 12, 0.03 * S);
    polyline(ves, mca, 0.8 * w, 1.0);
    for (int b = 0; b < 3; ++b) {
      const Pt from = mca[4 + 3 * b];
      const Pt to{from.x + lateral * uniform(rng, 0.04, 0.12) * S, from.y - uniform(rng, 0.06, 0.14) * S};
      polyline(ves, curvy(rng, from, to, 6, 0.015 * S), 0.5 * w, 1.0);
    }
  }
  // External branches off the lower trunk.
  const int extra = static_cast<int>(uniform(rng, 2, 5));
  for (int b = 0; b < extra; ++b) {
    const std::size_t i = 2 + static_cast<std::size_t>(uniform(rng, 0, 4));
    const Pt from = trunk[i];
    const double dir = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    const Pt to{from.x + dir * uniform(rng, 0.05, 0.12) * S, from.y + uniform(rng, -0.06, 0.02) * S};
    polyline(ves, curvy(rng, from, to, 6, 0.01 * S), 0.45 * w, 1.0);
  }
}

Condition make_condition(std::string_view label, std::vector<std::string_view> classes) {
  const LabelDefinition& def = find_label(builtin_taxonomy(), label);
  Condition c{std::string(label), {}};
  for (auto cls : classes) c.allowed.push_back(*def.index_of(cls));
  return c;
}

}  // namespace

SegmentabilityRule SegmentabilityRule::defaults() {
  SegmentabilityRule r;
  r.require = {make_condition(label::kContrastFluid, {"Present"}), make_condition(label::kDsa, {"DSA"}),
               make_condition(label::kMotionArtefact, {"None", "Mild"})};
  return r;
}

bool SegmentabilityRule::holds(const std::map<std::string, int>& truth) const {
  for (const auto& c : require) {
    const auto it = truth.find(c.label);
    if (it == truth.end()) throw ValidationError("segmentability rule refers to missing label '" + c.label + "'");
    if (std::find(c.allowed.begin(), c.allowed.end(), it->second) == c.allowed.end()) return false;
  }
  return true;
}

std::map<std::string, std::vector<double>> PhantomSpec::default_priors() {
  const std::map<std::string, std::vector<double>> counts = {
      {std::string(label::kNeuroImaging), {166, 1592}},
      {std::string(label::kSkullVisibility), {137, 426, 1029}},
      {std::string(label::kProjection), {939, 95, 93, 461}},
      {std::string(label::kContrastFluid), {272, 1321}},
      {std::string(label::kDsa), {285, 1308}},
      {std::string(label::kMotionArtefact), {792, 440, 358}},
      {std::string(label::kHemisphere), {792, 440, 358}},
      {std::string(label::kIcaTopVisible), {560, 1030}},
      {std::string(label::kMcaVisible), {951, 638}},
  };
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, c] : counts) {
    double total = 0;
    for (double v : c) total += v;
    std::vector<double> p;
    for (double v : c) p.push_back(v / total);
    out[name] = p;
  }
  return out;
}

void PhantomSpec::validate() const {
  if (n_patients < 1) throw ValidationError("phantom: n_patients must be >= 1");
  if (images_per_patient_min < 1 || images_per_patient_max < images_per_patient_min) {
    throw ValidationError("phantom: images_per_patient range is empty");
  }
  if (image_side < 32) throw ValidationError("phantom: image_side must be >= 32");
  if (frames < 2) throw ValidationError("phantom: frames must be >= 2 (mask plus contrast frame)");
  if (!(noise_level >= 0.0 && noise_level <= 0.5)) throw ValidationError("phantom: noise_level must lie in [0, 0.5]");
  if (rating_subset < 0) throw ValidationError("phantom: rating_subset must be >= 0");
  for (const auto& [r, e] : rater_error) {
    if (!(e >= 0.0 && e <= 1.0)) throw ValidationError("phantom: rater_error for '" + r + "' outside [0,1]");
  }
  for (double p : {segmentability.flip_if_success, segmentability.flip_if_failure}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("phantom: flip probabilities must lie in [0,1]");
  }
  const Taxonomy& tax = builtin_taxonomy();
  for (const auto& [name, _] : priors) find_label(tax, name);
  for (const auto& def : tax) {
    const auto it = priors.find(def.name);
    if (it == priors.end()) throw ValidationError("phantom: no prior for '" + def.name + "'");
    if (static_cast<int>(it->second.size()) != def.class_count()) {
      throw ValidationError("phantom: prior for '" + def.name + "' needs " + std::to_string(def.class_count()) +
                            " entries");
    }
    double sum = 0;
    for (double p : it->second) {
      if (!(p >= 0.0)) throw ValidationError("phantom: negative prior for '" + def.name + "'");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-6) throw ValidationError("phantom: prior for '" + def.name + "' does not sum to 1");
  }
  for (const auto& c : segmentability.require) {
    const LabelDefinition& def = find_label(tax, c.label);
    for (int k : c.allowed) {
      if (k < 0 || k >= def.class_count()) throw ValidationError("phantom: rule class out of range for " + c.label);
    }
  }
  auto p = [this](std::string_view l, int k) { return priors.at(std::string(l))[k]; };
  const bool vessels_possible = p(label::kNeuroImaging, 1) > 0 && p(label::kContrastFluid, 1) > 0;
  if (!vessels_possible &&
      (p(label::kIcaTopVisible, 1) > 0 || p(label::kMcaVisible, 1) > 0 || p(label::kHemisphere, 0) < 1)) {
    throw ValidationError(
        "phantom: infeasible priors: visible ICA/MCA or a lateralised hemisphere require Neuro images with contrast");
  }
  if (p(label::kNeuroImaging, 1) == 0 && (p(label::kSkullVisibility, 0) < 1 || p(label::kProjection, 0) < 1)) {
    throw ValidationError("phantom: infeasible priors: skull and non-AP projections require Neuro images");
  }
}

std::optional<int> forced_class(std::string_view label, const std::map<std::string, int>& truth) {
  const bool neuro = truth.at(std::string(label::kNeuroImaging)) == 1;
  const bool contrast = truth.at(std::string(label::kContrastFluid)) == 1;
  if (label == label::kSkullVisibility || label == label::kProjection) {
    if (!neuro) return 0;
  } else if (label == label::kHemisphere || label == label::kIcaTopVisible || label == label::kMcaVisible) {
    if (!neuro || !contrast) return 0;
  }
  return std::nullopt;
}

FrameStack PhantomImage::stack() const {
  FrameStack s;
  s.frame_count = frames;
  s.height = side;
  s.width = side;
  s.data.assign(pixels.begin(), pixels.end());
  s.sequence_id = image_id;
  s.patient_id = patient_id;
  return s;
}

namespace {

PhantomImage render_image(const PhantomSpec& spec, Rng& rng, const Anatomy& an, std::map<std::string, int> truth) {
  const int S = spec.image_side;
  const Classes k = unpack(truth);
  const int C = S + 2 * kMargin;
  Canvas bone(C), ves(C), tissue(C);
  draw_bone(bone, rng, k, an, S);
  if (k.contrast == 1) draw_vessels(ves, rng, k, S);
  texture(tissue, rng, 10, S);

  int dx = 0, dy = 0;
  if (k.motion > 0) {
    const double mag = k.motion == 1 ? uniform(rng, 4.0, 7.0) : uniform(rng, 12.0, 20.0);
    const double ang = uniform(rng, 0, 2 * kPi);
    dx = static_cast<int>(std::lround(mag * std::cos(ang)));
    dy = static_cast<int>(std::lround(mag * std::sin(ang)));
  }

  PhantomImage img;
  img.truth = std::move(truth);
  img.frames = spec.frames;
  img.side = S;
  img.motion_offset = std::hypot(dx, dy);
  img.pixels.resize(static_cast<std::size_t>(spec.frames) * S * S);
  img.vessel_mask = Image2D(S, S);
  for (int r = 0; r < S; ++r) {
    for (int c = 0; c < S; ++c) img.vessel_mask.at(r, c) = ves.at(r + kMargin, c + kMargin) > 0.5f ? 1.0 : 0.0;
  }

  const bool dsa = k.dsa == 1;
  const double sigma = spec.noise_level * kMaxValue;
  std::normal_distribution<double> noise(0.0, 1.0);
  const double vessel_amp = dsa ? 1800.0 : 1300.0;
  for (int t = 0; t < spec.frames; ++t) {
    const bool shifted = k.motion > 0 && t >= spec.frames / 2;
    const int sx = shifted ? dx : 0, sy = shifted ? dy : 0;
    const bool contrast_now = k.contrast == 1 && t >= 1;
    std::uint16_t* out = img.pixels.data() + static_cast<std::size_t>(t) * S * S;
    for (int r = 0; r < S; ++r) {
      for (int c = 0; c < S; ++c) {
        const int yr = r + kMargin - sy, xr = c + kMargin - sx;
        const int y0 = r + kMargin, x0 = c + kMargin;
        double v;
        if (dsa) {
          // Live minus mask: residual bone, misregistration edges, opacified vessels.
          v = 3000.0 - 200.0 * bone.at(yr, xr) - 900.0 * (bone.at(yr, xr) - bone.at(y0, x0)) -
              300.0 * (tissue.at(yr, xr) - tissue.at(y0, x0));
        } else {
          // Unsubtracted: full bone and soft tissue plus intensifier vignetting.
          const double rr = (std::pow(r - 0.5 * S, 2) + std::pow(c - 0.5 * S, 2)) / (0.5 * S * S);
          v = 3600.0 - 1400.0 * bone.at(yr, xr) - 500.0 * tissue.at(yr, xr) - 700.0 * rr;
        }
        if (contrast_now) v -= vessel_amp * ves.at(yr, xr);
        v += sigma * noise(rng);
        out[static_cast<std::size_t>(r) * S + c] = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, kMaxValue)));
      }
    }
  }
  return img;
}

}  // namespace

Corpus generate_corpus(const PhantomSpec& spec) {
  spec.validate();
  const Taxonomy& tax = builtin_taxonomy();
  Corpus corpus;
  for (int p = 0; p < spec.n_patients; ++p) {
    Rng rng(mix(spec.seed ^ mix(static_cast<std::uint64_t>(p) + 1)));
    char pid[16];
    std::snprintf(pid, sizeof pid, "P%03d", p);
    const Anatomy an{0.5 + uniform(rng, -0.03, 0.03), 0.47 + uniform(rng, -0.03, 0.03), uniform(rng, 0.93, 1.05)};
    const int count = static_cast<int>(
        std::uniform_int_distribution<int>(spec.images_per_patient_min, spec.images_per_patient_max)(rng));
    for (int s = 0; s < count; ++s) {
      std::map<std::string, int> truth;
      auto draw = [&](std::string_view l) { truth[std::string(l)] = sample_class(rng, spec.priors.at(std::string(l))); };
      draw(label::kNeuroImaging);
      draw(label::kContrastFluid);
      draw(label::kDsa);
      draw(label::kMotionArtefact);
      for (auto l : {label::kSkullVisibility, label::kProjection, label::kHemisphere, label::kIcaTopVisible,
                     label::kMcaVisible}) {
        const auto forced = forced_class(l, truth);
        if (forced) {
          // Keep the stream aligned whether or not the class is forced.
          sample_class(rng, spec.priors.at(std::string(l)));
          truth[std::string(l)] = *forced;
        } else {
          draw(l);
        }
      }
      PhantomImage img = render_image(spec, rng, an, truth);
      char sid[32];
      std::snprintf(sid, sizeof sid, "%s__S%02d", pid, s);
      img.image_id = sid;
      img.patient_id = pid;

      const bool ok = spec.segmentability.holds(img.truth);
      const bool flip = bernoulli(rng, ok ? spec.segmentability.flip_if_success : spec.segmentability.flip_if_failure);
      corpus.outcomes.push_back({img.image_id, ok != flip});
      corpus.annotations.push_back({img.image_id, img.patient_id, "oracle", img.truth});
      corpus.images.push_back(std::move(img));
    }
  }

  Rng rng(mix(spec.seed ^ 0x5241544552ULL));
  std::vector<std::size_t> order(corpus.images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), static_cast<std::size_t>(spec.rating_subset)));
  std::sort(order.begin(), order.end());
  for (std::size_t i : order) {
    const PhantomImage& img = corpus.images[i];
    for (const auto& [rater, err] : spec.rater_error) {
      AnnotationRecord rec{img.image_id, img.patient_id, rater, {}};
      for (const auto& def : tax) {
        int v = img.truth.at(def.name);
        if (bernoulli(rng, err)) v = std::uniform_int_distribution<int>(0, def.class_count() - 1)(rng);
        rec.values[def.name] = v;
      }
      corpus.ratings.push_back(std::move(rec));
    }
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "sequences", ec);
  if (ec) throw IoError("cannot create directory", (dir / "sequences").string());
  for (const auto& img : corpus.images) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : img.image_id) h = (h ^ ch) * 1099511628211ULL;
    const std::string uid = "2.25." + std::to_string(mix(h) >> 1);
    dicom::write_multiframe(dir / "sequences" / (img.image_id + ".dcm"), img.patient_id, uid, img.side, img.side,
                            img.pixels);
  }
  const Taxonomy& tax = builtin_taxonomy();
  write_annotations(dir / "annotations.csv", corpus.annotations, tax);
  write_outcomes(dir / "outcomes.csv", corpus.outcomes);
  write_annotations(dir / "ratings.csv", corpus.ratings, tax);
}

}  // namespace dsaqc::phantom
