#include "s2p/synthetic.hpp"

#include "s2p/error.hpp"
#include "s2p/random.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace s2p {

const char* to_string(StrokeStyle s) {
  switch (s) {
    case StrokeStyle::Pencil: return "pencil";
    case StrokeStyle::Charcoal: return "charcoal";
    case StrokeStyle::Pen: return "pen";
  }
  return "?";
}

StrokeStyle parse_stroke_style(const std::string& s) {
  if (s == "pencil") return StrokeStyle::Pencil;
  if (s == "charcoal") return StrokeStyle::Charcoal;
  if (s == "pen") return StrokeStyle::Pen;
  fail(ErrorKind::Usage, "unknown stroke style '" + s + "'");
}

namespace {

constexpr int kSupersample = 4;

using Rgb = std::array<double, 3>;

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

Rgb scale(const Rgb& c, double s) { return {c[0] * s, c[1] * s, c[2] * s}; }

double luminance(const Rgb& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

cv::Scalar scalar(const Rgb& c) {
  return cv::Scalar(std::clamp(c[0], 0.0, 255.0), std::clamp(c[1], 0.0, 255.0), std::clamp(c[2], 0.0, 255.0));
}

/// Attributes fixed by the identity seed, in units of the image size.
struct Identity {
  double cx, cy, ax, ay;
  double eye_rise, eye_dx, eye_rx, eye_ry;
  double brow_gap, brow_thick, brow_tilt;
  double nose_len, nose_w;
  double mouth_drop, mouth_w, mouth_h;
  double hairline;
  int hair_style;
  Rgb skin, hair, iris, lip, background, clothing;
  double skin_dark, hair_dark, iris_dark, lip_dark;
};

Identity make_identity(uint64_t seed) {
  Rng r(mix_seed(seed, 0x1d));
  Identity id{};
  id.cx = 0.5 + r.uniform(-0.02, 0.02);
  id.cy = 0.52 + r.uniform(-0.02, 0.02);
  id.ax = r.uniform(0.24, 0.32);
  id.ay = r.uniform(0.31, 0.39);
  id.eye_rise = id.ay * r.uniform(0.02, 0.2);
  id.eye_dx = id.ax * r.uniform(0.34, 0.5);
  id.eye_rx = id.ax * r.uniform(0.13, 0.2);
  id.eye_ry = id.eye_rx * r.uniform(0.45, 0.65);
  id.brow_gap = id.ay * r.uniform(0.1, 0.2);
  id.brow_thick = r.uniform(0.008, 0.02);
  id.brow_tilt = r.uniform(-0.3, 0.3);
  id.nose_len = id.ay * r.uniform(0.22, 0.38);
  id.nose_w = id.ax * r.uniform(0.1, 0.18);
  id.mouth_drop = id.ay * r.uniform(0.15, 0.27);
  id.mouth_w = id.ax * r.uniform(0.28, 0.48);
  id.mouth_h = r.uniform(0.012, 0.03);
  id.hair_style = static_cast<int>(r.below(4));
  id.hairline = r.uniform(0.2, 0.6);

  id.skin_dark = r.uniform();
  id.skin = lerp({236, 205, 180}, {120, 78, 52}, id.skin_dark);
  for (auto& c : id.skin) c += r.uniform(-8, 8);

  static const std::array<Rgb, 6> hair_palette{
      {{30, 25, 22}, {70, 45, 30}, {120, 80, 45}, {210, 175, 110}, {150, 60, 30}, {160, 160, 155}}};
  id.hair = hair_palette[r.below(hair_palette.size())];
  for (auto& c : id.hair) c += r.uniform(-10, 10);
  id.hair_dark = 1.0 - luminance(id.hair) / 255.0;

  static const std::array<Rgb, 5> iris_palette{
      {{90, 55, 30}, {40, 30, 25}, {70, 110, 170}, {80, 120, 70}, {120, 100, 50}}};
  id.iris = iris_palette[r.below(iris_palette.size())];
  id.iris_dark = 1.0 - luminance(id.iris) / 255.0;

  id.lip = {id.skin[0] * r.uniform(0.75, 0.9), id.skin[1] * r.uniform(0.5, 0.6), id.skin[2] * r.uniform(0.5, 0.62)};
  id.lip_dark = 1.0 - luminance(id.lip) / 255.0;

  static const std::array<Rgb, 5> bg_palette{
      {{200, 205, 210}, {170, 190, 215}, {190, 210, 190}, {215, 205, 185}, {150, 150, 160}}};
  id.background = bg_palette[r.below(bg_palette.size())];
  id.clothing = {r.uniform(30, 220), r.uniform(30, 220), r.uniform(30, 220)};
  return id;
}

std::vector<Landmark> canonical_landmarks(const Identity& id) {
  std::vector<Landmark> lm(kLandmarkCount);
  const double eye_y = id.cy - id.eye_rise;
  lm[kHeadCenter] = {id.cx, id.cy};
  lm[kLeftEye] = {id.cx - id.eye_dx, eye_y};
  lm[kRightEye] = {id.cx + id.eye_dx, eye_y};
  lm[kLeftBrow] = {id.cx - id.eye_dx, eye_y - id.brow_gap};
  lm[kRightBrow] = {id.cx + id.eye_dx, eye_y - id.brow_gap};
  lm[kNoseTip] = {id.cx, eye_y + id.nose_len};
  lm[kMouth] = {id.cx, std::min(eye_y + id.nose_len + id.mouth_drop, id.cy + 0.8 * id.ay)};
  lm[kChin] = {id.cx, id.cy + id.ay};
  return lm;
}

/// Fixed per-identity displacement directions, components in [-1, 1].
std::vector<Landmark> jitter_directions(uint64_t seed) {
  Rng r(mix_seed(seed, 0x717));
  std::vector<Landmark> d(kLandmarkCount);
  for (auto& p : d) p = {r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0)};
  return d;
}

struct Variant {
  double shift_x = 0.0, shift_y = 0.0, zoom = 1.0;
  double light_angle = -0.6;
  double exposure = 1.0;
  uint64_t noise_seed = 0;
};

Variant make_variant(uint64_t seed, int variant) {
  Variant v;
  v.noise_seed = mix_seed(seed, 0x5000 + static_cast<uint64_t>(variant));
  if (variant == 0) return v;
  Rng r(mix_seed(seed, 0x9000 + static_cast<uint64_t>(variant)));
  v.shift_x = r.uniform(-0.03, 0.03);
  v.shift_y = r.uniform(-0.03, 0.03);
  v.zoom = r.uniform(0.96, 1.04);
  v.light_angle = r.uniform(-1.4, 0.2);
  v.exposure = r.uniform(0.9, 1.1);
  return v;
}

Landmark apply_variant(const Landmark& p, const Variant& v) {
  return {0.5 + (p.x - 0.5) * v.zoom + v.shift_x, 0.5 + (p.y - 0.5) * v.zoom + v.shift_y};
}

/// Everything needed to draw one face, in canvas pixels.
struct Geometry {
  cv::Point2d head;
  double ax = 0, ay = 0;
  std::array<cv::Point2d, 2> eye, brow;
  cv::Point2d nose, mouth;
  double eye_rx = 0, eye_ry = 0, brow_thick = 0, brow_tilt = 0, nose_w = 0, mouth_w = 0, mouth_h = 0;
  double hairline_y = 0;
  int hair_style = 0;
  double unit = 0;  // canvas pixels per image-size unit
};

Geometry make_geometry(const Identity& id, const std::vector<Landmark>& lm, const Variant& v, int canvas) {
  Geometry g;
  const double u = canvas;
  auto px = [&](const Landmark& p) { return cv::Point2d(p.x * u, p.y * u); };
  g.unit = u;
  g.head = px(lm[kHeadCenter]);
  g.ax = id.ax * v.zoom * u;
  g.ay = std::max(0.2 * u * v.zoom, px(lm[kChin]).y - g.head.y);
  g.eye = {px(lm[kLeftEye]), px(lm[kRightEye])};
  g.brow = {px(lm[kLeftBrow]), px(lm[kRightBrow])};
  g.nose = px(lm[kNoseTip]);
  g.mouth = px(lm[kMouth]);
  const double z = v.zoom * u;
  g.eye_rx = id.eye_rx * z;
  g.eye_ry = id.eye_ry * z;
  g.brow_thick = id.brow_thick * z;
  g.brow_tilt = id.brow_tilt;
  g.nose_w = id.nose_w * z;
  g.mouth_w = id.mouth_w * z;
  g.mouth_h = id.mouth_h * z;
  g.hair_style = id.hair_style;
  g.hairline_y = g.head.y - g.ay * (id.hair_style == 2 ? 0.75 : id.hairline + 0.1);
  return g;
}

bool in_ellipse(double x, double y, const cv::Point2d& c, double ax, double ay) {
  const double dx = (x - c.x) / ax, dy = (y - c.y) / ay;
  return dx * dx + dy * dy <= 1.0;
}

/// Hair region: the top of a slightly enlarged head ellipse above a curved
/// hairline, plus side locks for the long style.
cv::Mat hair_mask(const Geometry& g, int canvas) {
  cv::Mat mask(canvas, canvas, CV_8U, cv::Scalar(0));
  for (int y = 0; y < canvas; ++y) {
    auto* row = mask.ptr<uint8_t>(y);
    for (int x = 0; x < canvas; ++x) {
      const double dx = (x - g.head.x) / g.ax;
      const double curve = g.hair_style == 3 ? 0.25 * g.ay * dx : 0.15 * g.ay * dx * dx;
      const bool top = in_ellipse(x, y, g.head, g.ax * 1.08, g.ay * 1.08) && y < g.hairline_y + curve;
      bool side = false;
      if (g.hair_style == 1) {
        side = in_ellipse(x, y, {g.head.x, g.head.y + 0.15 * g.ay}, g.ax * 1.18, g.ay * 1.05) &&
               !in_ellipse(x, y, g.head, g.ax * 0.98, g.ay * 0.98) && y < g.head.y + 0.6 * g.ay;
      }
      if (top || side) row[x] = 255;
    }
  }
  return mask;
}

cv::Mat downsample(const cv::Mat& canvas, int resolution) {
  cv::Mat out;
  cv::resize(canvas, out, cv::Size(resolution, resolution), 0, 0, cv::INTER_AREA);
  return out;
}

RawImage to_raw(const cv::Mat& rgb) {
  RawImage img;
  img.width = rgb.cols;
  img.height = rgb.rows;
  img.rgb.resize(static_cast<size_t>(rgb.cols) * rgb.rows * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<uint8_t>(y), rgb.cols * 3, img.rgb.data() + static_cast<size_t>(y) * rgb.cols * 3);
  }
  return img;
}

std::vector<Landmark> to_output_pixels(const std::vector<Landmark>& lm, int resolution) {
  std::vector<Landmark> out;
  for (const auto& p : lm) out.push_back({p.x * resolution, p.y * resolution});
  return out;
}

void require_resolution(int resolution) {
  require(resolution >= 16 && resolution <= 1024, ErrorKind::Usage,
          "synthetic render resolution must lie in [16, 1024], got " + std::to_string(resolution));
}

}  // namespace

FaceRender render_photo(const SyntheticFaceParams& params, int resolution, int variant) {
  require_resolution(resolution);
  const Identity id = make_identity(params.identity_seed);
  const Variant v = make_variant(params.identity_seed, variant);
  std::vector<Landmark> lm = canonical_landmarks(id);
  for (auto& p : lm) p = apply_variant(p, v);
  const int canvas = resolution * kSupersample;
  const Geometry g = make_geometry(id, lm, v, canvas);
  Rng noise(v.noise_seed);

  cv::Mat img(canvas, canvas, CV_8UC3);
  for (int y = 0; y < canvas; ++y) {
    const Rgb c = scale(id.background, 1.0 - 0.2 * y / canvas);
    img.row(y).setTo(scalar(c));
  }
  // neck and shoulders
  cv::rectangle(img, cv::Point2d(g.head.x - 0.38 * g.ax, g.head.y + 0.5 * g.ay), cv::Point2d(g.head.x + 0.38 * g.ax, canvas),
                scalar(scale(id.skin, 0.78)), cv::FILLED);
  cv::ellipse(img, cv::Point2d(g.head.x, g.head.y + 1.55 * g.ay), cv::Size2d(2.2 * g.ax, 0.6 * g.ay), 0, 0, 360,
              scalar(id.clothing), cv::FILLED);

  // shaded skin: pseudo-normal of the head ellipse lit from light_angle
  const double lx = std::cos(v.light_angle), ly = std::sin(v.light_angle);
  const double lz = 0.8;
  const double ln = std::sqrt(lx * lx + ly * ly + lz * lz);
  const cv::Mat hair = hair_mask(g, canvas);
  for (int y = 0; y < canvas; ++y) {
    auto* row = img.ptr<cv::Vec3b>(y);
    const auto* hrow = hair.ptr<uint8_t>(y);
    for (int x = 0; x < canvas; ++x) {
      const double u = (x - g.head.x) / g.ax, w = (y - g.head.y) / g.ay;
      const double rr = u * u + w * w;
      if (hrow[x] != 0) {
        const double strands = 0.85 + 0.15 * std::sin(0.9 * x / kSupersample * 3.0 + 2.0 * std::sin(0.07 * y));
        for (int c = 0; c < 3; ++c) row[x][c] = cv::saturate_cast<uint8_t>(id.hair[c] * strands * v.exposure);
        continue;
      }
      if (rr > 1.0) continue;
      const double nz = std::sqrt(std::max(0.0, 1.0 - rr));
      const double lambert = std::max(0.0, (u * lx + w * ly + nz * lz) / ln);
      const double shade = (0.55 + 0.5 * lambert) * v.exposure;
      const double grain = 1.0 + 0.03 * (noise.uniform() - 0.5);
      for (int c = 0; c < 3; ++c) row[x][c] = cv::saturate_cast<uint8_t>(id.skin[c] * shade * grain);
    }
  }

  const Rgb shadow = scale(id.skin, 0.62 * v.exposure);
  for (int s = 0; s < 2; ++s) {
    const auto& e = g.eye[static_cast<size_t>(s)];
    cv::ellipse(img, e, cv::Size2d(g.eye_rx, g.eye_ry), 0, 0, 360, cv::Scalar(240, 240, 236), cv::FILLED);
    cv::circle(img, e, static_cast<int>(std::lround(g.eye_ry * 0.95)), scalar(id.iris), cv::FILLED);
    cv::circle(img, e, static_cast<int>(std::lround(g.eye_ry * 0.45)), cv::Scalar(15, 12, 12), cv::FILLED);
    cv::ellipse(img, e, cv::Size2d(g.eye_rx, g.eye_ry), 0, 180, 360, scalar(scale(id.hair, 0.6)),
                std::max(1, static_cast<int>(g.unit * 0.006)));
    const double side = s == 0 ? -1.0 : 1.0;
    const auto& b = g.brow[static_cast<size_t>(s)];
    const double tilt = g.brow_tilt * g.eye_rx * side;
    cv::line(img, cv::Point2d(b.x - g.eye_rx * 1.1, b.y + tilt), cv::Point2d(b.x + g.eye_rx * 1.1, b.y - tilt),
             scalar(scale(id.hair, 0.8)), std::max(1, static_cast<int>(std::lround(g.brow_thick))));
  }
  const cv::Point2d bridge((g.eye[0].x + g.eye[1].x) / 2.0, (g.eye[0].y + g.eye[1].y) / 2.0);
  const int nose_stroke = std::max(1, static_cast<int>(g.unit * 0.008));
  cv::line(img, cv::Point2d(bridge.x + g.nose_w * 0.4, bridge.y), cv::Point2d(g.nose.x + g.nose_w * 0.5, g.nose.y),
           scalar(shadow), nose_stroke);
  cv::ellipse(img, cv::Point2d(g.nose.x - g.nose_w * 0.6, g.nose.y), cv::Size2d(g.nose_w * 0.35, g.nose_w * 0.2), 0, 0,
              360, scalar(scale(shadow, 0.6)), cv::FILLED);
  cv::ellipse(img, cv::Point2d(g.nose.x + g.nose_w * 0.6, g.nose.y), cv::Size2d(g.nose_w * 0.35, g.nose_w * 0.2), 0, 0,
              360, scalar(scale(shadow, 0.6)), cv::FILLED);
  cv::ellipse(img, g.mouth, cv::Size2d(g.mouth_w, g.mouth_h), 0, 0, 360, scalar(scale(id.lip, v.exposure)), cv::FILLED);
  cv::line(img, cv::Point2d(g.mouth.x - g.mouth_w, g.mouth.y), cv::Point2d(g.mouth.x + g.mouth_w, g.mouth.y),
           scalar(scale(id.lip, 0.55)), std::max(1, static_cast<int>(g.unit * 0.005)));

  cv::GaussianBlur(img, img, cv::Size(0, 0), 0.8 * kSupersample / 2.0);
  FaceRender out;
  out.image = to_raw(downsample(img, resolution));
  out.landmarks = to_output_pixels(lm, resolution);
  return out;
}

FaceRender render_sketch(const SyntheticFaceParams& params, int resolution, int variant) {
  require_resolution(resolution);
  require(params.geometry_jitter >= 0.0 && std::isfinite(params.geometry_jitter), ErrorKind::Usage,
          "geometry_jitter must be non-negative");
  const Identity id = make_identity(params.identity_seed);
  const Variant v = make_variant(params.identity_seed, variant);
  std::vector<Landmark> lm = canonical_landmarks(id);
  const auto dirs = jitter_directions(params.identity_seed);
  for (size_t i = 0; i < lm.size(); ++i) {
    lm[i].x += params.geometry_jitter * dirs[i].x;
    lm[i].y += params.geometry_jitter * dirs[i].y;
    lm[i] = apply_variant(lm[i], v);
  }
  const int canvas = resolution * kSupersample;
  const Geometry g = make_geometry(id, lm, v, canvas);
  Rng noise(mix_seed(v.noise_seed, 0x5c));

  double ink = 90, thick = 0.012, blur = 0.6, hatch_angle = 1.0;
  bool cross = false;
  switch (params.texture_style) {
    case StrokeStyle::Pencil: break;
    case StrokeStyle::Charcoal: ink = 45, thick = 0.022, blur = 1.6, hatch_angle = 0.8; break;
    case StrokeStyle::Pen: ink = 15, thick = 0.008, blur = 0.0, cross = true; break;
  }
  const int stroke = std::max(1, static_cast<int>(std::lround(thick * g.unit)));
  const cv::Scalar ink_c(ink);

  cv::Mat img(canvas, canvas, CV_8U);
  for (int y = 0; y < canvas; ++y) {
    auto* row = img.ptr<uint8_t>(y);
    for (int x = 0; x < canvas; ++x) row[x] = cv::saturate_cast<uint8_t>(242.0 + 12.0 * (noise.uniform() - 0.5));
  }

  // Hatching of a masked region; denser and darker for darker source tones.
  auto hatch = [&](const cv::Mat& mask, double darkness, double angle) {
    cv::Mat layer(canvas, canvas, CV_8U, cv::Scalar(255));
    const double spacing = std::max(2.0, (18.0 - 13.0 * darkness) * g.unit / 256.0);
    const double tone = 235.0 - 180.0 * darkness;
    const int passes = cross ? 2 : 1;
    for (int pass = 0; pass < passes; ++pass) {
      const double a = angle + pass * 1.2;
      const double dx = std::cos(a), dy = std::sin(a);
      for (double off = -canvas * 1.5; off < canvas * 1.5; off += spacing) {
        const cv::Point2d c(canvas / 2.0 - dy * off, canvas / 2.0 + dx * off);
        cv::line(layer, c - cv::Point2d(dx, dy) * canvas * 2.0, c + cv::Point2d(dx, dy) * canvas * 2.0, cv::Scalar(tone),
                 std::max(1, stroke / 2));
      }
    }
    cv::Mat masked;
    layer.copyTo(masked, mask);
    cv::Mat inv;
    cv::bitwise_not(mask, inv);
    masked.setTo(cv::Scalar(255), inv);
    cv::min(img, masked, img);
  };

  const cv::Mat hair = hair_mask(g, canvas);
  hatch(hair, 0.15 + 0.85 * id.hair_dark, hatch_angle);
  cv::Mat shade_side(canvas, canvas, CV_8U, cv::Scalar(0));
  for (int y = 0; y < canvas; ++y) {
    auto* row = shade_side.ptr<uint8_t>(y);
    const auto* hrow = hair.ptr<uint8_t>(y);
    for (int x = 0; x < canvas; ++x) {
      if (hrow[x] == 0 && in_ellipse(x, y, g.head, g.ax, g.ay) && x > g.head.x + (0.55 - 0.4 * id.skin_dark) * g.ax) {
        row[x] = 255;
      }
    }
  }
  hatch(shade_side, 0.1 + 0.6 * id.skin_dark, hatch_angle + 0.6);

  cv::ellipse(img, g.head, cv::Size2d(g.ax, g.ay), 0, 0, 360, ink_c, stroke);
  std::vector<std::vector<cv::Point>> contours;
  cv::findContours(hair.clone(), contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_SIMPLE);
  cv::drawContours(img, contours, -1, ink_c, stroke);

  for (int s = 0; s < 2; ++s) {
    const auto& e = g.eye[static_cast<size_t>(s)];
    cv::ellipse(img, e, cv::Size2d(g.eye_rx, g.eye_ry), 0, 0, 360, ink_c, stroke);
    cv::circle(img, e, static_cast<int>(std::lround(g.eye_ry * 0.95)), cv::Scalar(235.0 - 200.0 * id.iris_dark),
               cv::FILLED);
    cv::circle(img, e, static_cast<int>(std::lround(g.eye_ry * 0.45)), ink_c, cv::FILLED);
    const double side = s == 0 ? -1.0 : 1.0;
    const auto& b = g.brow[static_cast<size_t>(s)];
    const double tilt = g.brow_tilt * g.eye_rx * side;
    cv::line(img, cv::Point2d(b.x - g.eye_rx * 1.1, b.y + tilt), cv::Point2d(b.x + g.eye_rx * 1.1, b.y - tilt),
             cv::Scalar(ink + 60.0 * (1.0 - id.hair_dark)), std::max(stroke, static_cast<int>(std::lround(g.brow_thick))));
  }
  const cv::Point2d bridge((g.eye[0].x + g.eye[1].x) / 2.0, (g.eye[0].y + g.eye[1].y) / 2.0);
  cv::line(img, cv::Point2d(bridge.x + g.nose_w * 0.4, bridge.y), cv::Point2d(g.nose.x + g.nose_w * 0.5, g.nose.y), ink_c,
           stroke);
  cv::ellipse(img, g.nose, cv::Size2d(g.nose_w, g.nose_w * 0.45), 0, 20, 160, ink_c, stroke);
  cv::ellipse(img, g.mouth, cv::Size2d(g.mouth_w, g.mouth_h), 0, 0, 360, cv::Scalar(235.0 - 170.0 * id.lip_dark),
              cv::FILLED);
  cv::ellipse(img, g.mouth, cv::Size2d(g.mouth_w, g.mouth_h), 0, 0, 360, ink_c, stroke);
  cv::line(img, cv::Point2d(g.mouth.x - g.mouth_w, g.mouth.y), cv::Point2d(g.mouth.x + g.mouth_w, g.mouth.y), ink_c,
           stroke);

  if (blur > 0.0) cv::GaussianBlur(img, img, cv::Size(0, 0), blur * kSupersample / 2.0);
  cv::Mat small = downsample(img, resolution);
  cv::Mat rgb;
  cv::cvtColor(small, rgb, cv::COLOR_GRAY2RGB);
  FaceRender out;
  out.image = to_raw(rgb);
  out.landmarks = to_output_pixels(lm, resolution);
  return out;
}

double landmark_alignment_error(const std::vector<Landmark>& a, const std::vector<Landmark>& b, int resolution) {
  require(a.size() == b.size() && !a.empty(), ErrorKind::Dimension, "landmark sets differ in size");
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += std::hypot(a[i].x - b[i].x, a[i].y - b[i].y);
  return sum / static_cast<double>(a.size()) / resolution;
}

uint64_t synthetic_identity_seed(uint64_t dataset_seed, int64_t index) {
  return mix_seed(dataset_seed, 0x1000 + static_cast<uint64_t>(index));
}

std::string synthetic_identity_id(int64_t index) {
  std::ostringstream os;
  os << "id" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

DatasetManifest generate_synthetic_dataset(const SyntheticDatasetOptions& opts, const std::string& out_dir) {
  require(opts.n_identities >= 2, ErrorKind::Usage, "need ≥ 2 identities");
  require(opts.renders_per_identity >= 1, ErrorKind::Usage, "renders_per_identity must be >= 1");
  require(opts.geometry_jitter >= 0.0, ErrorKind::Usage, "geometry_jitter must be non-negative");
  require(opts.resolution >= 32 && is_power_of_two(opts.resolution), ErrorKind::Usage,
          "dataset resolution must be a power of two >= 32");

  std::vector<std::string> ids;
  for (int64_t i = 0; i < opts.n_identities; ++i) ids.push_back(synthetic_identity_id(i));
  DatasetManifest m;
  m.root = out_dir;
  m.resolution = opts.resolution;
  m.split = split_identities(ids, opts.train_fraction, opts.seed);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) fail(ErrorKind::Io, "cannot create dataset directory " + out_dir);

  const std::set<std::string> train(m.split.train.begin(), m.split.train.end());
  std::vector<PairingEntry> pairing;
  const int res = static_cast<int>(opts.resolution);
  for (int64_t i = 0; i < opts.n_identities; ++i) {
    const std::string& id = ids[static_cast<size_t>(i)];
    const std::string split = train.count(id) != 0 ? "train" : "test";
    SyntheticFaceParams p{synthetic_identity_seed(opts.seed, i), opts.geometry_jitter, opts.texture_style};
    PairingEntry entry;
    entry.id = id;
    for (int k = 0; k < opts.renders_per_identity; ++k) {
      const std::string name = id + "__" + std::to_string(k) + ".png";
      const std::string rel_a = "domain_a/" + split + "/" + name;
      const std::string rel_b = "domain_b/" + split + "/" + name;
      FaceRender sketch = render_sketch(p, res, k);
      FaceRender photo = render_photo(p, res, k);
      write_png((fs::path(out_dir) / rel_a).string(), sketch.image);
      write_png((fs::path(out_dir) / rel_b).string(), photo.image);
      entry.domain_a_files.push_back(rel_a);
      entry.domain_b_files.push_back(rel_b);
      if (k == 0) {
        entry.landmarks_a = sketch.landmarks;
        entry.landmarks_b = photo.landmarks;
      }
    }
    pairing.push_back(std::move(entry));
  }
  m.set_pairing(std::move(pairing));
  m.generator_json = nlohmann::json{{"seed", opts.seed},
                                    {"n_identities", opts.n_identities},
                                    {"train_fraction", opts.train_fraction},
                                    {"geometry_jitter", opts.geometry_jitter},
                                    {"texture_style", to_string(opts.texture_style)},
                                    {"renders_per_identity", opts.renders_per_identity}}
                         .dump();
  m.save((fs::path(out_dir) / "manifest.json").string());
  return m;
}

IdentityTrainingSet make_identity_training_set(const IdentitySetOptions& opts) {
  require(opts.n_identities >= 2 && opts.train_renders >= 1 && opts.held_out_renders >= 1, ErrorKind::Usage,
          "identity set needs >= 2 identities and >= 1 train / held-out render each");
  IdentityTrainingSet set;
  set.num_classes = opts.n_identities;
  std::vector<torch::Tensor> train, held;
  std::vector<int64_t> train_y, held_y;
  const int res = static_cast<int>(opts.resolution);
  for (int64_t i = 0; i < opts.n_identities; ++i) {
    SyntheticFaceParams p{synthetic_identity_seed(opts.seed, i), 0.0, StrokeStyle::Pencil};
    for (int k = 0; k < opts.train_renders + opts.held_out_renders; ++k) {
      auto img = preprocess(render_photo(p, res, k).image, opts.resolution);
      if (k < opts.train_renders) {
        train.push_back(img);
        train_y.push_back(i);
      } else {
        held.push_back(img);
        held_y.push_back(i);
      }
    }
  }
  set.train_images = torch::stack(train);
  set.train_labels = torch::tensor(train_y, torch::kInt64);
  set.held_out_images = torch::stack(held);
  set.held_out_labels = torch::tensor(held_y, torch::kInt64);
  return set;
}

}  // namespace s2p
