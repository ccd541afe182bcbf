#include "gazemoe/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gazemoe/error.hpp"

namespace gazemoe {

namespace {

constexpr double kLattice = 0x1.0p40;

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

double sample_bilinear(const AnnotatedImage& s, double x, double y, std::size_t c) {
  x = std::clamp(x, 0.0, static_cast<double>(s.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(s.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, s.width - 1), y1 = std::min(y0 + 1, s.height - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = (1 - fx) * s.px(x0, y0, c) + fx * s.px(x1, y0, c);
  const double bot = (1 - fx) * s.px(x0, y1, c) + fx * s.px(x1, y1, c);
  return (1 - fy) * top + fy * bot;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  v = mx;
  const double d = mx - mn;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d == 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r) h = (g - b) / d;
  else if (mx == g) h = 2.0 + (b - r) / d;
  else h = 4.0 + (r - g) / d;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = h * 6.0;
  const auto sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

}  // namespace

double snap_coordinate(double v) { return std::round(std::clamp(v, 0.0, 1.0) * kLattice) / kLattice; }

BBox snap(const BBox& b) {
  return {snap_coordinate(b.x_min), snap_coordinate(b.y_min), snap_coordinate(b.x_max), snap_coordinate(b.y_max)};
}

AnnotatedImage crop_to_window(const AnnotatedImage& s, const BBox& window) {
  AnnotatedImage out = s;
  const double wx = window.width(), wy = window.height();
  const auto remap_x = [&](double x) { return snap_coordinate((x - window.x_min) / wx); };
  const auto remap_y = [&](double y) { return snap_coordinate((y - window.y_min) / wy); };
  out.bbox = {remap_x(s.bbox.x_min), remap_y(s.bbox.y_min), remap_x(s.bbox.x_max), remap_y(s.bbox.y_max)};
  if (s.gaze_point) out.gaze_point = Point2{remap_x(s.gaze_point->x), remap_y(s.gaze_point->y)};

  const double w = static_cast<double>(s.width), h = static_cast<double>(s.height);
  for (std::size_t v = 0; v < s.height; ++v) {
    const double sy = window.y_min * h + (static_cast<double>(v) + 0.5) * wy - 0.5;
    for (std::size_t u = 0; u < s.width; ++u) {
      const double sx = window.x_min * w + (static_cast<double>(u) + 0.5) * wx - 0.5;
      for (std::size_t c = 0; c < 3; ++c) out.px(u, v, c) = to_u8(sample_bilinear(s, sx, sy, c));
    }
  }
  return out;
}

std::optional<BBox> sample_crop_window(const AnnotatedImage& s, Rng& rng, const AugConfig& cfg) {
  double need_x0 = s.bbox.x_min, need_x1 = s.bbox.x_max, need_y0 = s.bbox.y_min, need_y1 = s.bbox.y_max;
  if (s.in_frame && s.gaze_point) {
    need_x0 = std::min(need_x0, s.gaze_point->x);
    need_x1 = std::max(need_x1, s.gaze_point->x);
    need_y0 = std::min(need_y0, s.gaze_point->y);
    need_y1 = std::max(need_y1, s.gaze_point->y);
  }
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double side = std::sqrt(rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max));
    const double lo_x = std::max(0.0, need_x1 - side), hi_x = std::min(1.0 - side, need_x0);
    const double lo_y = std::max(0.0, need_y1 - side), hi_y = std::min(1.0 - side, need_y0);
    if (lo_x > hi_x || lo_y > hi_y) continue;
    const double x0 = rng.uniform(lo_x, hi_x), y0 = rng.uniform(lo_y, hi_y);
    return BBox{x0, y0, x0 + side, y0 + side};
  }
  return std::nullopt;
}

AnnotatedImage random_crop(const AnnotatedImage& s, Rng& rng, const AugConfig& cfg) {
  const auto window = sample_crop_window(s, rng, cfg);
  if (!window) return s;
  AnnotatedImage out = crop_to_window(s, *window);
  // Guard against rounding pushing a contained edge past the frame.
  out.bbox = snap(out.bbox);
  return out;
}

AnnotatedImage hflip(const AnnotatedImage& s) {
  AnnotatedImage out = s;
  for (std::size_t y = 0; y < s.height; ++y)
    for (std::size_t x = 0; x < s.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.px(x, y, c) = s.px(s.width - 1 - x, y, c);
  const BBox b = snap(s.bbox);
  out.bbox = {1.0 - b.x_max, b.y_min, 1.0 - b.x_min, b.y_max};
  if (s.gaze_point) out.gaze_point = Point2{1.0 - snap_coordinate(s.gaze_point->x), s.gaze_point->y};
  return out;
}

AnnotatedImage bbox_jitter(const AnnotatedImage& s, Rng& rng, double jitter_frac, double min_size) {
  if (jitter_frac < 0.0) throw ConfigError("bbox_jitter: jitter_frac must be >= 0");
  if (jitter_frac == 0.0) return s;
  AnnotatedImage out = s;
  const double w = s.bbox.width(), h = s.bbox.height();
  BBox b{s.bbox.x_min + rng.uniform(-jitter_frac, jitter_frac) * w,
         s.bbox.y_min + rng.uniform(-jitter_frac, jitter_frac) * h,
         s.bbox.x_max + rng.uniform(-jitter_frac, jitter_frac) * w,
         s.bbox.y_max + rng.uniform(-jitter_frac, jitter_frac) * h};
  b = snap(b);
  const auto enforce = [min_size](double& lo, double& hi) {
    if (hi - lo >= min_size) return;
    const double mid = std::clamp(0.5 * (lo + hi), 0.5 * min_size, 1.0 - 0.5 * min_size);
    lo = snap_coordinate(mid - 0.5 * min_size);
    hi = snap_coordinate(mid + 0.5 * min_size);
  };
  enforce(b.x_min, b.x_max);
  enforce(b.y_min, b.y_max);
  out.bbox = b;
  return out;
}

void adjust_brightness(AnnotatedImage& s, double factor) {
  for (auto& p : s.pixels) p = to_u8(p * factor);
}

void adjust_contrast(AnnotatedImage& s, double factor) {
  double mean_gray = 0.0;
  const std::size_t n = s.width * s.height;
  for (std::size_t i = 0; i < n; ++i)
    mean_gray += luma(s.pixels[3 * i], s.pixels[3 * i + 1], s.pixels[3 * i + 2]);
  mean_gray /= static_cast<double>(std::max<std::size_t>(n, 1));
  for (auto& p : s.pixels) p = to_u8(mean_gray + factor * (p - mean_gray));
}

void adjust_saturation(AnnotatedImage& s, double factor) {
  const std::size_t n = s.width * s.height;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t* p = &s.pixels[3 * i];
    const double g = luma(p[0], p[1], p[2]);
    for (int c = 0; c < 3; ++c) p[c] = to_u8(g + factor * (p[c] - g));
  }
}

void adjust_hue(AnnotatedImage& s, double shift) {
  const std::size_t n = s.width * s.height;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t* p = &s.pixels[3 * i];
    double h, sat, v, r, g, b;
    rgb_to_hsv(p[0] / 255.0, p[1] / 255.0, p[2] / 255.0, h, sat, v);
    h = std::fmod(h + shift + 1.0, 1.0);
    hsv_to_rgb(h, sat, v, r, g, b);
    p[0] = to_u8(r * 255.0);
    p[1] = to_u8(g * 255.0);
    p[2] = to_u8(b * 255.0);
  }
}

void to_grayscale(AnnotatedImage& s) {
  const std::size_t n = s.width * s.height;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t* p = &s.pixels[3 * i];
    const std::uint8_t g = to_u8(luma(p[0], p[1], p[2]));
    p[0] = p[1] = p[2] = g;
  }
}

void autocontrast(AnnotatedImage& s) {
  const std::size_t n = s.width * s.height;
  for (std::size_t c = 0; c < 3; ++c) {
    std::uint8_t lo = 255, hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, s.pixels[3 * i + c]);
      hi = std::max(hi, s.pixels[3 * i + c]);
    }
    if (hi <= lo) continue;
    const double gain = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < n; ++i) s.pixels[3 * i + c] = to_u8((s.pixels[3 * i + c] - lo) * gain);
  }
}

void adjust_sharpness(AnnotatedImage& s, double factor) {
  if (s.width < 3 || s.height < 3) return;
  // Smoothed copy: [[1,1,1],[1,5,1],[1,1,1]]/13 on the interior, border pixels kept.
  std::vector<double> smooth(s.pixels.begin(), s.pixels.end());
  for (std::size_t y = 1; y + 1 < s.height; ++y)
    for (std::size_t x = 1; x + 1 < s.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 4.0 * s.px(x, y, c);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) acc += s.px(x + dx, y + dy, c);
        smooth[(y * s.width + x) * 3 + c] = acc / 13.0;
      }
  for (std::size_t i = 0; i < s.pixels.size(); ++i) s.pixels[i] = to_u8(smooth[i] + factor * (s.pixels[i] - smooth[i]));
}

AnnotatedImage photometric(const AnnotatedImage& s, Rng& rng, const AugConfig& cfg) {
  AnnotatedImage out = s;
  if (cfg.brightness > 0.0) adjust_brightness(out, rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness));
  if (cfg.contrast > 0.0) adjust_contrast(out, rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast));
  if (cfg.saturation > 0.0) adjust_saturation(out, rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation));
  if (cfg.hue > 0.0) adjust_hue(out, rng.uniform(-cfg.hue, cfg.hue));
  if (cfg.grayscale_prob > 0.0 && rng.bernoulli(cfg.grayscale_prob)) to_grayscale(out);
  if (cfg.autocontrast_prob > 0.0 && rng.bernoulli(cfg.autocontrast_prob)) autocontrast(out);
  if (!(cfg.sharpness_min == 1.0 && cfg.sharpness_max == 1.0)) {
    const double f = rng.uniform(cfg.sharpness_min, cfg.sharpness_max);
    if (f != 1.0) adjust_sharpness(out, f);
  }
  return out;
}

AnnotatedImage pipeline(const AnnotatedImage& s, const AugConfig& cfg, Rng& rng) {
  AnnotatedImage out = s;
  if (cfg.enable_crop) out = random_crop(out, rng, cfg);
  if (cfg.enable_hflip && rng.bernoulli(cfg.hflip_prob)) out = hflip(out);
  if (cfg.enable_bbox_jitter) out = bbox_jitter(out, rng, cfg.jitter_frac, cfg.min_bbox_size);
  if (cfg.enable_photometric) out = photometric(out, rng, cfg);
  return out;
}

}  // namespace gazemoe
