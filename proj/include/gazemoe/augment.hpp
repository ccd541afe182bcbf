#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "gazemoe/config.hpp"
#include "gazemoe/rng.hpp"
#include "gazemoe/types.hpp"

namespace gazemoe {

/// RGB image with joint gaze annotations. Pixels are row-major h×w×3.
struct AnnotatedImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
  BBox bbox;
  std::optional<Point2> gaze_point;
  bool in_frame = false;

  std::uint8_t& px(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t px(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  bool operator==(const AnnotatedImage&) const = default;
};

/// Rounds a normalized coordinate onto the 2⁻⁴⁰ lattice inside [0,1]. On the
/// lattice x ↦ 1 − x is exact, which makes flips exact involutions.
double snap_coordinate(double v);
BBox snap(const BBox& b);

/// Crops to `window` (normalized, square in relative terms) and resizes back
/// to the input resolution with bilinear sampling; annotations are remapped
/// into the window's frame.
AnnotatedImage crop_to_window(const AnnotatedImage& s, const BBox& window);

/// Draws a window of area in [crop_scale_min, crop_scale_max] (aspect kept)
/// containing the bbox and, when in frame, the gaze point. Gives up after 10
/// draws.
std::optional<BBox> sample_crop_window(const AnnotatedImage& s, Rng& rng, const AugConfig& cfg);

AnnotatedImage random_crop(const AnnotatedImage& s, Rng& rng, const AugConfig& cfg = {});
AnnotatedImage hflip(const AnnotatedImage& s);
AnnotatedImage bbox_jitter(const AnnotatedImage& s, Rng& rng, double jitter_frac, double min_size = 0.01);

// Photometric primitives; each maps 8-bit RGB in place.
void adjust_brightness(AnnotatedImage& s, double factor);
void adjust_contrast(AnnotatedImage& s, double factor);
void adjust_saturation(AnnotatedImage& s, double factor);
void adjust_hue(AnnotatedImage& s, double shift);
void to_grayscale(AnnotatedImage& s);
void autocontrast(AnnotatedImage& s);
void adjust_sharpness(AnnotatedImage& s, double factor);

/// Colour jitter → grayscale(p) → autocontrast(p) → sharpness, in that order.
/// Annotations are never touched.
AnnotatedImage photometric(const AnnotatedImage& s, Rng& rng, const AugConfig& cfg);

/// crop → hflip(p) → bbox jitter → photometric, each behind its enable flag.
AnnotatedImage pipeline(const AnnotatedImage& s, const AugConfig& cfg, Rng& rng);

}  // namespace gazemoe
