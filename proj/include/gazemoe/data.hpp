#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gazemoe/augment.hpp"
#include "gazemoe/config.hpp"
#include "gazemoe/types.hpp"

namespace gazemoe {

/// Unnormalized Gaussian on a size×size grid with value 1 at the cell centre
/// nearest `gaze`; sigma is in cells.
std::vector<double> gaussian_target(Point2 gaze, std::size_t size, double sigma);

// ---- annotations ----------------------------------------------------------

/// One person in one frame. Serialized as one JSON object per line:
///   {"sample_id", "image_path", "feature_path", "image_size": [w, h],
///    "bbox": [x_min, y_min, x_max, y_max], "gaze_point": [x, y] | null,
///    "in_frame": 0 | 1}
struct AnnotationRecord {
  std::string sample_id;
  std::optional<std::string> image_path;
  std::optional<std::string> feature_path;
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  BBox bbox;
  std::optional<Point2> gaze_point;
  int in_frame = 0;

  /// Throws ParseError naming the violated field.
  void validate() const;
  bool operator==(const AnnotationRecord&) const = default;
};

Json to_json(const AnnotationRecord& r);
AnnotationRecord record_from_json(const Json& j);
std::string serialize_record(const AnnotationRecord& r);
AnnotationRecord parse_record(std::string_view line);

/// Reads a line-delimited annotation file; blank lines are skipped. Errors
/// carry the 1-based line number.
std::vector<AnnotationRecord> load_annotations(const std::string& path);
void save_annotations(const std::string& path, const std::vector<AnnotationRecord>& records);

// ---- feature files --------------------------------------------------------

/// On disk: "GMFT", u32 version, u32 header length, UTF-8 JSON header
/// {"dims": [C, G, G], "dtype": "f32", "source": ...}, then C·G·G
/// little-endian f32 values. Values are widened to f64 in memory.
struct FeatureFile {
  FeatureMap map;
  std::string dtype = "f32";
  std::string source = "synthetic";
};

inline constexpr std::uint32_t kFeatureFileVersion = 1;

std::string encode_feature_file(const FeatureFile& f);
FeatureFile decode_feature_file(std::string_view bytes);
void save_features(const std::string& path, const FeatureFile& f);
FeatureFile load_features(const std::string& path);
/// Rejects files whose dims differ from feature_dim × grid × grid.
FeatureFile load_features(const std::string& path, std::size_t feature_dim, std::size_t grid);

// ---- images ---------------------------------------------------------------

void save_ppm(const std::string& path, const AnnotatedImage& img);
/// Loads pixels only; annotations are left default.
AnnotatedImage load_ppm(const std::string& path);
/// 8-bit grayscale "P5 W H 255" graymap.
std::string encode_pgm(std::span<const double> values, std::size_t width, std::size_t height);

// ---- synthetic encoder / dataset ------------------------------------------

/// Deterministic stand-in for the frozen encoder. A feature map is the sum of
///  - per-sample noise seeded by a hash of the sample id,
///  - a geometric signature: head-mask component, a bump at the gaze cell and
///    a global (cos θ, sin θ) code for the head→gaze direction, and
///  - optionally a fixed random projection of per-cell mean pixel colour.
class SyntheticEncoder {
 public:
  SyntheticEncoder(EncoderConfig cfg, std::size_t feature_dim, std::size_t grid);

  FeatureMap noise_component(const std::string& sample_id) const;
  FeatureMap signature_component(const BBox& bbox, const std::optional<Point2>& gaze) const;
  FeatureMap image_component(const AnnotatedImage& image) const;

  /// Full map, rounded through f32 so it equals its on-disk form.
  FeatureMap encode(const std::string& sample_id, const BBox& bbox, const std::optional<Point2>& gaze,
                    const AnnotatedImage* image = nullptr) const;

  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t grid() const { return grid_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  std::vector<double> unit_direction(std::uint64_t stream) const;

  EncoderConfig cfg_;
  std::size_t feature_dim_;
  std::size_t grid_;
  std::vector<double> u_head_, u_target_, u_cos_, u_sin_;
  std::vector<double> colour_proj_;  // feature_dim × 3
};

/// Scene raster for a record: seeded texture, a skin-toned head box and a
/// red target disc when in frame.
AnnotatedImage render_scene(const AnnotationRecord& r, std::size_t width, std::size_t height);

struct Sample {
  AnnotationRecord record;
  FeatureMap features;
  std::optional<AnnotatedImage> image;
};

AnnotatedImage to_annotated(const Sample& s);

/// n samples, exactly round(n·class_balance) of them in frame, in seeded order.
std::vector<Sample> synthetic_dataset(std::size_t n, double class_balance, std::uint64_t seed,
                                      const SyntheticEncoder& encoder, std::size_t patch_px = 4);

/// Writes annotations.jsonl plus features/<id>.gmft and images/<id>.ppm.
void save_dataset(const std::string& dir, const std::vector<Sample>& samples);
/// Loads records and their feature files (and images when present), paths
/// resolved relative to the annotation file.
std::vector<Sample> load_dataset(const std::string& annotations_path, std::size_t feature_dim, std::size_t grid);

std::vector<int> labels_of(const std::vector<Sample>& samples);

}  // namespace gazemoe
