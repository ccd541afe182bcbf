#include "gazemoe/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gazemoe/error.hpp"
#include "gazemoe/model.hpp"
#include "gazemoe/rng.hpp"

namespace gazemoe {

namespace fs = std::filesystem;

std::vector<double> gaussian_target(Point2 gaze, std::size_t size, double sigma) {
  if (size == 0) throw ConfigError("gaussian_target: size must be positive");
  if (!(sigma > 0.0)) throw ConfigError("gaussian_target: sigma must be positive");
  const double s = static_cast<double>(size);
  const auto cell = [&](double v) { return std::clamp(std::floor(v * s), 0.0, s - 1.0); };
  const double cx = cell(gaze.x);
  const double cy = cell(gaze.y);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> out(size * size);
  for (std::size_t r = 0; r < size; ++r) {
    const double dy = static_cast<double>(r) - cy;
    for (std::size_t c = 0; c < size; ++c) {
      const double dx = static_cast<double>(c) - cx;
      out[r * size + c] = std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  return out;
}

// ---- annotations ----------------------------------------------------------

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw ParseError("field '" + field + "': " + what);
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

double number_at(const Json& arr, std::size_t i, const std::string& field) {
  if (!arr[i].is_number()) field_error(field, "expected numbers");
  return arr[i].get<double>();
}

const Json& array_field(const Json& j, const std::string& field, std::size_t n) {
  if (!j.contains(field)) field_error(field, "missing");
  const Json& v = j.at(field);
  if (!v.is_array() || v.size() != n) field_error(field, "expected an array of " + std::to_string(n) + " numbers");
  return v;
}

std::optional<std::string> optional_string(const Json& j, const std::string& field) {
  if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
  if (!j.at(field).is_string()) field_error(field, "expected a string");
  return j.at(field).get<std::string>();
}

}  // namespace

void AnnotationRecord::validate() const {
  if (sample_id.empty()) field_error("sample_id", "must be non-empty");
  if (!image_path && !feature_path) field_error("feature_path", "one of image_path or feature_path is required");
  if (!(bbox.x_min < bbox.x_max && bbox.y_min < bbox.y_max)) field_error("bbox", "must have positive area");
  if (!in_unit(bbox.x_min) || !in_unit(bbox.x_max) || !in_unit(bbox.y_min) || !in_unit(bbox.y_max))
    field_error("bbox", "coordinates must lie in [0,1]");
  if (in_frame != 0 && in_frame != 1) field_error("in_frame", "must be 0 or 1");
  if (in_frame == 1 && !gaze_point) field_error("gaze_point", "must be non-null when in_frame is 1");
  if (in_frame == 0 && gaze_point) field_error("gaze_point", "must be null when in_frame is 0");
  if (gaze_point && (!in_unit(gaze_point->x) || !in_unit(gaze_point->y)))
    field_error("gaze_point", "coordinates must lie in [0,1]");
}

Json to_json(const AnnotationRecord& r) {
  Json j;
  j["sample_id"] = r.sample_id;
  j["image_path"] = r.image_path ? Json(*r.image_path) : Json(nullptr);
  j["feature_path"] = r.feature_path ? Json(*r.feature_path) : Json(nullptr);
  j["image_size"] = {r.image_width, r.image_height};
  j["bbox"] = {r.bbox.x_min, r.bbox.y_min, r.bbox.x_max, r.bbox.y_max};
  j["gaze_point"] = r.gaze_point ? Json{r.gaze_point->x, r.gaze_point->y} : Json(nullptr);
  j["in_frame"] = r.in_frame;
  return j;
}

AnnotationRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("record must be a JSON object");
  AnnotationRecord r;
  if (!j.contains("sample_id") || !j.at("sample_id").is_string()) field_error("sample_id", "expected a string");
  r.sample_id = j.at("sample_id").get<std::string>();
  r.image_path = optional_string(j, "image_path");
  r.feature_path = optional_string(j, "feature_path");

  const Json& size = array_field(j, "image_size", 2);
  for (const auto& v : size)
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      field_error("image_size", "expected non-negative integers");
  r.image_width = size[0].get<std::size_t>();
  r.image_height = size[1].get<std::size_t>();

  const Json& b = array_field(j, "bbox", 4);
  r.bbox = {number_at(b, 0, "bbox"), number_at(b, 1, "bbox"), number_at(b, 2, "bbox"), number_at(b, 3, "bbox")};

  if (!j.contains("gaze_point")) field_error("gaze_point", "missing (use null when out of frame)");
  if (!j.at("gaze_point").is_null()) {
    const Json& g = array_field(j, "gaze_point", 2);
    r.gaze_point = Point2{number_at(g, 0, "gaze_point"), number_at(g, 1, "gaze_point")};
  }

  if (!j.contains("in_frame")) field_error("in_frame", "missing");
  const Json& f = j.at("in_frame");
  if (f.is_boolean()) r.in_frame = f.get<bool>() ? 1 : 0;
  else if (f.is_number_integer()) r.in_frame = static_cast<int>(f.get<long long>());
  else field_error("in_frame", "expected 0 or 1");

  r.validate();
  return r;
}

std::string serialize_record(const AnnotationRecord& r) { return to_json(r).dump(); }

AnnotationRecord parse_record(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  return record_from_json(j);
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file " + path);
  std::vector<AnnotationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_annotations(const std::string& path, const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : records) out << serialize_record(r) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

// ---- feature files --------------------------------------------------------

namespace {

constexpr char kFeatureMagic[4] = {'G', 'M', 'F', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace

std::string encode_feature_file(const FeatureFile& f) {
  const auto& m = f.map;
  if (m.values.size() != m.feature_dim * m.grid * m.grid)
    throw DimensionError("feature map holds " + std::to_string(m.values.size()) + " values, dims imply " +
                         std::to_string(m.feature_dim * m.grid * m.grid));
  Json header;
  header["dims"] = {m.feature_dim, m.grid, m.grid};
  header["dtype"] = "f32";
  header["source"] = f.source;
  const std::string h = header.dump();

  std::string out(kFeatureMagic, 4);
  put_u32(out, kFeatureFileVersion);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  out.reserve(out.size() + 4 * m.values.size());
  for (double v : m.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

FeatureFile decode_feature_file(std::string_view bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0)
    throw ParseError("feature file: bad magic (expected GMFT)");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureFileVersion) throw ParseError("feature file: unsupported version " + std::to_string(version));
  const std::uint32_t hlen = get_u32(bytes, 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(hlen)) throw ParseError("feature file: truncated header");

  Json header;
  try {
    header = Json::parse(bytes.substr(12, hlen));
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("feature file header: ") + e.what());
  }
  if (!header.contains("dims") || !header["dims"].is_array() || header["dims"].size() != 3)
    field_error("dims", "expected [feature_dim, grid, grid]");
  for (const auto& d : header["dims"])
    if (!d.is_number_unsigned()) field_error("dims", "expected non-negative integers");
  const auto c = header["dims"][0].get<std::size_t>();
  const auto g0 = header["dims"][1].get<std::size_t>();
  const auto g1 = header["dims"][2].get<std::size_t>();
  if (g0 != g1) field_error("dims", "grid must be square");
  if (header.value("dtype", std::string{}) != "f32") field_error("dtype", "only f32 is supported");

  FeatureFile f;
  f.dtype = "f32";
  f.source = header.value("source", std::string{});
  f.map.feature_dim = c;
  f.map.grid = g0;
  const std::size_t n = c * g0 * g1;
  const std::size_t payload = bytes.size() - 12 - hlen;
  if (payload != 4 * n)
    throw ParseError("feature file: payload has " + std::to_string(payload) + " bytes, dims require " +
                     std::to_string(4 * n));
  f.map.values.resize(n);
  const std::size_t base = 12 + hlen;
  for (std::size_t i = 0; i < n; ++i) f.map.values[i] = std::bit_cast<float>(get_u32(bytes, base + 4 * i));
  return f;
}

void save_features(const std::string& path, const FeatureFile& f) { write_file(path, encode_feature_file(f)); }

FeatureFile load_features(const std::string& path) {
  try {
    return decode_feature_file(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

FeatureFile load_features(const std::string& path, std::size_t feature_dim, std::size_t grid) {
  FeatureFile f = load_features(path);
  if (f.map.feature_dim != feature_dim || f.map.grid != grid)
    throw ConfigError(path + ": feature dims " + std::to_string(f.map.feature_dim) + "x" + std::to_string(f.map.grid) +
                      "x" + std::to_string(f.map.grid) + " do not match model dims " + std::to_string(feature_dim) +
                      "x" + std::to_string(grid) + "x" + std::to_string(grid));
  return f;
}

// ---- images ---------------------------------------------------------------

void save_ppm(const std::string& path, const AnnotatedImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  write_file(path, out);
}

AnnotatedImage load_ppm(const std::string& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  const auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  const auto read_int = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
    if (pos == start) throw ParseError(path + ": malformed PPM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw ParseError(path + ": not a binary PPM (P6)");
  pos = 2;
  AnnotatedImage img;
  img.width = read_int();
  img.height = read_int();
  if (read_int() != 255) throw ParseError(path + ": only maxval 255 is supported");
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = img.width * img.height * 3;
  if (bytes.size() < pos + n) throw ParseError(path + ": truncated raster");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

std::string encode_pgm(std::span<const double> values, std::size_t width, std::size_t height) {
  if (values.size() != width * height) throw DimensionError("encode_pgm: value count does not match width×height");
  std::string out = "P5 " + std::to_string(width) + " " + std::to_string(height) + " 255\n";
  for (double v : values) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

// ---- synthetic encoder ----------------------------------------------------

SyntheticEncoder::SyntheticEncoder(EncoderConfig cfg, std::size_t feature_dim, std::size_t grid)
    : cfg_(cfg), feature_dim_(feature_dim), grid_(grid) {
  if (feature_dim == 0 || grid == 0) throw ConfigError("SyntheticEncoder: feature_dim and grid must be positive");
  u_head_ = unit_direction(1);
  u_target_ = unit_direction(2);
  u_cos_ = unit_direction(3);
  u_sin_ = unit_direction(4);
  Rng rng(derive_seed(cfg_.seed, 5));
  colour_proj_.resize(feature_dim * 3);
  for (auto& v : colour_proj_) v = rng.normal() / std::sqrt(3.0);
}

std::vector<double> SyntheticEncoder::unit_direction(std::uint64_t stream) const {
  Rng rng(derive_seed(cfg_.seed, stream));
  std::vector<double> u(feature_dim_);
  double norm = 0.0;
  for (auto& v : u) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : u) v /= norm;
  return u;
}

FeatureMap SyntheticEncoder::noise_component(const std::string& sample_id) const {
  FeatureMap m{feature_dim_, grid_, std::vector<double>(feature_dim_ * grid_ * grid_)};
  Rng rng(derive_seed(cfg_.seed, fnv1a64(sample_id)));
  for (auto& v : m.values) v = cfg_.noise_scale * rng.normal();
  return m;
}

FeatureMap SyntheticEncoder::signature_component(const BBox& bbox, const std::optional<Point2>& gaze) const {
  const std::size_t seq = grid_ * grid_;
  FeatureMap m{feature_dim_, grid_, std::vector<double>(feature_dim_ * seq, 0.0)};
  const auto mask = rasterize_head_mask(bbox, grid_);
  std::vector<double> bump(seq, 0.0);
  double cos_t = 0.0, sin_t = 0.0;
  if (gaze) {
    const double g = static_cast<double>(grid_);
    const double inv = 1.0 / (2.0 * cfg_.target_width * cfg_.target_width);
    for (std::size_t r = 0; r < grid_; ++r)
      for (std::size_t c = 0; c < grid_; ++c) {
        const double dx = (static_cast<double>(c) + 0.5) - gaze->x * g;
        const double dy = (static_cast<double>(r) + 0.5) - gaze->y * g;
        bump[r * grid_ + c] = std::exp(-(dx * dx + dy * dy) * inv);
      }
    const Point2 h = bbox.center();
    const double theta = std::atan2(gaze->y - h.y, gaze->x - h.x);
    cos_t = std::cos(theta);
    sin_t = std::sin(theta);
  }
  for (std::size_t ch = 0; ch < feature_dim_; ++ch) {
    const double dir = cfg_.direction_amp * (cos_t * u_cos_[ch] + sin_t * u_sin_[ch]);
    double* row = m.values.data() + ch * seq;
    for (std::size_t t = 0; t < seq; ++t)
      row[t] = cfg_.head_amp * mask[t] * u_head_[ch] + cfg_.target_amp * bump[t] * u_target_[ch] + dir;
  }
  return m;
}

FeatureMap SyntheticEncoder::image_component(const AnnotatedImage& image) const {
  const std::size_t seq = grid_ * grid_;
  FeatureMap m{feature_dim_, grid_, std::vector<double>(feature_dim_ * seq, 0.0)};
  if (image.width < grid_ || image.height < grid_)
    throw ConfigError("image smaller than the token grid: " + std::to_string(image.width) + "x" +
                      std::to_string(image.height));
  for (std::size_t r = 0; r < grid_; ++r) {
    const std::size_t y0 = r * image.height / grid_, y1 = (r + 1) * image.height / grid_;
    for (std::size_t c = 0; c < grid_; ++c) {
      const std::size_t x0 = c * image.width / grid_, x1 = (c + 1) * image.width / grid_;
      double col[3] = {0.0, 0.0, 0.0};
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
          for (int k = 0; k < 3; ++k) col[k] += image.px(x, y, k);
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      for (double& v : col) v = v / (255.0 * count) - 0.5;
      const std::size_t t = r * grid_ + c;
      for (std::size_t ch = 0; ch < feature_dim_; ++ch) {
        const double* p = &colour_proj_[ch * 3];
        m.values[ch * seq + t] = cfg_.image_amp * (p[0] * col[0] + p[1] * col[1] + p[2] * col[2]);
      }
    }
  }
  return m;
}

FeatureMap SyntheticEncoder::encode(const std::string& sample_id, const BBox& bbox, const std::optional<Point2>& gaze,
                                    const AnnotatedImage* image) const {
  FeatureMap m = noise_component(sample_id);
  const FeatureMap sig = signature_component(bbox, gaze);
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] += sig.values[i];
  if (image) {
    const FeatureMap img = image_component(*image);
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] += img.values[i];
  }
  for (auto& v : m.values) v = static_cast<double>(static_cast<float>(v));
  return m;
}

// ---- synthetic dataset ----------------------------------------------------

AnnotatedImage render_scene(const AnnotationRecord& r, std::size_t width, std::size_t height) {
  AnnotatedImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(width * height * 3);
  img.bbox = r.bbox;
  img.gaze_point = r.gaze_point;
  img.in_frame = r.in_frame == 1;

  Rng rng(derive_seed(fnv1a64(r.sample_id), 7));
  const double tint[3] = {rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30)};
  const auto to_u8 = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); };
  const double radius = std::max(1.5, 0.04 * static_cast<double>(width));
  for (std::size_t y = 0; y < height; ++y) {
    const double ny = (static_cast<double>(y) + 0.5) / static_cast<double>(height);
    for (std::size_t x = 0; x < width; ++x) {
      const double nx = (static_cast<double>(x) + 0.5) / static_cast<double>(width);
      const double base = 110.0 + rng.normal(0.0, 15.0);
      double rgb[3] = {base + tint[0], base + tint[1], base + tint[2]};
      if (nx >= r.bbox.x_min && nx <= r.bbox.x_max && ny >= r.bbox.y_min && ny <= r.bbox.y_max) {
        rgb[0] = 220;
        rgb[1] = 180;
        rgb[2] = 150;
      }
      if (r.gaze_point) {
        const double dx = (nx - r.gaze_point->x) * static_cast<double>(width);
        const double dy = (ny - r.gaze_point->y) * static_cast<double>(height);
        if (dx * dx + dy * dy <= radius * radius) {
          rgb[0] = 230;
          rgb[1] = 40;
          rgb[2] = 40;
        }
      }
      for (int k = 0; k < 3; ++k) img.px(x, y, k) = to_u8(rgb[k]);
    }
  }
  return img;
}

AnnotatedImage to_annotated(const Sample& s) {
  if (!s.image) throw ConfigError("sample " + s.record.sample_id + " has no image");
  AnnotatedImage img = *s.image;
  img.bbox = s.record.bbox;
  img.gaze_point = s.record.gaze_point;
  img.in_frame = s.record.in_frame == 1;
  return img;
}

std::vector<Sample> synthetic_dataset(std::size_t n, double class_balance, std::uint64_t seed,
                                      const SyntheticEncoder& encoder, std::size_t patch_px) {
  if (n == 0) throw ConfigError("synthetic_dataset: n must be positive");
  if (!(class_balance > 0.0 && class_balance < 1.0)) throw ConfigError("synthetic_dataset: class_balance must be in (0,1)");
  if (patch_px == 0) throw ConfigError("synthetic_dataset: patch_px must be positive");

  const auto n_in = static_cast<std::size_t>(std::llround(static_cast<double>(n) * class_balance));
  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_in), 1);
  Rng order_rng(derive_seed(seed, 11));
  for (std::size_t i = n; i > 1; --i) std::swap(labels[i - 1], labels[order_rng.uniform_int(i)]);

  const std::size_t side = encoder.grid() * patch_px;
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, 12, i));
    AnnotationRecord r;
    r.sample_id = "syn-" + std::to_string(seed) + "-" + std::to_string(i);
    r.image_width = side;
    r.image_height = side;
    const double s = rng.uniform(0.15, 0.3);
    const double x0 = rng.uniform(0.0, 1.0 - s);
    const double y0 = rng.uniform(0.0, 1.0 - s);
    r.bbox = snap(BBox{x0, y0, x0 + s, y0 + s});
    r.in_frame = labels[i];
    if (r.in_frame) {
      const Point2 h = r.bbox.center();
      Point2 g{};
      for (int attempt = 0; attempt < 100; ++attempt) {
        g = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
        if (std::hypot(g.x - h.x, g.y - h.y) > 0.2) break;
      }
      r.gaze_point = Point2{snap_coordinate(g.x), snap_coordinate(g.y)};
    }
    Sample smp;
    smp.image = render_scene(r, side, side);
    smp.features = encoder.encode(r.sample_id, r.bbox, r.gaze_point, &*smp.image);
    smp.record = std::move(r);
    out.push_back(std::move(smp));
  }
  return out;
}

void save_dataset(const std::string& dir, const std::vector<Sample>& samples) {
  fs::create_directories(fs::path(dir) / "features");
  std::vector<AnnotationRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) {
    AnnotationRecord r = s.record;
    r.feature_path = "features/" + r.sample_id + ".gmft";
    save_features((fs::path(dir) / *r.feature_path).string(), FeatureFile{s.features, "f32", "synthetic"});
    if (s.image) {
      fs::create_directories(fs::path(dir) / "images");
      r.image_path = "images/" + r.sample_id + ".ppm";
      save_ppm((fs::path(dir) / *r.image_path).string(), *s.image);
    }
    records.push_back(std::move(r));
  }
  save_annotations((fs::path(dir) / "annotations.jsonl").string(), records);
}

std::vector<Sample> load_dataset(const std::string& annotations_path, std::size_t feature_dim, std::size_t grid) {
  const fs::path base = fs::path(annotations_path).parent_path();
  const auto resolve = [&](const std::string& p) {
    const fs::path q(p);
    return (q.is_absolute() ? q : base / q).string();
  };
  std::vector<Sample> out;
  for (auto& r : load_annotations(annotations_path)) {
    Sample s;
    if (!r.feature_path) throw ConfigError("record " + r.sample_id + " has no feature_path");
    s.features = load_features(resolve(*r.feature_path), feature_dim, grid).map;
    if (r.image_path && fs::exists(resolve(*r.image_path))) s.image = load_ppm(resolve(*r.image_path));
    s.record = std::move(r);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<int> labels_of(const std::vector<Sample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.record.in_frame);
  return out;
}

}  // namespace gazemoe
