#pragma once

// File formats: binary embedding and MLP dumps, PGM/PPM images and the JSON
// documents written by the command-line tool.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sasp/dtoc.hpp"
#include "sasp/embed.hpp"
#include "sasp/error.hpp"
#include "sasp/mask.hpp"
#include "sasp/metrics.hpp"
#include "sasp/select.hpp"
#include "sasp/train.hpp"

namespace sasp {

using Json = nlohmann::json;

inline constexpr std::string_view kEmbeddingMagic = "SASPEMB1";
inline constexpr std::string_view kMlpMagic = "SASPMLP1";

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed for " + path.string());
}

/// Little-endian cursor over a byte buffer; every failure reports its offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0) {
      throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", pos_);
    }
    pos_ += magic.size();
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 3; b >= 0; --b) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(b)];
    pos_ += 4;
    return v;
  }

  double f32(const char* what) {
    const auto start = pos_;
    const float f = std::bit_cast<float>(u32(what));
    if (!std::isfinite(f)) throw FormatError(std::string("non-finite ") + what, start);
    return static_cast<double>(f);
  }

  std::vector<double> f32_array(std::uint64_t count, const char* what) {
    if (count > (bytes_.size() - pos_) / 4) {
      throw FormatError(std::string("truncated ") + what + ": need " + std::to_string(count) + " floats", pos_);
    }
    std::vector<double> v(count);
    for (auto& x : v) x = f32(what);
    return v;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
  }

  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

class ByteWriter {
 public:
  void magic(std::string_view m) { buf_.append(m); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  const std::string& bytes() const noexcept { return buf_; }

 private:
  std::string buf_;
};

/// Contents of an SASPEMB1 file.
struct EmbeddingDump {
  TokenGrid grid;
  std::vector<double> seg_raw;
};

inline EmbeddingDump parse_embedding(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kEmbeddingMagic);
  const auto nt_at = r.offset();
  const std::uint32_t nt = r.u32("N_t");
  const std::uint32_t d = r.u32("d");
  const std::uint32_t w = r.u32("img_w");
  const std::uint32_t h = r.u32("img_h");
  if (nt == 0 || d == 0) throw FormatError("N_t and d must be positive", nt_at);
  if (w == 0 || h == 0) throw FormatError("image dimensions must be positive", nt_at + 8);
  const std::size_t n = isqrt(nt);
  if (n * n != nt) throw FormatError("N_t = " + std::to_string(nt) + " is not a square patch grid", nt_at);
  auto values = r.f32_array(static_cast<std::uint64_t>(nt) * d, "token embeddings");
  const std::uint32_t d_raw = r.u32("d_raw");
  auto seg = r.f32_array(d_raw, "seg embedding");
  if (d_raw == 0) throw FormatError("empty seg embedding", r.offset() - 4);
  if (!r.at_end()) throw FormatError("trailing bytes after seg embedding", r.offset());
  return {TokenGrid(Matrix(nt, d, std::move(values)), w, h), std::move(seg)};
}

inline EmbeddingDump read_embedding_file(const std::filesystem::path& path) {
  return parse_embedding(read_file_bytes(path));
}

inline std::string serialize_embedding(const TokenGrid& grid, std::span<const double> seg_raw) {
  ByteWriter w;
  w.magic(kEmbeddingMagic);
  w.u32(static_cast<std::uint32_t>(grid.tokens()));
  w.u32(static_cast<std::uint32_t>(grid.dim()));
  w.u32(static_cast<std::uint32_t>(grid.img_w()));
  w.u32(static_cast<std::uint32_t>(grid.img_h()));
  for (double v : grid.data().values()) w.f32(v);
  w.u32(static_cast<std::uint32_t>(seg_raw.size()));
  for (double v : seg_raw) w.f32(v);
  return w.bytes();
}

/// SASPMLP1: per layer rows (= in), cols (= out), weights row-major, then cols biases.
/// ReLU is applied between layers.
inline MlpProjection parse_mlp(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMlpMagic);
  const auto count_at = r.offset();
  const std::uint32_t count = r.u32("layer count");
  if (count == 0) throw FormatError("MLP has no layers", count_at);
  std::vector<DenseLayer> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    const auto at = r.offset();
    const std::uint32_t rows = r.u32("layer rows");
    const std::uint32_t cols = r.u32("layer cols");
    if (rows == 0 || cols == 0) throw FormatError("empty MLP layer " + std::to_string(l), at);
    if (!layers.empty() && layers.back().out_dim() != rows) {
      throw FormatError("MLP layer " + std::to_string(l) + " does not chain with the previous layer", at);
    }
    auto weights = r.f32_array(static_cast<std::uint64_t>(rows) * cols, "layer weights");
    auto bias = r.f32_array(cols, "layer biases");
    layers.push_back({Matrix(rows, cols, std::move(weights)), std::move(bias)});
  }
  if (!r.at_end()) throw FormatError("trailing bytes after MLP layers", r.offset());
  return MlpProjection(std::move(layers), Activation::kRelu);
}

inline MlpProjection read_mlp_file(const std::filesystem::path& path) { return parse_mlp(read_file_bytes(path)); }

inline std::string serialize_mlp(const MlpProjection& mlp) {
  ByteWriter w;
  w.magic(kMlpMagic);
  w.u32(static_cast<std::uint32_t>(mlp.layers().size()));
  for (const auto& layer : mlp.layers()) {
    w.u32(static_cast<std::uint32_t>(layer.in_dim()));
    w.u32(static_cast<std::uint32_t>(layer.out_dim()));
    for (double v : layer.weight.values()) w.f32(v);
    for (double v : layer.bias) w.f32(v);
  }
  return w.bytes();
}

// ---------------------------------------------------------------------------
// PGM / PPM

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t maxval = 255;
  std::vector<std::uint8_t> data;
};

/// Binary PGM (P5) with maxval <= 255. Comments in the header are skipped.
inline GrayImage parse_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("not a binary PGM (P5)", 0);
  pos = 2;
  const auto header_int = [&](const char* what) -> std::uint64_t {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const auto start = pos;
    std::uint64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1u << 24)) throw FormatError(std::string("PGM ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("PGM header: expected ") + what, start);
    return v;
  };
  GrayImage img;
  img.width = header_int("width");
  img.height = header_int("height");
  const auto maxval_at = pos;
  img.maxval = static_cast<std::uint32_t>(header_int("maxval"));
  if (img.maxval == 0 || img.maxval > 255) throw FormatError("PGM maxval must be in [1, 255]", maxval_at);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PGM header not terminated", pos);
  ++pos;
  const std::size_t n = img.width * img.height;
  if (bytes.size() - pos != n) {
    throw FormatError("PGM raster holds " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                          std::to_string(n),
                      pos);
  }
  img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

inline std::string serialize_pgm(std::size_t width, std::size_t height, std::span<const std::uint8_t> data) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(data.data()), data.size());
  return out;
}

inline std::string serialize_ppm(std::size_t width, std::size_t height, std::span<const std::uint8_t> rgb) {
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
  return out;
}

/// A mask PGM holds only 0 and maxval.
inline BinaryMask mask_from_pgm(const GrayImage& img) {
  BinaryMask m(img.width, img.height);
  for (std::size_t k = 0; k < img.data.size(); ++k) {
    const auto v = img.data[k];
    if (v != 0 && v != img.maxval) {
      throw FormatError("mask pixel " + std::to_string(k) + " is neither 0 nor maxval", k);
    }
    m.data[k] = v == 0 ? 0 : 1;
  }
  return m;
}

inline BinaryMask read_mask_pgm(const std::filesystem::path& path) {
  return mask_from_pgm(parse_pgm(read_file_bytes(path)));
}

inline std::string serialize_mask_pgm(const BinaryMask& m) {
  std::vector<std::uint8_t> px(m.data.size());
  for (std::size_t k = 0; k < px.size(); ++k) px[k] = m.data[k] ? 255 : 0;
  return serialize_pgm(m.width, m.height, px);
}

/// Normalised scores lifted to pixels and quantised to 0..255.
inline std::string serialize_heatmap_pgm(const SimilarityMap& map, const PatchGeometry& geo) {
  const auto px = lift_to_pixels(map, geo);
  std::vector<std::uint8_t> gray(px.size());
  for (std::size_t k = 0; k < px.size(); ++k) gray[k] = static_cast<std::uint8_t>(std::lround(px[k] * 255.0));
  return serialize_pgm(geo.img_w, geo.img_h, gray);
}

// ---------------------------------------------------------------------------
// JSON documents

inline Json points_to_json(std::span<const Point2> pts) {
  Json a = Json::array();
  for (const auto& p : pts) a.push_back(Json::array({p.x, p.y}));
  return a;
}

inline std::vector<Point2> points_from_json(const Json& a) {
  std::vector<Point2> out;
  for (const auto& p : a) {
    if (!p.is_array() || p.size() != 2) throw FormatError("point must be an [x, y] pair", 0);
    out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  return out;
}

inline Json to_json(const PointSet& ps) {
  return Json{{"format", "sasp.pointset/1"},
              {"thresholds", {{"positive", ps.thresholds.positive}, {"negative", ps.thresholds.negative}}},
              {"points", points_to_json(ps.points)},
              {"labels", ps.labels},
              {"token_index", ps.token_index}};
}

inline PointSet pointset_from_json(const Json& j) {
  try {
    if (j.at("format") != "sasp.pointset/1") throw FormatError("not a sasp.pointset/1 document", 0);
    PointSet ps;
    ps.thresholds = {j.at("thresholds").at("positive").get<double>(), j.at("thresholds").at("negative").get<double>()};
    ps.points = points_from_json(j.at("points"));
    ps.labels = j.at("labels").get<std::vector<int>>();
    ps.token_index = j.at("token_index").get<std::vector<std::size_t>>();
    if (ps.labels.size() != ps.points.size() || ps.token_index.size() != ps.points.size()) {
      throw FormatError("pointset arrays differ in length", 0);
    }
    return ps;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("pointset document: ") + e.what(), 0);
  }
}

inline Json to_json(const SimilarityMap& m, const PatchGeometry& geo) {
  return Json{{"format", "sasp.simmap/1"}, {"side", geo.side},       {"img_w", geo.img_w},
              {"img_h", geo.img_h},        {"scores", m.scores()},   {"normalized", m.normalized()},
              {"probs", m.probs()},        {"mean", m.mean()},       {"stdev", m.stdev()}};
}

inline Json to_json(const IoUReport& r, std::span<const std::string> names = {}) {
  Json per = Json::array();
  for (std::size_t k = 0; k < r.per_image.size(); ++k) {
    const auto& p = r.per_image[k];
    Json e{{"intersection", p.intersection}, {"union", p.union_}, {"iou", p.iou}};
    if (k < names.size()) e["name"] = names[k];
    per.push_back(std::move(e));
  }
  return Json{{"format", "sasp.iou/1"}, {"giou", r.giou}, {"ciou", r.ciou}, {"per_image", std::move(per)}};
}

inline Json to_json(const ThresholdSweep& s) {
  Json curve = Json::array();
  for (const auto& [t, c] : s.curve) curve.push_back(Json::array({t, c}));
  return Json{{"format", "sasp.sweep/1"},
              {"step", s.step},
              {"best_t", s.best_t},
              {"best_ciou", s.best_ciou},
              {"curve", std::move(curve)}};
}

inline Json to_json(std::span<const ConvergenceEntry> entries) {
  Json a = Json::array();
  for (const auto& e : entries) a.push_back(Json{{"stride", e.stride}, {"points", points_to_json(e.coords)}});
  return Json{{"format", "sasp.convergence/1"}, {"entries", std::move(a)}};
}

/// JSON lines: a header object with labels and token indices, then one object per step.
inline std::string serialize_trace(const TrainingTrace& tr) {
  std::string out =
      Json{{"format", "sasp.trace/1"}, {"labels", tr.labels}, {"token_index", tr.token_index}}.dump() + "\n";
  for (const auto& s : tr.steps) {
    out += Json{{"step", s.step},
                {"total", s.total},
                {"bce", s.bce},
                {"dice", s.dice},
                {"in_mask_fraction", s.in_mask_fraction},
                {"points", points_to_json(s.points)}}
               .dump();
    out += "\n";
  }
  return out;
}

inline TrainingTrace parse_trace(std::string_view text) {
  TrainingTrace tr;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  std::uint64_t offset = 0;
  try {
    while (std::getline(in, line)) {
      const auto at = offset;
      offset += line.size() + 1;
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      if (lineno++ == 0) {
        if (j.at("format") != "sasp.trace/1") throw FormatError("not a sasp.trace/1 log", at);
        tr.labels = j.at("labels").get<std::vector<int>>();
        tr.token_index = j.at("token_index").get<std::vector<std::size_t>>();
        continue;
      }
      tr.steps.push_back({j.at("step").get<std::size_t>(), j.at("total").get<double>(), j.at("bce").get<double>(),
                          j.at("dice").get<double>(), j.at("in_mask_fraction").get<double>(),
                          points_from_json(j.at("points"))});
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("trace log: ") + e.what(), offset);
  }
  if (lineno == 0) throw FormatError("empty trace log", 0);
  return tr;
}

}  // namespace sasp
