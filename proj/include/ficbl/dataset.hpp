#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ficbl/concept.hpp"
#include "ficbl/error.hpp"
#include "ficbl/image.hpp"
#include "ficbl/random.hpp"
#include "ficbl/rules.hpp"

namespace ficbl {

struct ImageRecord {
  GrayImage image;
  ConceptVector label;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Dataset {
  ConceptSchema schema;
  std::vector<ImageRecord> records;

  std::size_t size() const noexcept { return records.size(); }

  std::vector<ConceptVector> labels() const {
    std::vector<ConceptVector> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label);
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Sliding-window geometry. stride == patch size gives a non-overlapping grid.
struct PatchConfig {
  std::size_t patch_w = 28;
  std::size_t patch_h = 28;
  std::size_t stride_x = 28;
  std::size_t stride_y = 28;

  void validate(std::size_t image_w, std::size_t image_h) const {
    if (patch_w == 0 || patch_h == 0) throw DomainError("patch size must be positive");
    if (stride_x == 0 || stride_y == 0) throw DomainError("patch stride must be positive");
    if (patch_w > image_w || patch_h > image_h) {
      throw DomainError("patch " + std::to_string(patch_w) + "x" + std::to_string(patch_h) +
                        " larger than image " + std::to_string(image_w) + "x" +
                        std::to_string(image_h));
    }
  }

  std::size_t columns(std::size_t image_w) const { return (image_w - patch_w) / stride_x + 1; }
  std::size_t rows(std::size_t image_h) const { return (image_h - patch_h) / stride_y + 1; }
  std::size_t patch_count(std::size_t image_w, std::size_t image_h) const {
    return columns(image_w) * rows(image_h);
  }
  std::size_t patch_dim() const { return patch_w * patch_h; }

  friend bool operator==(const PatchConfig&, const PatchConfig&) = default;
};

struct Patch {
  std::size_t image = 0;
  std::size_t index = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;
};

/// Windows in row-major order of their top-left corners.
inline std::vector<Patch> extract_patches(const GrayImage& image, const PatchConfig& cfg,
                                          std::size_t image_index = 0) {
  cfg.validate(image.width, image.height);
  const std::size_t cols = cfg.columns(image.width);
  const std::size_t rows = cfg.rows(image.height);
  std::vector<Patch> out;
  out.reserve(cols * rows);
  for (std::size_t py = 0; py < rows; ++py) {
    for (std::size_t px = 0; px < cols; ++px) {
      Patch p{image_index, py * cols + px, cfg.patch_w, cfg.patch_h, {}};
      p.pixels.reserve(cfg.patch_dim());
      const std::size_t x0 = px * cfg.stride_x;
      const std::size_t y0 = py * cfg.stride_y;
      for (std::size_t y = 0; y < cfg.patch_h; ++y) {
        const auto* row = image.pixels.data() + (y0 + y) * image.width + x0;
        p.pixels.insert(p.pixels.end(), row, row + cfg.patch_w);
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// MNIST-derived datasets

/// Source digits grouped by class.
using DigitPool = std::array<std::vector<GrayImage>, 10>;

enum class PoolPart { All, Train, Test };

/// Groups source digits by class. Train keeps even within-class positions and
/// Test keeps odd ones, so the two parts never share a source image.
inline DigitPool make_digit_pool(const std::vector<std::pair<GrayImage, int>>& source,
                                 PoolPart part = PoolPart::All) {
  DigitPool pool;
  std::array<std::size_t, 10> seen{};
  for (const auto& [img, digit] : source) {
    if (digit < 0 || digit > 9) throw DomainError("digit label out of range");
    const std::size_t k = seen[digit]++;
    const bool keep = part == PoolPart::All || (part == PoolPart::Train && k % 2 == 0) ||
                      (part == PoolPart::Test && k % 2 == 1);
    if (keep) pool[digit].push_back(img);
  }
  return pool;
}

/// Target is the largest digit (classes 3..9 as values 1..7); concepts 1..10
/// mark presence of digits 1..9, 0 (absent = 1, present = 2).
inline ConceptSchema grid_schema() {
  std::vector<Concept> concepts{{"target", 7}};
  for (int d : {1, 2, 3, 4, 5, 6, 7, 8, 9, 0}) concepts.push_back({"has" + std::to_string(d), 2});
  return ConceptSchema(std::move(concepts));
}

/// Concept index of the presence concept for a digit.
inline std::size_t presence_concept(int digit) { return digit == 0 ? 10 : static_cast<std::size_t>(digit); }

inline ConceptVector grid_label(const std::array<int, 4>& digits) {
  ConceptVector label(11, 1);
  const int largest = *std::max_element(digits.begin(), digits.end());
  if (largest < 3) throw DomainError("grid digits must be distinct");
  label[0] = largest - 2;
  for (int d : digits) label[presence_concept(d)] = 2;
  return label;
}

/// n images of 56x56, each a 2x2 arrangement of four distinct digits.
inline Dataset compose_grid_dataset(const DigitPool& pool, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("dataset size must be positive");
  for (int d = 0; d < 10; ++d) {
    if (pool[d].empty()) throw DomainError("digit pool has no images of digit " + std::to_string(d));
  }
  const std::size_t side = pool[0].front().width;
  Dataset out{grid_schema(), {}};
  out.records.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<int, 10> order{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::array<int, 4> digits{};
    for (std::size_t k = 0; k < 4; ++k) {
      std::swap(order[k], order[k + rng.index(10 - k)]);
      digits[k] = order[k];
    }
    GrayImage img(2 * side, 2 * side);
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& bucket = pool[digits[k]];
      const GrayImage& src = bucket[rng.index(bucket.size())];
      if (src.width != side || src.height != side) throw DomainError("pool digits differ in size");
      const std::size_t x0 = (k % 2) * side;
      const std::size_t y0 = (k / 2) * side;
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) img.at(x0 + x, y0 + y) = src.at(x, y);
      }
    }
    out.records.push_back({std::move(img), grid_label(digits)});
  }
  return out;
}

/// target, odd, lt5, mod3.
inline ConceptSchema annotated_schema() {
  return ConceptSchema({{"target", 2}, {"odd", 2}, {"lt5", 2}, {"mod3", 3}});
}

/// Concept annotation of a single MNIST digit, shifted to 1-based values.
inline ConceptVector annotate_original_mnist(int digit) {
  static constexpr int kTable[10][4] = {
      {0, 0, 1, 0}, {1, 1, 1, 1}, {0, 0, 1, 2}, {1, 1, 1, 0}, {0, 0, 1, 1},
      {0, 1, 0, 2}, {1, 0, 0, 0}, {0, 1, 0, 1}, {1, 0, 0, 2}, {0, 1, 0, 0},
  };
  if (digit < 0 || digit > 9) throw DomainError("digit out of range");
  ConceptVector v(4);
  for (std::size_t r = 0; r < 4; ++r) v[r] = kTable[digit][r] + 1;
  return v;
}

/// n source digits sampled without replacement, labelled by annotation.
inline Dataset make_annotated_dataset(const DigitPool& pool, std::size_t n, std::uint64_t seed) {
  std::vector<std::pair<int, std::size_t>> items;
  for (int d = 0; d < 10; ++d) {
    for (std::size_t k = 0; k < pool[d].size(); ++k) items.emplace_back(d, k);
  }
  if (n == 0 || n > items.size()) {
    throw DomainError("annotated dataset size must lie in 1.." + std::to_string(items.size()));
  }
  Rng rng(seed);
  rng.shuffle(items);
  Dataset out{annotated_schema(), {}};
  out.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [d, k] = items[i];
    out.records.push_back({pool[d][k], annotate_original_mnist(d)});
  }
  return out;
}

/// Indices whose target gets corrupted by invert_labels at fraction beta.
/// The eligible set is permuted once per seed, so a larger beta selects a
/// superset of a smaller beta's indices.
inline std::vector<std::size_t> inversion_indices(const Dataset& data, const RuleExpr& rule,
                                                  double beta, std::uint64_t seed) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("beta must lie in [0, 1]");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& label = data.records[i].label;
    if (is_complete(label) && eval_rule(rule, label) == 1) eligible.push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(eligible);
  const auto wanted =
      static_cast<std::size_t>(std::floor(beta * static_cast<double>(data.size()) + 1e-9));
  eligible.resize(std::min(wanted, eligible.size()));
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

/// Corrupts the target concept of a beta-fraction of the whole dataset, drawn
/// from the records whose label satisfies `rule`. A binary target is flipped;
/// a wider target moves to a uniformly drawn other value.
inline Dataset invert_labels(const Dataset& data, const RuleExpr& rule, double beta,
                             std::uint64_t seed) {
  Dataset out = data;
  const int n0 = data.schema.cardinality(0);
  for (std::size_t i : inversion_indices(data, rule, beta, seed)) {
    int& target = out.records[i].label[0];
    if (n0 == 2) {
      target = 3 - target;
    } else {
      Rng pick(derive_seed(seed, i));
      const int shift = 1 + static_cast<int>(pick.index(static_cast<std::size_t>(n0 - 1)));
      target = (target - 1 + shift) % n0 + 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory: images.idx, concepts.csv, schema.json

inline nlohmann::ordered_json schema_to_json(const ConceptSchema& schema) {
  nlohmann::ordered_json concepts = nlohmann::ordered_json::array();
  for (const auto& c : schema.concepts()) {
    concepts.push_back({{"name", c.name}, {"cardinality", c.cardinality}});
  }
  return {{"concepts", concepts}};
}

inline ConceptSchema schema_from_json(const nlohmann::ordered_json& j) {
  std::vector<Concept> concepts;
  for (const auto& c : j.at("concepts")) {
    concepts.push_back({c.at("name").get<std::string>(), c.at("cardinality").get<int>()});
  }
  return ConceptSchema(std::move(concepts));
}

inline void save_dataset(const std::string& dir, const Dataset& data) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "'");
  std::vector<GrayImage> images;
  images.reserve(data.size());
  for (const auto& r : data.records) images.push_back(r.image);
  write_idx_images((fs::path(dir) / "images.idx").string(), images);

  std::ofstream csv(fs::path(dir) / "concepts.csv");
  if (!csv) throw IoError("cannot write concepts.csv in '" + dir + "'");
  csv << "image_id";
  for (std::size_t r = 0; r < data.schema.size(); ++r) csv << ",c" << r;
  csv << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    csv << i;
    for (int v : data.records[i].label) {
      csv << ',';
      if (v != kMissing) csv << v;
    }
    csv << '\n';
  }
  std::ofstream js(fs::path(dir) / "schema.json");
  if (!js) throw IoError("cannot write schema.json in '" + dir + "'");
  js << schema_to_json(data.schema).dump(2) << '\n';
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  Dataset out;
  {
    std::ifstream js(fs::path(dir) / "schema.json");
    if (!js) throw IoError("cannot read schema.json in '" + dir + "'");
    try {
      out.schema = schema_from_json(nlohmann::ordered_json::parse(js));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("malformed schema.json: ") + e.what());
    }
  }
  auto images = load_idx_images((fs::path(dir) / "images.idx").string());
  std::ifstream csv(fs::path(dir) / "concepts.csv");
  if (!csv) throw IoError("cannot read concepts.csv in '" + dir + "'");
  std::string line;
  std::getline(csv, line);
  std::size_t row = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != out.schema.size() + 1) {
      throw IoError("concepts.csv row " + std::to_string(row) + " has wrong column count");
    }
    if (row >= images.size()) throw IoError("concepts.csv has more rows than images.idx");
    ConceptVector label;
    for (std::size_t r = 1; r < cells.size(); ++r) {
      try {
        label.push_back(cells[r].empty() ? kMissing : std::stoi(cells[r]));
      } catch (const std::exception&) {
        throw IoError("concepts.csv row " + std::to_string(row) + " has a non-integer value");
      }
    }
    validate_vector(out.schema, label);
    out.records.push_back({std::move(images[row]), std::move(label)});
    ++row;
  }
  if (row != images.size()) throw IoError("concepts.csv and images.idx disagree on image count");
  return out;
}

}  // namespace ficbl
