#pragma once

#include "ficbl/ficbl.hpp"

// 8x8 images made of four 4x4 quadrants, each quadrant one of four stroke
// patterns. Concept 0 says whether pattern 3 appears; concept 1 counts how
// many quadrants show pattern 1 (0, 1, or 2+).
namespace synthetic {

inline ficbl::ConceptSchema schema() {
  return ficbl::ConceptSchema({{"has3", 2}, {"ones", 3}});
}

inline void paint(ficbl::GrayImage& img, std::size_t x0, std::size_t y0, int pattern, ficbl::Rng& rng) {
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      bool on = false;
      switch (pattern) {
        case 0: on = false; break;
        case 1: on = x == y; break;
        case 2: on = y == 1 || y == 2; break;
        case 3: on = x == 1 || x == 2; break;
      }
      const double noise = 0.05 * rng.uniform();
      img.at(x0 + x, y0 + y) = on ? 0.95 - noise : noise;
    }
  }
}

inline ficbl::Dataset make(std::size_t n, std::uint64_t seed) {
  ficbl::Rng rng(seed);
  ficbl::Dataset out{schema(), {}};
  for (std::size_t i = 0; i < n; ++i) {
    ficbl::GrayImage img(8, 8);
    int has3 = 1, ones = 0;
    for (std::size_t q = 0; q < 4; ++q) {
      const int p = static_cast<int>(rng.index(4));
      paint(img, (q % 2) * 4, (q / 2) * 4, p, rng);
      if (p == 3) has3 = 2;
      if (p == 1) ++ones;
    }
    out.records.push_back({std::move(img), {has3, std::min(ones, 2) + 1}});
  }
  return out;
}

inline ficbl::TrainConfig config(std::uint64_t seed = 1) {
  ficbl::TrainConfig cfg;
  cfg.patch = {4, 4, 4, 4};
  cfg.embed_dim = 4;
  cfg.clusters = 6;
  cfg.algorithm = ficbl::ClusterAlgorithm::Em;
  cfg.seed = seed;
  return cfg;
}

}  // namespace synthetic
