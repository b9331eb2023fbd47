#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ivcace/counts.hpp"
#include "ivcace/em.hpp"
#include "support.hpp"

namespace testing {

// Observed-stratum posterior by brute-force Bayes rule: enumerate every full
// cell consistent with the pattern and every class consistent with (d, z).
struct BruteForce {
  double worst_posterior = 0.0;
  double worst_conservation = 0.0;
};

inline BruteForce compare_e_step(const ivcace::ObservedCounts& counts, const ivcace::ParamSet& p, const ivcace::SensitivityParams* sens = nullptr) {
  const auto& g = counts.geometry();
  const auto& spec = counts.spec();
  const auto e = ivcace::e_step(p, counts, sens);
  const int Q = sens ? 2 : 1;
  BruteForce out;
  for (std::uint32_t m = 0; m < g.num_patterns(); ++m) {
    for (std::size_t pc = 0; pc < g.pattern_size(m); ++pc) {
      for (int d = 0; d < 2; ++d) {
        for (int z = 0; z < 2; ++z) {
          for (int y = 0; y < 2; ++y) {
            const double n = counts.at(m, pc, d, z, y);
            double denom = 0.0;
            for (const auto& cell : testing::oracle_all_cells(spec)) {
              if (g.pattern_cell(m, g.cell_of(cell)) != pc) continue;
              for (auto u : ivcace::kAllClasses) {
                if (ivcace::treatment_for(u, z) != d) continue;
                for (int q = 0; q < Q; ++q) denom += testing::oracle_joint(spec, p, m, cell, u, z, y, q, sens);
              }
            }
            double assigned = 0.0;
            for (const auto& cell : testing::oracle_all_cells(spec)) {
              const std::size_t c = g.cell_of(cell);
              if (g.pattern_cell(m, c) != pc) continue;
              for (auto u : ivcace::kAllClasses) {
                if (ivcace::treatment_for(u, z) != d) continue;
                for (int q = 0; q < Q; ++q) {
                  const double want = n > 0 ? n * testing::oracle_joint(spec, p, m, cell, u, z, y, q, sens) / denom : 0.0;
                  const double got = e.at(m, c, u, z, y, q);
                  out.worst_posterior = std::max(out.worst_posterior, std::abs(got - want));
                  assigned += got;
                }
              }
            }
            out.worst_conservation = std::max(out.worst_conservation, std::abs(assigned - n));
          }
        }
      }
    }
  }
  return out;
}


}  // namespace testing
