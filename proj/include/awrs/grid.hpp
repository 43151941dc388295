#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "awrs/autodiff.hpp"
#include "awrs/stats.hpp"

namespace awrs {

// Cell of the D x D (avoidance, EPI) grid. flat == D * epi_idx + av_idx.
struct EngagementIndex {
  int av_idx = 0;
  int epi_idx = 0;
  int flat = 0;

  friend bool operator==(const EngagementIndex&, const EngagementIndex&) = default;
};

// Equal-width bin of `value` (clamped to [0, 1]) among D bins; 1.0 falls in bin D - 1.
int quantize(double value, int D);

EngagementIndex engagement_index(double av, double epi, int D);
// Inverse of the flat index; throws Error if flat is outside [0, D^2).
EngagementIndex engagement_cell(int flat, int D);

// Cell of an article in a snapshot (unexposed articles land at av = 1, epi = 0).
EngagementIndex article_cell(const StatsSnapshot& snapshot, std::string_view news_id, int D);

// Number of exposed articles per flat cell.
std::vector<std::int64_t> grid_counts(const StatsSnapshot& snapshot, int D);

// "i_ue,av_idx,epi_idx,article_count" for all D^2 cells, preceded by "# awrs-grid v1".
void write_grid_csv(std::ostream& out, const StatsSnapshot& snapshot, int D);

// The trainable D^2 x dim table of user-engagement embeddings.
template <typename Real>
class EngagementTable {
 public:
  EngagementTable(ad::ParameterStore<Real>& store, int D, std::size_t dim, std::mt19937_64& rng);

  int grid_size() const { return D_; }
  std::size_t dim() const { return table_->shape().cols; }
  ad::Parameter<Real>& table() { return *table_; }

  // One row per index; throws Error for an index outside [0, D^2).
  ad::Var<Real> lookup(ad::Tape<Real>& tape, std::span<const std::int32_t> flat_indices) const;

 private:
  int D_;
  ad::Parameter<Real>* table_;
};

}  // namespace awrs
