#include "awrs/grid.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "awrs/error.hpp"

namespace awrs {

int quantize(double value, int D) {
  if (D < 1) throw Error("grid size D must be >= 1");
  if (!(value > 0.0)) return 0;  // also catches NaN
  if (value >= 1.0) return D - 1;
  return std::min(static_cast<int>(std::floor(value * D)), D - 1);
}

EngagementIndex engagement_index(double av, double epi, int D) {
  EngagementIndex idx;
  idx.av_idx = quantize(av, D);
  idx.epi_idx = quantize(epi, D);
  idx.flat = D * idx.epi_idx + idx.av_idx;
  return idx;
}

EngagementIndex engagement_cell(int flat, int D) {
  if (D < 1 || flat < 0 || flat >= D * D) {
    throw Error("engagement index " + std::to_string(flat) + " outside grid of size " +
                std::to_string(D));
  }
  return {flat % D, flat / D, flat};
}

EngagementIndex article_cell(const StatsSnapshot& snapshot, std::string_view news_id, int D) {
  return engagement_index(avoidance(snapshot, news_id), epi(snapshot, news_id), D);
}

std::vector<std::int64_t> grid_counts(const StatsSnapshot& snapshot, int D) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(D) * static_cast<std::size_t>(D), 0);
  const auto n_i = snapshot.impressions();
  for (const auto& [id, c] : snapshot.articles()) {
    const auto idx =
        engagement_index(avoidance_ratio(c.clicks, c.exposures), epi_ratio(c.exposures, n_i), D);
    ++counts[static_cast<std::size_t>(idx.flat)];
  }
  return counts;
}

void write_grid_csv(std::ostream& out, const StatsSnapshot& snapshot, int D) {
  const auto counts = grid_counts(snapshot, D);
  out << "# awrs-grid v1\n";
  out << "t,i_ue,av_idx,epi_idx,article_count\n";
  for (int flat = 0; flat < D * D; ++flat) {
    const auto cell = engagement_cell(flat, D);
    out << snapshot.t() << ',' << flat << ',' << cell.av_idx << ',' << cell.epi_idx << ','
        << counts[static_cast<std::size_t>(flat)] << '\n';
  }
}

template <typename Real>
EngagementTable<Real>::EngagementTable(ad::ParameterStore<Real>& store, int D, std::size_t dim,
                                       std::mt19937_64& rng)
    : D_(D) {
  if (D < 1) throw Error("grid size D must be >= 1");
  table_ = &store.add("engagement.table", {static_cast<std::size_t>(D * D), dim}, true);
  ad::init_uniform(*table_, Real(0.1), rng);
}

template <typename Real>
ad::Var<Real> EngagementTable<Real>::lookup(ad::Tape<Real>& tape,
                                            std::span<const std::int32_t> flat_indices) const {
  return ad::embedding_lookup(tape, *table_, flat_indices);
}

template class EngagementTable<float>;
template class EngagementTable<double>;

}  // namespace awrs
