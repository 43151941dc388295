#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "awrs/autodiff.hpp"
#include "awrs/config.hpp"
#include "awrs/corpus.hpp"
#include "awrs/model.hpp"
#include "awrs/stats.hpp"

namespace awrs {

// Corpus plus splits. The timeline covers every split so that validation and test
// impressions see the statistics accumulated before them.
struct Dataset {
  NewsCatalog catalog;
  std::vector<ImpressionRecord> train;
  std::vector<ImpressionRecord> valid;
  std::vector<ImpressionRecord> test;
  BucketTimeline timeline;
  ParseReport news_report;
  ParseReport behaviors_report;
};

// Throws Error when no news file or no training behaviors are configured.
Dataset load_dataset(const DataConfig& data, Timestamp bucket_width,
                     std::size_t max_title_len = 30);
// Splits one time-sorted log at train_end / valid_end and builds the timeline.
Dataset make_dataset(NewsCatalog catalog, std::vector<ImpressionRecord> log, Timestamp train_end,
                     Timestamp valid_end, Timestamp bucket_width);

struct TrainingInstance {
  std::size_t record = 0;
  // Indices into record.shown in presentation order; the positive sits at `target`.
  std::vector<std::size_t> candidates;
  std::size_t target = 0;
};

// One instance per clicked item, each with K negatives from the same impression: without
// replacement when at least K exist, with replacement otherwise. An impression without
// negatives yields nothing and bumps *skipped by its positive count.
std::vector<TrainingInstance> sample_negatives(const ImpressionRecord& record,
                                               std::size_t record_index, std::size_t K,
                                               std::mt19937_64& rng,
                                               std::size_t* skipped = nullptr);

struct InstanceLoss {
  double p = 0.0;     // softmax probability of the positive
  double loss = 0.0;  // -log p
};
InstanceLoss instance_loss(double positive, std::span<const double> negatives);

// Adam with bias correction. Row-sparse parameters update only rows touched since the
// last step (lazy variant); frozen parameters are skipped.
template <typename Real>
class Adam {
 public:
  Adam(ad::ParameterStore<Real>& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step();
  std::size_t steps() const { return t_; }
  double lr() const { return lr_; }

 private:
  struct Slot {
    ad::Parameter<Real>* param;
    std::vector<Real> m;
    std::vector<Real> v;
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;  // NaN without a validation split
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
  std::size_t instances = 0;
  std::size_t skipped_instances = 0;
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  bool stopped_early = false;
};

// Trains in place and leaves the best-validation parameters in the model (the last ones
// without a validation split). Throws Error with a diagnostic on a non-finite loss.
template <typename Real>
TrainResult train(AwrsModel<Real>& model, const TrainConfig& config, const Dataset& data,
                  std::ostream* csv_log = nullptr);

// Mean per-instance loss and p over a fixed instance list; no parameter changes.
template <typename Real>
std::pair<double, double> mean_loss_and_p(const AwrsModel<Real>& model,
                                          std::span<const TrainingInstance> instances,
                                          std::span<const ImpressionRecord> log,
                                          const Dataset& data);

std::vector<TrainingInstance> all_instances(std::span<const ImpressionRecord> log, std::size_t K,
                                            std::uint64_t seed, std::size_t* skipped = nullptr);

}  // namespace awrs
