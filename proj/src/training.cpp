#include "awrs/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "awrs/error.hpp"
#include "awrs/metrics.hpp"

namespace awrs {

namespace {

void append(std::vector<ImpressionRecord>& all, const std::vector<ImpressionRecord>& part) {
  all.insert(all.end(), part.begin(), part.end());
}

BucketTimeline timeline_over(const Dataset& d, Timestamp bucket_width) {
  std::vector<ImpressionRecord> all;
  all.reserve(d.train.size() + d.valid.size() + d.test.size());
  append(all, d.train);
  append(all, d.valid);
  append(all, d.test);
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.time < b.time; });
  return build_timeline(all, bucket_width);
}

template <typename Real>
std::string first_non_finite(ad::Tape<Real>& tape) {
  for (std::uint32_t id = 0; id < tape.size(); ++id) {
    const auto& v = tape.value(id).data;
    if (std::any_of(v.begin(), v.end(), [](Real x) { return !std::isfinite(x); })) {
      return std::string(tape.op(id)) + " (node " + std::to_string(id) + ")";
    }
  }
  return "none";
}

}  // namespace

Dataset load_dataset(const DataConfig& data, Timestamp bucket_width, std::size_t max_title_len) {
  if (data.news.empty()) throw Error("config does not name a news file");
  Dataset d;
  d.catalog = parse_news_file(data.news, max_title_len, &d.news_report);
  if (!data.behaviors.empty()) {
    if (!data.train_end || !data.valid_end) {
      throw Error("a single behaviors file needs train_end and valid_end");
    }
    auto log = parse_behaviors_file(data.behaviors, &d.behaviors_report);
    auto split = make_dataset(std::move(d.catalog), std::move(log), *data.train_end,
                              *data.valid_end, bucket_width);
    split.news_report = std::move(d.news_report);
    split.behaviors_report = std::move(d.behaviors_report);
    return split;
  }
  if (data.train.empty()) throw Error("config does not name training behaviors");
  d.train = parse_behaviors_file(data.train, &d.behaviors_report);
  if (!data.valid.empty()) d.valid = parse_behaviors_file(data.valid, &d.behaviors_report);
  if (!data.test.empty()) d.test = parse_behaviors_file(data.test, &d.behaviors_report);
  d.timeline = timeline_over(d, bucket_width);
  return d;
}

Dataset make_dataset(NewsCatalog catalog, std::vector<ImpressionRecord> log, Timestamp train_end,
                     Timestamp valid_end, Timestamp bucket_width) {
  if (valid_end < train_end) throw Error("valid_end precedes train_end");
  Dataset d;
  d.catalog = std::move(catalog);
  std::stable_sort(log.begin(), log.end(),
                   [](const auto& a, const auto& b) { return a.time < b.time; });
  d.timeline = build_timeline(log, bucket_width);
  for (auto& r : log) {
    auto& dest = r.time < train_end ? d.train : r.time < valid_end ? d.valid : d.test;
    dest.push_back(std::move(r));
  }
  return d;
}

std::vector<TrainingInstance> sample_negatives(const ImpressionRecord& record,
                                               std::size_t record_index, std::size_t K,
                                               std::mt19937_64& rng, std::size_t* skipped) {
  if (K < 1) throw Error("negative sample count K must be >= 1");
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < record.shown.size(); ++i) {
    (record.shown[i].label != 0 ? positives : negatives).push_back(i);
  }
  std::vector<TrainingInstance> out;
  if (negatives.empty()) {
    if (skipped != nullptr) *skipped += positives.size();
    return out;
  }
  for (auto pos : positives) {
    TrainingInstance inst;
    inst.record = record_index;
    if (negatives.size() >= K) {
      std::vector<std::size_t> pool = negatives;
      // Partial Fisher-Yates: the first K slots become a uniform sample.
      for (std::size_t i = 0; i < K; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      inst.candidates.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(K));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, negatives.size() - 1);
      for (std::size_t i = 0; i < K; ++i) inst.candidates.push_back(negatives[pick(rng)]);
    }
    inst.candidates.push_back(pos);
    std::shuffle(inst.candidates.begin(), inst.candidates.end(), rng);
    inst.target = static_cast<std::size_t>(
        std::find(inst.candidates.begin(), inst.candidates.end(), pos) - inst.candidates.begin());
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TrainingInstance> all_instances(std::span<const ImpressionRecord> log, std::size_t K,
                                            std::uint64_t seed, std::size_t* skipped) {
  std::mt19937_64 rng(seed);
  std::vector<TrainingInstance> out;
  for (std::size_t i = 0; i < log.size(); ++i) {
    auto part = sample_negatives(log[i], i, K, rng, skipped);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

InstanceLoss instance_loss(double positive, std::span<const double> negatives) {
  double top = positive;
  for (double n : negatives) top = std::max(top, n);
  double denom = std::exp(positive - top);
  for (double n : negatives) denom += std::exp(n - top);
  InstanceLoss out;
  out.loss = -(positive - top - std::log(denom));
  out.p = std::exp(-out.loss);
  return out;
}

template <typename Real>
Adam<Real>::Adam(ad::ParameterStore<Real>& store, double lr, double beta1, double beta2,
                 double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : store.all()) {
    if (!p->trainable()) continue;
    const auto n = p->value().data.size();
    slots_.push_back({p, std::vector<Real>(n, Real(0)), std::vector<Real>(n, Real(0))});
  }
}

template <typename Real>
void Adam<Real>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const Real b1 = static_cast<Real>(beta1_), b2 = static_cast<Real>(beta2_);
  const Real step_size = static_cast<Real>(lr_ / c1);
  const Real v_scale = static_cast<Real>(1.0 / std::sqrt(c2));
  const Real eps = static_cast<Real>(eps_);
  const auto update = [&](Slot& s, std::size_t begin, std::size_t end) {
    auto& x = s.param->value().data;
    const auto& g = s.param->grad().data;
    for (std::size_t i = begin; i < end; ++i) {
      s.m[i] = b1 * s.m[i] + (Real(1) - b1) * g[i];
      s.v[i] = b2 * s.v[i] + (Real(1) - b2) * g[i] * g[i];
      x[i] -= step_size * s.m[i] / (std::sqrt(s.v[i]) * v_scale + eps);
    }
  };
  for (auto& s : slots_) {
    if (s.param->row_sparse()) {
      const auto cols = s.param->shape().cols;
      for (auto r : s.param->touched_rows()) update(s, r * cols, (r + 1) * cols);
    } else {
      update(s, 0, s.m.size());
    }
  }
}

template <typename Real>
std::pair<double, double> mean_loss_and_p(const AwrsModel<Real>& model,
                                          std::span<const TrainingInstance> instances,
                                          std::span<const ImpressionRecord> log,
                                          const Dataset& data) {
  const auto& cfg = model.config();
  double loss = 0.0, p = 0.0;
  std::size_t n = 0;
  for (const auto& inst : instances) {
    const auto input = make_input(log[inst.record], inst.candidates, data.catalog, data.timeline,
                                  cfg.grid_d, cfg.history_len);
    if (!input) continue;
    const auto scores = model.predict(*input);
    std::vector<double> negatives;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (i != inst.target) negatives.push_back(scores[i]);
    }
    const auto l = instance_loss(scores[inst.target], negatives);
    loss += l.loss;
    p += l.p;
    ++n;
  }
  if (n == 0) return {0.0, 0.0};
  return {loss / static_cast<double>(n), p / static_cast<double>(n)};
}

template <typename Real>
TrainResult train(AwrsModel<Real>& model, const TrainConfig& config, const Dataset& data,
                  std::ostream* csv_log) {
  validate(config);
  const auto& mcfg = model.config();
  auto& store = model.parameters();
  Adam<Real> adam(store, config.lr);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto started = std::chrono::steady_clock::now();

  TrainResult result;
  result.best_val_auc = -std::numeric_limits<double>::infinity();
  std::vector<ad::Tensor<Real>> best;
  const auto keep_best = [&] {
    best.clear();
    for (const auto* p : store.all()) best.push_back(p->value());
  };

  if (csv_log != nullptr) *csv_log << "epoch,train_loss,val_auc,wall_seconds\n";
  std::size_t since_best = 0;
  store.zero_grad();
  std::vector<std::size_t> order(data.train.size());

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<TrainingInstance> instances;
    for (auto i : order) {
      auto part = sample_negatives(data.train[i], i, config.negatives, rng, &result.skipped_instances);
      instances.insert(instances.end(), part.begin(), part.end());
    }

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    bool out_of_steps = false;
    for (std::size_t b = 0; b < instances.size(); b += config.batch_size) {
      if (config.max_steps != 0 && result.steps >= config.max_steps) {
        out_of_steps = true;
        break;
      }
      const auto end = std::min(instances.size(), b + config.batch_size);
      ad::Tape<Real> tape;
      typename AwrsModel<Real>::NewsCache cache;
      std::vector<ad::Var<Real>> losses;
      for (std::size_t k = b; k < end; ++k) {
        const auto& inst = instances[k];
        const auto input = make_input(data.train[inst.record], inst.candidates, data.catalog,
                                      data.timeline, mcfg.grid_d, mcfg.history_len);
        if (!input) {
          ++result.skipped_instances;
          continue;
        }
        auto scores = model.score(tape, *input, nullptr, &cache);
        losses.push_back(ad::softmax_cross_entropy(scores, inst.target));
      }
      if (losses.empty()) continue;
      auto total = ad::concat_cols<Real>(losses);
      auto batch_loss = ad::scale(ad::sum(total), Real(1) / static_cast<Real>(losses.size()));
      const double value = static_cast<double>(batch_loss.item());
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << result.steps << " (epoch " << epoch
            << ", lr=" << config.lr << "); first non-finite value from "
            << first_non_finite(tape);
        throw Error(msg.str());
      }
      for (auto x : total.value().data) loss_sum += static_cast<double>(x);
      loss_count += losses.size();
      result.instances += losses.size();

      tape.backward(batch_loss);
      adam.step();
      store.zero_grad();
      ++result.steps;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    log.val_auc = std::numeric_limits<double>::quiet_NaN();
    bool improved = true;
    if (!data.valid.empty()) {
      const auto report = evaluate(model, data.valid, data.catalog, data.timeline, config.threads);
      log.val_auc = report.auc.mean;
      improved = log.val_auc > result.best_val_auc;
    }
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.epochs.push_back(log);
    if (csv_log != nullptr) {
      *csv_log << log.epoch << ',' << log.train_loss << ',' << log.val_auc << ','
               << log.wall_seconds << '\n';
    }

    if (improved) {
      result.best_val_auc = log.val_auc;
      result.best_epoch = epoch;
      since_best = 0;
      keep_best();
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
    if (out_of_steps || (config.max_steps != 0 && result.steps >= config.max_steps)) break;
  }

  if (!best.empty()) {
    auto params = store.all();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value() = best[i];
  }
  return result;
}

template class Adam<float>;
template class Adam<double>;
template TrainResult train<float>(AwrsModel<float>&, const TrainConfig&, const Dataset&,
                                  std::ostream*);
template TrainResult train<double>(AwrsModel<double>&, const TrainConfig&, const Dataset&,
                                   std::ostream*);
template std::pair<double, double> mean_loss_and_p<float>(const AwrsModel<float>&,
                                                          std::span<const TrainingInstance>,
                                                          std::span<const ImpressionRecord>,
                                                          const Dataset&);
template std::pair<double, double> mean_loss_and_p<double>(const AwrsModel<double>&,
                                                           std::span<const TrainingInstance>,
                                                           std::span<const ImpressionRecord>,
                                                           const Dataset&);

}  // namespace awrs
