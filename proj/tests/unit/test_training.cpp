#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "awrs/checkpoint.hpp"
#include "awrs/config.hpp"
#include "awrs/error.hpp"
#include "awrs/metrics.hpp"
#include "awrs/training.hpp"
#include "world_support.hpp"

using namespace awrs;
using namespace testing_support;

namespace {

ImpressionRecord impression(std::vector<std::uint8_t> labels) {
  ImpressionRecord r;
  r.impression_id = "1";
  r.user_id = "U";
  for (std::size_t i = 0; i < labels.size(); ++i) r.shown.push_back({"N" + std::to_string(i), labels[i]});
  return r;
}

TrainConfig tiny_train(const Dataset& d) {
  TrainConfig c;
  c.model = tiny_model(d.catalog);
  c.lr = 0.01;
  c.negatives = 2;
  c.max_epochs = 2;
  c.patience = 1;
  c.batch_size = 8;
  c.seed = 5;
  return c;
}

// Parameter values in store order.
template <typename Real>
std::vector<std::vector<Real>> snapshot(AwrsModel<Real>& m) {
  std::vector<std::vector<Real>> out;
  for (auto* p : m.parameters().all()) out.push_back(p->value().data);
  return out;
}

}  // namespace

TEST_CASE("negative sampling") {
  std::mt19937_64 rng(1);
  SUBCASE("exactly the available negatives when K matches") {
    const auto r = impression({0, 1, 0, 0, 0});
    const auto inst = sample_negatives(r, 0, 4, rng);
    REQUIRE(inst.size() == 1);
    const std::set<std::size_t> got(inst[0].candidates.begin(), inst[0].candidates.end());
    CHECK(got == std::set<std::size_t>{0, 1, 2, 3, 4});
    CHECK(inst[0].candidates[inst[0].target] == 1);
  }
  SUBCASE("two positives share the negative pool") {
    const auto r = impression({1, 0, 1, 0, 0});
    const auto inst = sample_negatives(r, 3, 2, rng);
    REQUIRE(inst.size() == 2);
    for (const auto& i : inst) {
      CHECK(i.record == 3);
      CHECK(i.candidates.size() == 3);
      for (std::size_t k = 0; k < i.candidates.size(); ++k) {
        CHECK((r.shown[i.candidates[k]].label == 1) == (k == i.target));
      }
    }
    CHECK(inst[0].candidates[inst[0].target] == 0);
    CHECK(inst[1].candidates[inst[1].target] == 2);
  }
  SUBCASE("with replacement when the pool is short") {
    const auto inst = sample_negatives(impression({1, 0}), 0, 4, rng);
    REQUIRE(inst.size() == 1);
    CHECK(inst[0].candidates.size() == 5);
  }
  SUBCASE("no negatives: skipped and counted") {
    std::size_t skipped = 0;
    CHECK(sample_negatives(impression({1, 1}), 0, 4, rng, &skipped).empty());
    CHECK(skipped == 2);
  }
  SUBCASE("fixed seed gives the same stream") {
    std::vector<ImpressionRecord> log(20, impression({0, 1, 0, 0, 1, 0, 0, 0}));
    const auto a = all_instances(log, 4, 9), b = all_instances(log, 4, 9);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].candidates == b[i].candidates);
      CHECK(a[i].target == b[i].target);
    }
  }
  SUBCASE("positive position is spread by the shuffle") {
    std::vector<int> seen(5, 0);
    for (int i = 0; i < 500; ++i) ++seen[sample_negatives(impression({1, 0, 0, 0, 0}), 0, 4, rng)[0].target];
    for (int s : seen) CHECK(s > 50);
  }
  CHECK_THROWS_AS(sample_negatives(impression({1, 0}), 0, 0, rng), Error);
}

TEST_CASE("instance loss") {
  const double one[] = {1.5};
  auto l = instance_loss(1.5, one);
  CHECK(l.p == doctest::Approx(0.5));
  CHECK(l.loss == doctest::Approx(std::log(2.0)));

  const double low[] = {-1e6, -2e6};
  l = instance_loss(1e6, low);
  CHECK(l.p == 1.0);
  CHECK(l.loss == 0.0);

  const double negs[] = {0.3, -0.7, 1.1};
  const double shifted[] = {1000.3, 999.3, 1001.1};
  CHECK(instance_loss(0.2, negs).p == doctest::Approx(instance_loss(1000.2, shifted).p).epsilon(1e-12));
  CHECK(std::isfinite(instance_loss(-1e300, negs).loss));
}

TEST_CASE("training loop") {
  World w;
  SUBCASE("ten instances, 200 steps: loss goes down") {
    Dataset small;
    small.catalog = w.data.catalog;
    small.timeline = w.data.timeline;
    std::size_t count = 0;
    for (const auto& r : w.data.train) {
      std::mt19937_64 probe(0);
      const auto n = sample_negatives(r, 0, 2, probe).size();
      if (n == 0 || count + n > 10) continue;
      small.train.push_back(r);
      count += n;
    }
    REQUIRE(count == 10);
    auto cfg = tiny_train(small);
    cfg.max_epochs = 1000;
    cfg.batch_size = 10;
    cfg.max_steps = 200;
    AwrsModel<float> model(cfg.model, 1);
    const auto fixed = all_instances(small.train, 2, 77);
    const auto before = mean_loss_and_p(model, fixed, small.train, small);
    const auto result = train(model, cfg, small);
    CHECK(result.steps == 200);
    const auto after = mean_loss_and_p(model, fixed, small.train, small);
    CHECK(after.first < before.first);
    CHECK(result.epochs.back().train_loss < result.epochs.front().train_loss);
  }
  SUBCASE("lr = 0 leaves parameters bit-identical") {
    auto cfg = tiny_train(w.data);
    cfg.lr = 0.0;
    cfg.max_steps = 5;
    AwrsModel<float> model(cfg.model, 1);
    const auto before = snapshot(model);
    train(model, cfg, w.data);
    CHECK(snapshot(model) == before);
  }
  SUBCASE("same seed, same curve") {
    auto cfg = tiny_train(w.data);
    std::ostringstream a, b;
    AwrsModel<float> m1(cfg.model, cfg.seed), m2(cfg.model, cfg.seed);
    const auto r1 = train(m1, cfg, w.data, &a);
    const auto r2 = train(m2, cfg, w.data, &b);
    REQUIRE(r1.epochs.size() == r2.epochs.size());
    for (std::size_t i = 0; i < r1.epochs.size(); ++i) {
      CHECK(r1.epochs[i].train_loss == r2.epochs[i].train_loss);
      CHECK(r1.epochs[i].val_auc == r2.epochs[i].val_auc);
    }
    CHECK(snapshot(m1) == snapshot(m2));
    CHECK(a.str().rfind("epoch,train_loss,val_auc,wall_seconds\n", 0) == 0);
  }
  SUBCASE("best validation parameters are kept") {
    auto cfg = tiny_train(w.data);
    cfg.max_epochs = 3;
    cfg.patience = 3;
    AwrsModel<float> model(cfg.model, 2);
    const auto result = train(model, cfg, w.data);
    const auto again = evaluate(model, w.data.valid, w.data.catalog, w.data.timeline);
    CHECK(again.auc.mean == result.best_val_auc);
    CHECK(result.epochs[result.best_epoch - 1].val_auc == result.best_val_auc);
  }
  SUBCASE("non-finite loss aborts with a diagnostic") {
    auto cfg = tiny_train(w.data);
    AwrsModel<float> model(cfg.model, 1);
    model.parameters().at("user.phi3.bias").value().data[0] = std::numeric_limits<float>::quiet_NaN();
    model.parameters().at("relevance.w_r").value().data[0] = std::numeric_limits<float>::infinity();
    try {
      train(model, cfg, w.data);
      FAIL("expected an error");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("non-finite loss at step 0") != std::string::npos);
      CHECK(msg.find("lr=0.01") != std::string::npos);
      CHECK(msg.find("first non-finite value from") != std::string::npos);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  World w;
  auto cfg = tiny_train(w.data);
  cfg.max_epochs = 1;
  AwrsModel<float> model(cfg.model, 3);
  const auto result = train(model, cfg, w.data);
  TempDir dir("ckpt");
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(path, model.parameters(), to_json(cfg));

  const auto ck = read_checkpoint(path);
  CHECK(ck.version == kCheckpointVersion);
  CHECK(ck.meta == to_json(cfg));
  CHECK(ck.tensors.size() == model.parameters().size());

  AwrsModel<float> loaded(cfg.model, 99);
  load_parameters(ck, loaded.parameters());
  CHECK(snapshot(loaded) == snapshot(model));
  const auto auc = evaluate(loaded, w.data.valid, w.data.catalog, w.data.timeline).auc.mean;
  CHECK(auc == result.best_val_auc);

  SUBCASE("precision conversion") {
    AwrsModel<double> wide(cfg.model, 99);
    load_parameters(ck, wide.parameters());
    CHECK(wide.parameters().at("relevance.w_r").value().data[0] ==
          static_cast<double>(model.parameters().at("relevance.w_r").value().data[0]));
  }
  SUBCASE("errors") {
    const auto bytes = slurp(path);
    CHECK_THROWS_AS(read_checkpoint(dir.file("short.ckpt", bytes.substr(0, bytes.size() - 3))), ParseError);
    CHECK_THROWS_AS(read_checkpoint(dir.file("magic.ckpt", "NOTACKPT" + bytes.substr(8))), ParseError);
    auto bumped = bytes;
    bumped[8] = 9;
    CHECK_THROWS_AS(read_checkpoint(dir.file("ver.ckpt", bumped)), ParseError);
    CHECK_THROWS_AS(read_checkpoint(dir.path() / "missing.ckpt"), Error);
    auto bigger = cfg.model;
    bigger.ue_dim = 7;
    AwrsModel<float> other(bigger, 1);
    CHECK_THROWS_AS(load_parameters(ck, other.parameters()), Error);
  }
}

TEST_CASE("train config parsing") {
  const auto c = parse_train_config(R"({"lr": 0.001, "negatives": 2, "seed": 7, "precision": "double",
                                        "model": {"grid_d": 7, "news": {"heads": 4}},
                                        "data": {"news": "n.tsv", "behaviors": "b.tsv",
                                                 "train_end": 10, "valid_end": 20}})");
  CHECK(c.lr == 0.001);
  CHECK(c.negatives == 2);
  CHECK(c.use_double);
  CHECK(c.model.grid_d == 7);
  CHECK(c.model.news.heads == 4);
  CHECK(c.data.train_end == 10);
  CHECK(parse_train_config(to_json(c)).model.grid_d == 7);
  CHECK(fingerprint(c) == fingerprint(parse_train_config(to_json(c))));
  auto d = c;
  d.seed = 8;
  CHECK(fingerprint(c) != fingerprint(d));

  CHECK_THROWS_AS(parse_train_config(R"({"learning_rate": 1})"), Error);
  CHECK_THROWS_AS(parse_train_config(R"({"negatives": 0})"), Error);
  CHECK_THROWS_AS(parse_train_config(R"({"patience": 0})"), Error);
  CHECK_THROWS_AS(parse_train_config(R"({"lr": "fast"})"), Error);
  CHECK_THROWS_AS(parse_train_config(R"({"model": {"mode": "both"}})"), Error);
  CHECK_THROWS_AS(parse_train_config("{"), Error);
  CHECK(parse_mode("only_avoid") == Mode::only_avoid);

  TempDir dir("cfg");
  std::filesystem::create_directories(dir.path() / "sub");
  const auto path = dir.file("sub/c.json", R"({"data": {"news": "data/news.tsv"}})");
  CHECK(load_train_config(path).data.news == (dir.path() / "sub" / "data/news.tsv").string());
}
