#include "awrs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "awrs/error.hpp"
#include "awrs/grid.hpp"
#include "awrs/stats.hpp"

namespace awrs {

using json = nlohmann::ordered_json;

namespace {

void check_affinity(const std::vector<double>& a, int D, const char* name) {
  if (a.empty()) return;
  if (a.size() != static_cast<std::size_t>(D * D)) {
    throw Error(std::string(name) + " must have D*D = " + std::to_string(D * D) + " entries, got " +
                std::to_string(a.size()));
  }
  for (double v : a) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(std::string(name) + " entries must be >= 0");
  }
}

double max_of(const std::vector<double>& a) {
  return a.empty() ? 1.0 : *std::max_element(a.begin(), a.end());
}

void validate(const SyntheticSpec& s) {
  if (s.D < 1) throw Error("D must be >= 1");
  if (s.n_users == 0 || s.n_articles == 0 || s.n_buckets == 0) {
    throw Error("n_users, n_articles and n_buckets must be positive");
  }
  if (s.bucket_seconds <= 0) throw Error("bucket_seconds must be > 0");
  if (s.shown_per_impression < 1) throw Error("shown_per_impression must be >= 1");
  if (s.categories < 1 || s.words_per_category < 1 || s.title_len < 1) {
    throw Error("categories, words_per_category and title_len must be positive");
  }
  if (s.affinity_fraction < 0.0 || s.affinity_fraction > 1.0) {
    throw Error("affinity_fraction must lie in [0, 1]");
  }
  if (s.user_arrival_span < 0.0 || s.user_arrival_span > 1.0) {
    throw Error("user_arrival_span must lie in [0, 1]");
  }
  if (s.appeal_alpha < 0.0 || (s.appeal_alpha > 0.0 && !(s.appeal_beta > 0.0))) {
    throw Error("appeal_alpha must be >= 0 and appeal_beta > 0 when appeal is enabled");
  }
  if (!(s.base_click_rate >= 0.0 && s.base_click_rate <= 1.0)) {
    throw Error("base_click_rate must lie in [0, 1]");
  }
  check_affinity(s.affinity, s.D, "affinity");
  check_affinity(s.alt_affinity, s.D, "alt_affinity");
  const bool main_used = s.affinity_fraction > 0.0;
  const bool alt_used = s.affinity_fraction < 1.0;
  const bool main_zero = !s.affinity.empty() && max_of(s.affinity) == 0.0;
  const bool alt_zero = !s.alt_affinity.empty() && max_of(s.alt_affinity) == 0.0;
  if (s.base_click_rate == 0.0 || ((!main_used || main_zero) && (!alt_used || alt_zero))) {
    throw Error("infeasible synthetic spec: every click propensity is zero");
  }
}

}  // namespace

SyntheticSpec parse_synthetic_spec(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("synthetic spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("synthetic spec must be a JSON object");
  static const std::set<std::string> known = {
      "n_users", "n_articles", "n_buckets", "bucket_seconds", "start_time", "D", "affinity",
      "alt_affinity", "affinity_fraction", "base_click_rate", "freshness_half_life_hours",
      "exposure_decay_hours", "popularity_sigma", "appeal_alpha", "appeal_beta", "user_arrival_span", "impressions_per_bucket",
      "shown_per_impression", "categories", "words_per_category", "title_len", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error("synthetic spec: unknown key \"" + key + "\"");
  }
  SyntheticSpec s;
  const auto read = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<std::remove_reference_t<decltype(out)>>();
    } catch (const json::exception&) {
      throw Error(std::string("synthetic spec key \"") + key + "\" has the wrong type");
    }
  };
  read("n_users", s.n_users);
  read("n_articles", s.n_articles);
  read("n_buckets", s.n_buckets);
  read("bucket_seconds", s.bucket_seconds);
  read("start_time", s.start_time);
  read("D", s.D);
  read("affinity", s.affinity);
  read("alt_affinity", s.alt_affinity);
  read("affinity_fraction", s.affinity_fraction);
  read("base_click_rate", s.base_click_rate);
  read("freshness_half_life_hours", s.freshness_half_life_hours);
  read("exposure_decay_hours", s.exposure_decay_hours);
  read("popularity_sigma", s.popularity_sigma);
  read("appeal_alpha", s.appeal_alpha);
  read("appeal_beta", s.appeal_beta);
  read("user_arrival_span", s.user_arrival_span);
  read("impressions_per_bucket", s.impressions_per_bucket);
  read("shown_per_impression", s.shown_per_impression);
  read("categories", s.categories);
  read("words_per_category", s.words_per_category);
  read("title_len", s.title_len);
  read("seed", s.seed);
  validate(s);
  return s;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open synthetic spec " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_synthetic_spec(buffer.str());
}

std::string to_json(const SyntheticSpec& s) {
  json j = {{"n_users", s.n_users},
            {"n_articles", s.n_articles},
            {"n_buckets", s.n_buckets},
            {"bucket_seconds", s.bucket_seconds},
            {"start_time", s.start_time},
            {"D", s.D},
            {"affinity", s.affinity},
            {"alt_affinity", s.alt_affinity},
            {"affinity_fraction", s.affinity_fraction},
            {"base_click_rate", s.base_click_rate},
            {"freshness_half_life_hours", s.freshness_half_life_hours},
            {"exposure_decay_hours", s.exposure_decay_hours},
            {"popularity_sigma", s.popularity_sigma},
            {"appeal_alpha", s.appeal_alpha},
            {"appeal_beta", s.appeal_beta},
            {"user_arrival_span", s.user_arrival_span},
            {"impressions_per_bucket", s.impressions_per_bucket},
            {"shown_per_impression", s.shown_per_impression},
            {"categories", s.categories},
            {"words_per_category", s.words_per_category},
            {"title_len", s.title_len},
            {"seed", s.seed}};
  return j.dump(2);
}

SyntheticCorpus generate(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto D = spec.D;
  const auto bucket_hours = static_cast<double>(spec.bucket_seconds) / 3600.0;

  SyntheticCorpus out;
  struct ArticleState {
    double weight = 1.0;
    double appeal = 1.0;
    std::int64_t exposures = 0;
    std::int64_t clicks = 0;
  };
  std::vector<ArticleState> state(spec.n_articles);
  std::lognormal_distribution<double> popularity(0.0, spec.popularity_sigma);
  std::uniform_int_distribution<std::size_t> pick_category(0, spec.categories - 1);
  std::uniform_int_distribution<std::size_t> pick_word(0, spec.words_per_category - 1);
  std::uniform_int_distribution<std::size_t> pick_bucket(0, spec.n_buckets - 1);
  for (std::size_t a = 0; a < spec.n_articles; ++a) {
    SyntheticArticle article;
    article.news_id = "N" + std::to_string(a + 1);
    const auto category = pick_category(rng);
    article.category = "cat" + std::to_string(category);
    for (std::size_t w = 0; w < spec.title_len; ++w) {
      if (w > 0) article.title += ' ';
      article.title += "c" + std::to_string(category) + "w" + std::to_string(pick_word(rng));
    }
    // A quarter of the catalog is live from the start so early buckets have supply.
    article.publish_bucket = unit(rng) < 0.25 ? 0 : pick_bucket(rng);
    state[a].weight = popularity(rng);
    if (spec.appeal_alpha > 0.0) {
      const double x = std::gamma_distribution<double>(spec.appeal_alpha, 1.0)(rng);
      const double y = std::gamma_distribution<double>(spec.appeal_beta, 1.0)(rng);
      state[a].appeal = x + y > 0.0 ? x / (x + y) : 0.5;
    }
    out.articles.push_back(std::move(article));
  }

  struct User {
    bool in_group = false;
    std::size_t arrival_bucket = 0;
    std::vector<std::string> clicks;
  };
  std::vector<User> users(spec.n_users);
  for (auto& u : users) {
    u.in_group = unit(rng) < spec.affinity_fraction;
    u.arrival_bucket = static_cast<std::size_t>(
        std::floor(unit(rng) * spec.user_arrival_span * static_cast<double>(spec.n_buckets)));
  }
  const double main_max = max_of(spec.affinity), alt_max = max_of(spec.alt_affinity);
  const auto propensity = [&](bool in_group, int cell) {
    const auto& a = in_group ? spec.affinity : spec.alt_affinity;
    if (a.empty()) return 1.0;
    const double top = in_group ? main_max : alt_max;
    return top > 0.0 ? a[static_cast<std::size_t>(cell)] / top : 0.0;
  };

  std::int64_t impressions = 0;
  std::size_t serial = 0;
  std::vector<int> cells(spec.n_articles);
  std::vector<double> weights(spec.n_articles);
  for (std::size_t b = 0; b < spec.n_buckets; ++b) {
    // Cells are frozen at the bucket start, like the snapshot the model sees.
    for (std::size_t a = 0; a < spec.n_articles; ++a) {
      cells[a] = engagement_index(avoidance_ratio(state[a].clicks, state[a].exposures),
                                  epi_ratio(state[a].exposures, impressions), D)
                     .flat;
      const auto pub = out.articles[a].publish_bucket;
      const double age = static_cast<double>(b) - static_cast<double>(pub);
      weights[a] = pub > b ? 0.0
                           : state[a].weight *
                                 std::exp(-age * bucket_hours / spec.exposure_decay_hours);
    }
    std::vector<std::size_t> active_users;
    for (std::size_t u = 0; u < users.size(); ++u) {
      if (users[u].arrival_bucket <= b) active_users.push_back(u);
    }
    const auto live = static_cast<std::size_t>(
        std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; }));
    if (active_users.empty() || live == 0) continue;
    const auto shown_count = std::min(spec.shown_per_impression, live);

    std::vector<Timestamp> offsets(spec.impressions_per_bucket);
    std::uniform_int_distribution<Timestamp> offset(0, spec.bucket_seconds - 1);
    for (auto& o : offsets) o = offset(rng);
    std::sort(offsets.begin(), offsets.end());
    if (b == 0 && !offsets.empty()) offsets[0] = 0;  // pins the timeline origin to start_time

    std::uniform_int_distribution<std::size_t> pick_user(0, active_users.size() - 1);
    for (auto off : offsets) {
      auto& user = users[active_users[pick_user(rng)]];
      const auto user_index = static_cast<std::size_t>(&user - users.data());
      // Weighted sampling without replacement (Efraimidis-Spirakis keys).
      std::vector<std::pair<double, std::size_t>> keys;
      for (std::size_t a = 0; a < spec.n_articles; ++a) {
        if (weights[a] > 0.0) keys.emplace_back(std::log(unit(rng) + 1e-300) / weights[a], a);
      }
      std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(shown_count),
                        keys.end(), [](const auto& x, const auto& y) { return x.first > y.first; });

      ImpressionRecord record;
      record.user_id = "U" + std::to_string(user_index + 1);
      record.time = spec.start_time + static_cast<Timestamp>(b) * spec.bucket_seconds + off;
      record.history = user.clicks;
      std::vector<ShownTruth> truth;
      bool clicked = false;
      for (std::size_t k = 0; k < shown_count; ++k) {
        const auto a = keys[k].second;
        double p = spec.base_click_rate * state[a].appeal * propensity(user.in_group, cells[a]);
        if (spec.freshness_half_life_hours > 0.0) {
          const double age_hours =
              (static_cast<double>(b) - static_cast<double>(out.articles[a].publish_bucket)) *
                  bucket_hours +
              static_cast<double>(off) / 3600.0;
          p *= std::exp2(-age_hours / spec.freshness_half_life_hours);
        }
        p = std::clamp(p, 0.0, 1.0);
        const bool click = unit(rng) < p;
        clicked = clicked || click;
        record.shown.push_back({out.articles[a].news_id, static_cast<std::uint8_t>(click)});
        truth.push_back({out.records.size(), k, cells[a], user.in_group, p});
      }
      if (!clicked) {
        ++out.dropped_impressions;
        continue;
      }
      record.impression_id = std::to_string(++serial);
      ++impressions;
      for (std::size_t k = 0; k < record.shown.size(); ++k) {
        auto& s = state[keys[k].second];
        ++s.exposures;
        if (record.shown[k].label != 0) {
          ++s.clicks;
          user.clicks.push_back(record.shown[k].news_id);
        }
      }
      out.records.push_back(std::move(record));
      out.truth.insert(out.truth.end(), truth.begin(), truth.end());
    }
  }
  return out;
}

void write_news_tsv(std::ostream& out, const std::vector<SyntheticArticle>& articles) {
  for (const auto& a : articles) {
    out << a.news_id << '\t' << a.category << '\t' << a.category << "_sub\t" << a.title
        << "\t\thttps://example.invalid/" << a.news_id << "\t[]\t[]\n";
  }
}

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream news(dir / "news.tsv");
  if (!news) throw Error("cannot write " + (dir / "news.tsv").string());
  write_news_tsv(news, corpus.articles);
  std::ofstream behaviors(dir / "behaviors.tsv");
  if (!behaviors) throw Error("cannot write " + (dir / "behaviors.tsv").string());
  write_behaviors_tsv(behaviors, corpus.records);
  if (!news || !behaviors) throw Error("failed writing synthetic corpus to " + dir.string());
}

}  // namespace awrs
