#include "awrs/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "awrs/error.hpp"
#include "strings.hpp"

namespace awrs {

using json = nlohmann::json;
using detail::chomp;
using detail::parse_number;
using detail::split;
using detail::split_ws;

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

std::int32_t Vocabulary::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::int32_t Vocabulary::index(std::string_view token) const {
  return find(token).value_or(kUnk);
}

std::optional<std::int32_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(std::int32_t index) const {
  return tokens_.at(static_cast<std::size_t>(index));
}

std::int32_t Interner::add(std::string_view key) {
  auto it = ids_.find(std::string(key));
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(keys_.size());
  keys_.emplace_back(key);
  ids_.emplace(keys_.back(), id);
  return id;
}

std::optional<std::int32_t> Interner::find(std::string_view key) const {
  auto it = ids_.find(std::string(key));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const NewsArticle* NewsCatalog::find(std::string_view news_id) const {
  auto it = by_id.find(std::string(news_id));
  return it == by_id.end() ? nullptr : &articles[it->second];
}

void ParseReport::skip(std::size_t line, std::string message) {
  ++rows_skipped;
  if (errors.size() < kMaxKeptErrors) errors.push_back({line, std::move(message)});
}

std::vector<std::string> normalize_title(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80 && std::ispunct(u)) continue;
    cleaned.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
  }
  std::vector<std::string> tokens;
  for (auto piece : split_ws(cleaned)) tokens.emplace_back(piece);
  return tokens;
}

std::vector<std::int32_t> tokenize_title(std::string_view text, const Vocabulary& vocab,
                                         std::size_t max_title_len) {
  std::vector<std::int32_t> ids(max_title_len, Vocabulary::kPad);
  const auto tokens = normalize_title(text);
  const std::size_t n = std::min(tokens.size(), max_title_len);
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.index(tokens[i]);
  return ids;
}

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return in;
}

void add_entities_from_json(std::string_view field, NewsCatalog& catalog, NewsArticle& article) {
  if (field.empty()) return;
  const auto parsed = json::parse(field);
  if (!parsed.is_array()) throw std::invalid_argument("entity column is not a JSON array");
  for (const auto& entity : parsed) {
    if (!entity.is_object() || !entity.contains("WikidataId")) continue;
    const auto id = catalog.entities.add(entity["WikidataId"].get<std::string>());
    if (std::find(article.entity_ids.begin(), article.entity_ids.end(), id) ==
        article.entity_ids.end()) {
      article.entity_ids.push_back(id);
    }
  }
}

void insert_article(NewsCatalog& catalog, NewsArticle article, const std::string& path,
                    std::size_t line) {
  if (catalog.by_id.count(article.news_id) != 0) {
    throw ParseError(path, line, "duplicate news_id " + article.news_id);
  }
  for (const auto& token : normalize_title(article.title)) catalog.vocab.add(token);
  article.title_tokens = tokenize_title(article.title, catalog.vocab, catalog.max_title_len);
  catalog.by_id.emplace(article.news_id, catalog.articles.size());
  catalog.articles.push_back(std::move(article));
}

void parse_news_tsv(std::istream& in, const std::string& path, NewsCatalog& catalog,
                    ParseReport& report) {
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto text = chomp(raw);
    if (text.empty()) continue;
    ++report.rows_read;
    const auto fields = split(text, '\t');
    if (fields.size() < 5) {
      report.skip(line, "expected at least 5 tab-separated columns, got " +
                            std::to_string(fields.size()));
      continue;
    }
    NewsArticle article;
    article.news_id = std::string(fields[0]);
    article.title = std::string(fields[3]);
    article.abstract = std::string(fields[4]);
    try {
      if (fields.size() > 6) add_entities_from_json(fields[6], catalog, article);
      if (fields.size() > 7) add_entities_from_json(fields[7], catalog, article);
    } catch (const std::exception& e) {
      report.skip(line, std::string("bad entity column: ") + e.what());
      continue;
    }
    article.category_id = catalog.categories.add(fields[1]);
    article.subcategory_id = catalog.subcategories.add(fields[2]);
    insert_article(catalog, std::move(article), path, line);
    ++report.rows_ok;
  }
}

void parse_news_jsonl(std::istream& in, const std::string& path, NewsCatalog& catalog,
                      ParseReport& report) {
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto text = chomp(raw);
    if (split_ws(text).empty()) continue;
    ++report.rows_read;
    NewsArticle article;
    try {
      const auto row = json::parse(text);
      article.news_id = row.at("news_id").get<std::string>();
      article.title = row.value("title", std::string());
      article.abstract = row.value("abstract", std::string());
      if (row.contains("entities")) {
        for (const auto& e : row["entities"]) {
          article.entity_ids.push_back(catalog.entities.add(e.get<std::string>()));
        }
      }
      if (row.contains("publish_time") && !row["publish_time"].is_null()) {
        article.publish_time = row["publish_time"].get<Timestamp>();
      }
      article.category_id = catalog.categories.add(row.at("category").get<std::string>());
      article.subcategory_id =
          catalog.subcategories.add(row.value("subcategory", std::string()));
    } catch (const json::exception& e) {
      report.skip(line, e.what());
      continue;
    }
    insert_article(catalog, std::move(article), path, line);
    ++report.rows_ok;
  }
}

std::optional<ShownItem> parse_shown_token(std::string_view token) {
  const auto dash = token.rfind('-');
  if (dash == std::string_view::npos || dash == 0) return std::nullopt;
  const auto label = token.substr(dash + 1);
  if (label != "0" && label != "1") return std::nullopt;
  return ShownItem{std::string(token.substr(0, dash)), static_cast<std::uint8_t>(label[0] - '0')};
}

std::optional<ImpressionRecord> parse_behaviors_json(std::string_view text, std::string* error) {
  ImpressionRecord record;
  try {
    const auto row = json::parse(text);
    const auto& id = row.at("impression_id");
    record.impression_id = id.is_string() ? id.get<std::string>() : id.dump();
    record.user_id = row.at("user_id").get<std::string>();
    record.time = row.at("time").get<Timestamp>();
    for (const auto& h : row.value("history", json::array())) {
      record.history.push_back(h.get<std::string>());
    }
    for (const auto& pair : row.at("shown")) {
      const auto label = pair.at(1).get<int>();
      if (label != 0 && label != 1) {
        *error = "label must be 0 or 1";
        return std::nullopt;
      }
      record.shown.push_back({pair.at(0).get<std::string>(), static_cast<std::uint8_t>(label)});
    }
  } catch (const json::exception& e) {
    *error = e.what();
    return std::nullopt;
  }
  if (record.shown.empty()) {
    *error = "no shown candidates";
    return std::nullopt;
  }
  return record;
}

}  // namespace

NewsCatalog parse_news_file(const std::string& path, std::size_t max_title_len,
                            ParseReport* report) {
  if (max_title_len == 0) throw Error("max_title_len must be >= 1");
  auto in = open_input(path);
  NewsCatalog catalog;
  catalog.max_title_len = max_title_len;
  ParseReport local;
  ParseReport& rep = report != nullptr ? *report : local;
  if (detail::ends_with(path, ".jsonl")) {
    parse_news_jsonl(in, path, catalog, rep);
  } else {
    parse_news_tsv(in, path, catalog, rep);
  }
  return catalog;
}

std::optional<ImpressionRecord> parse_behaviors_line(std::string_view line, std::string* error) {
  std::string scratch;
  if (error == nullptr) error = &scratch;
  const auto fields = split(line, '\t');
  if (fields.size() != 5) {
    *error = "expected 5 tab-separated columns, got " + std::to_string(fields.size());
    return std::nullopt;
  }
  ImpressionRecord record;
  record.impression_id = std::string(fields[0]);
  record.user_id = std::string(fields[1]);
  const auto time = parse_mind_time(fields[2]);
  if (!time) {
    *error = "unparseable time '" + std::string(fields[2]) + "'";
    return std::nullopt;
  }
  record.time = *time;
  for (auto id : split_ws(fields[3])) record.history.emplace_back(id);
  for (auto token : split_ws(fields[4])) {
    auto item = parse_shown_token(token);
    if (!item) {
      *error = "bad candidate '" + std::string(token) + "'";
      return std::nullopt;
    }
    record.shown.push_back(std::move(*item));
  }
  if (record.shown.empty()) {
    *error = "no shown candidates";
    return std::nullopt;
  }
  return record;
}

std::vector<ImpressionRecord> parse_behaviors_file(const std::string& path, ParseReport* report) {
  auto in = open_input(path);
  ParseReport local;
  ParseReport& rep = report != nullptr ? *report : local;
  const bool jsonl = detail::ends_with(path, ".jsonl");
  std::vector<ImpressionRecord> records;
  std::string raw;
  std::string error;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto text = chomp(raw);
    if (split_ws(text).empty()) continue;
    ++rep.rows_read;
    auto record = jsonl ? parse_behaviors_json(text, &error) : parse_behaviors_line(text, &error);
    if (!record) {
      rep.skip(line, error);
      continue;
    }
    records.push_back(std::move(*record));
    ++rep.rows_ok;
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const auto& a, const auto& b) { return a.time < b.time; });
  return records;
}

std::optional<Timestamp> parse_mind_time(std::string_view text) {
  const auto parts = split_ws(text);
  if (parts.size() != 3) return std::nullopt;
  const auto date = split(parts[0], '/');
  const auto clock = split(parts[1], ':');
  if (date.size() != 3 || clock.size() != 3) return std::nullopt;
  const auto month = parse_number<unsigned>(date[0]);
  const auto day = parse_number<unsigned>(date[1]);
  const auto year = parse_number<int>(date[2]);
  const auto hour = parse_number<int>(clock[0]);
  const auto minute = parse_number<int>(clock[1]);
  const auto second = parse_number<int>(clock[2]);
  if (!month || !day || !year || !hour || !minute || !second) return std::nullopt;
  if (*hour < 1 || *hour > 12 || *minute < 0 || *minute > 59 || *second < 0 || *second > 59) {
    return std::nullopt;
  }
  int hour24 = *hour % 12;
  if (parts[2] == "PM") {
    hour24 += 12;
  } else if (parts[2] != "AM") {
    return std::nullopt;
  }
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{*year}, std::chrono::month{*month},
                           std::chrono::day{*day}};
  if (!ymd.ok()) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * 86400 + hour24 * 3600 + *minute * 60 + *second;
}

std::string format_mind_time(Timestamp t) {
  using namespace std::chrono;
  const auto tp = sys_seconds{seconds{t}};
  const auto day_point = floor<days>(tp);
  const year_month_day ymd{day_point};
  const auto secs = (tp - day_point).count();
  const auto hour24 = static_cast<int>(secs / 3600);
  const auto minute = static_cast<int>(secs / 60 % 60);
  const auto second = static_cast<int>(secs % 60);
  const int hour12 = hour24 % 12 == 0 ? 12 : hour24 % 12;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%u/%u/%d %d:%02d:%02d %s", static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(ymd.year()), hour12, minute,
                second, hour24 < 12 ? "AM" : "PM");
  return buf;
}

std::string format_shown(const std::vector<ShownItem>& shown) {
  std::string out;
  for (std::size_t i = 0; i < shown.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += shown[i].news_id;
    out.push_back('-');
    out.push_back(static_cast<char>('0' + shown[i].label));
  }
  return out;
}

std::string format_behaviors_line(const ImpressionRecord& record) {
  std::string history;
  for (std::size_t i = 0; i < record.history.size(); ++i) {
    if (i > 0) history.push_back(' ');
    history += record.history[i];
  }
  return record.impression_id + '\t' + record.user_id + '\t' + format_mind_time(record.time) +
         '\t' + history + '\t' + format_shown(record.shown);
}

void write_behaviors_tsv(std::ostream& out, const std::vector<ImpressionRecord>& records) {
  for (const auto& r : records) out << format_behaviors_line(r) << '\n';
}

void write_behaviors_jsonl(std::ostream& out, const std::vector<ImpressionRecord>& records) {
  for (const auto& r : records) {
    json shown = json::array();
    for (const auto& s : r.shown) shown.push_back(json::array({s.news_id, s.label}));
    json row = {{"impression_id", r.impression_id},
                {"user_id", r.user_id},
                {"time", r.time},
                {"history", r.history},
                {"shown", shown}};
    out << row.dump() << '\n';
  }
}

EmbeddingMatrix load_word_vectors(const std::string& path, const Vocabulary& vocab,
                                  std::size_t dim, std::uint64_t seed, float init_range) {
  if (dim == 0) throw Error("word vector dim must be >= 1");
  auto in = open_input(path);
  EmbeddingMatrix m;
  m.rows = vocab.size();
  m.cols = dim;
  m.data.resize(m.rows * m.cols);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uniform(-init_range, init_range);
  for (auto& v : m.data) v = uniform(rng);
  std::fill_n(m.data.begin() + Vocabulary::kPad * dim, dim, 0.0f);

  std::vector<bool> seen(m.rows, false);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto fields = split_ws(raw);
    if (fields.empty()) continue;
    const std::size_t width = fields.size() - 1;
    if (line == 1 && fields.size() == 2 && dim != 1 && parse_number<std::size_t>(fields[0]) &&
        parse_number<std::size_t>(fields[1])) {
      continue;  // word2vec-style "count dim" header
    }
    if (width != dim) {
      throw ParseError(path, line,
                       "expected " + std::to_string(dim) + " values, got " + std::to_string(width));
    }
    const auto row = vocab.find(fields[0]);
    if (!row || *row == Vocabulary::kPad) continue;
    float* dst = m.data.data() + static_cast<std::size_t>(*row) * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      const auto v = parse_number<float>(fields[j + 1]);
      if (!v) throw ParseError(path, line, "bad number '" + std::string(fields[j + 1]) + "'");
      dst[j] = *v;
    }
    if (!seen[static_cast<std::size_t>(*row)]) {
      seen[static_cast<std::size_t>(*row)] = true;
      ++m.matched;
    }
  }
  return m;
}

}  // namespace awrs
