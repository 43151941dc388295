#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace awrs {

// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;

  Vocabulary();

  std::int32_t add(std::string_view token);
  // kUnk for out-of-vocabulary tokens.
  std::int32_t index(std::string_view token) const;
  std::optional<std::int32_t> find(std::string_view token) const;
  const std::string& token(std::int32_t index) const;
  std::size_t size() const { return tokens_.size(); }

 private:
  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<std::string> tokens_;
};

// Dense 0-based ids for categories, subcategories and entities.
class Interner {
 public:
  std::int32_t add(std::string_view key);
  std::optional<std::int32_t> find(std::string_view key) const;
  const std::string& key(std::int32_t id) const { return keys_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return keys_.size(); }

 private:
  std::unordered_map<std::string, std::int32_t> ids_;
  std::vector<std::string> keys_;
};

struct NewsArticle {
  std::string news_id;
  std::int32_t category_id = 0;
  std::int32_t subcategory_id = 0;
  std::vector<std::int32_t> title_tokens;  // always max_title_len long
  std::vector<std::int32_t> entity_ids;
  std::string title;
  std::string abstract;
  std::optional<Timestamp> publish_time;
};

struct NewsCatalog {
  std::vector<NewsArticle> articles;
  std::unordered_map<std::string, std::size_t> by_id;
  Vocabulary vocab;
  Interner categories;
  Interner subcategories;
  Interner entities;
  std::size_t max_title_len = 30;

  const NewsArticle* find(std::string_view news_id) const;
  std::size_t size() const { return articles.size(); }
};

struct ShownItem {
  std::string news_id;
  std::uint8_t label = 0;

  friend bool operator==(const ShownItem&, const ShownItem&) = default;
};

struct ImpressionRecord {
  std::string impression_id;
  std::string user_id;
  Timestamp time = 0;
  std::vector<std::string> history;
  std::vector<ShownItem> shown;

  friend bool operator==(const ImpressionRecord&, const ImpressionRecord&) = default;
};

struct RecordError {
  std::size_t line = 0;
  std::string message;
};

// Record-level problems found while parsing. Hard errors throw instead.
struct ParseReport {
  static constexpr std::size_t kMaxKeptErrors = 100;

  std::size_t rows_read = 0;
  std::size_t rows_ok = 0;
  std::size_t rows_skipped = 0;
  std::vector<RecordError> errors;  // first kMaxKeptErrors only

  void skip(std::size_t line, std::string message);
};

// Lowercase, drop ASCII punctuation, split on whitespace.
std::vector<std::string> normalize_title(std::string_view text);

std::vector<std::int32_t> tokenize_title(std::string_view text, const Vocabulary& vocab,
                                         std::size_t max_title_len);

// MIND news.tsv, or the JSONL interchange format when the path ends in ".jsonl".
// Throws ParseError on a duplicated news_id.
NewsCatalog parse_news_file(const std::string& path, std::size_t max_title_len = 30,
                            ParseReport* report = nullptr);

// MIND behaviors.tsv, or JSONL interchange. Result is stably sorted by time.
std::vector<ImpressionRecord> parse_behaviors_file(const std::string& path,
                                                   ParseReport* report = nullptr);

// "MM/DD/YYYY h:mm:ss AM" interpreted as UTC.
std::optional<Timestamp> parse_mind_time(std::string_view text);
std::string format_mind_time(Timestamp t);

// "N3-1 N4-0"
std::string format_shown(const std::vector<ShownItem>& shown);
std::string format_behaviors_line(const ImpressionRecord& record);
void write_behaviors_tsv(std::ostream& out, const std::vector<ImpressionRecord>& records);
void write_behaviors_jsonl(std::ostream& out, const std::vector<ImpressionRecord>& records);

// Parses a single behaviors.tsv line; returns std::nullopt and fills `error` on a bad row.
std::optional<ImpressionRecord> parse_behaviors_line(std::string_view line, std::string* error);

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;
  std::size_t matched = 0;  // vocabulary rows copied from the file

  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Text word vectors: "token v1 ... vdim" per line. Tokens absent from the file are drawn
// uniformly from [-init_range, init_range]; the PAD row is zero.
EmbeddingMatrix load_word_vectors(const std::string& path, const Vocabulary& vocab,
                                  std::size_t dim, std::uint64_t seed = 0,
                                  float init_range = 0.1f);

}  // namespace awrs
