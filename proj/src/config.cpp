#include "awrs/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "awrs/error.hpp"

namespace awrs {

using json = nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, std::string_view where, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw Error(std::string(where) + ": expected an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw Error(std::string(where) + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(std::string("config key \"") + key + "\" has the wrong type");
  }
}

json news_json(const NewsEncoderConfig& c) {
  return {{"vocab_size", c.vocab_size},   {"num_categories", c.num_categories},
          {"num_entities", c.num_entities}, {"word_dim", c.word_dim},
          {"news_dim", c.news_dim},       {"heads", c.heads},
          {"attention_hidden", c.attention_hidden}, {"category_dim", c.category_dim},
          {"entity_dim", c.entity_dim},   {"use_entities", c.use_entities},
          {"train_word_embeddings", c.train_word_embeddings}};
}

NewsEncoderConfig news_from(const json& j) {
  reject_unknown(j, "model.news",
                 {"vocab_size", "num_categories", "num_entities", "word_dim", "news_dim", "heads",
                  "attention_hidden", "category_dim", "entity_dim", "use_entities",
                  "train_word_embeddings"});
  NewsEncoderConfig c;
  read(j, "vocab_size", c.vocab_size);
  read(j, "num_categories", c.num_categories);
  read(j, "num_entities", c.num_entities);
  read(j, "word_dim", c.word_dim);
  read(j, "news_dim", c.news_dim);
  read(j, "heads", c.heads);
  read(j, "attention_hidden", c.attention_hidden);
  read(j, "category_dim", c.category_dim);
  read(j, "entity_dim", c.entity_dim);
  read(j, "use_entities", c.use_entities);
  read(j, "train_word_embeddings", c.train_word_embeddings);
  return c;
}

json model_json(const ModelConfig& c) {
  return {{"news", news_json(c.news)},
          {"grid_d", c.grid_d},
          {"ue_dim", c.ue_dim},
          {"time_dim", c.time_dim},
          {"user_heads", c.user_heads},
          {"window", c.window},
          {"user_attention_hidden", c.user_attention_hidden},
          {"history_len", c.history_len},
          {"mode", std::string(to_string(c.mode))}};
}

ModelConfig model_from(const json& j) {
  reject_unknown(j, "model",
                 {"news", "grid_d", "ue_dim", "time_dim", "user_heads", "window",
                  "user_attention_hidden", "history_len", "mode"});
  ModelConfig c;
  if (j.contains("news")) c.news = news_from(j.at("news"));
  read(j, "grid_d", c.grid_d);
  read(j, "ue_dim", c.ue_dim);
  read(j, "time_dim", c.time_dim);
  read(j, "user_heads", c.user_heads);
  read(j, "window", c.window);
  read(j, "user_attention_hidden", c.user_attention_hidden);
  read(j, "history_len", c.history_len);
  if (j.contains("mode")) {
    std::string mode;
    read(j, "mode", mode);
    c.mode = parse_mode(mode);
  }
  return c;
}

json data_json(const DataConfig& d) {
  json j = {{"news", d.news},           {"train", d.train},
            {"valid", d.valid},         {"test", d.test},
            {"behaviors", d.behaviors}, {"word_vectors", d.word_vectors}};
  if (d.train_end) j["train_end"] = *d.train_end;
  if (d.valid_end) j["valid_end"] = *d.valid_end;
  return j;
}

DataConfig data_from(const json& j) {
  reject_unknown(j, "data",
                 {"news", "train", "valid", "test", "behaviors", "train_end", "valid_end",
                  "word_vectors"});
  DataConfig d;
  read(j, "news", d.news);
  read(j, "train", d.train);
  read(j, "valid", d.valid);
  read(j, "test", d.test);
  read(j, "behaviors", d.behaviors);
  read(j, "word_vectors", d.word_vectors);
  if (j.contains("train_end")) d.train_end = j.at("train_end").get<Timestamp>();
  if (j.contains("valid_end")) d.valid_end = j.at("valid_end").get<Timestamp>();
  return d;
}

json train_json(const TrainConfig& c) {
  return {{"model", model_json(c.model)},
          {"data", data_json(c.data)},
          {"lr", c.lr},
          {"negatives", c.negatives},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"bucket_width", c.bucket_width},
          {"threads", c.threads},
          {"precision", c.use_double ? "double" : "float"}};
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::full: return "full";
    case Mode::only_rel: return "only_rel";
    case Mode::only_avoid: return "only_avoid";
  }
  return "full";
}

Mode parse_mode(std::string_view text) {
  if (text == "full") return Mode::full;
  if (text == "only_rel") return Mode::only_rel;
  if (text == "only_avoid") return Mode::only_avoid;
  throw Error("unknown mode \"" + std::string(text) + "\" (expected full, only_rel or only_avoid)");
}

void validate(const TrainConfig& c) {
  if (c.negatives < 1) throw Error("negatives (K) must be >= 1");
  if (c.patience < 1) throw Error("patience must be >= 1");
  if (c.batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(c.lr >= 0.0)) throw Error("lr must be >= 0");
  if (c.bucket_width <= 0) throw Error("bucket_width must be > 0");
  if (c.model.grid_d < 1) throw Error("grid_d must be >= 1");
  if (c.model.history_len < 1) throw Error("history_len must be >= 1");
  if (c.threads < 1) throw Error("threads must be >= 1");
}

TrainConfig parse_train_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, "config",
                 {"model", "data", "lr", "negatives", "max_epochs", "patience", "batch_size",
                  "max_steps", "seed", "bucket_width", "threads", "precision"});
  TrainConfig c;
  if (j.contains("model")) c.model = model_from(j.at("model"));
  if (j.contains("data")) c.data = data_from(j.at("data"));
  read(j, "lr", c.lr);
  read(j, "negatives", c.negatives);
  read(j, "max_epochs", c.max_epochs);
  read(j, "patience", c.patience);
  read(j, "batch_size", c.batch_size);
  read(j, "max_steps", c.max_steps);
  read(j, "seed", c.seed);
  read(j, "bucket_width", c.bucket_width);
  read(j, "threads", c.threads);
  if (j.contains("precision")) {
    std::string p;
    read(j, "precision", p);
    if (p != "float" && p != "double") throw Error("precision must be \"float\" or \"double\"");
    c.use_double = p == "double";
  }
  validate(c);
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto config = parse_train_config(buffer.str());
  const auto base = path.parent_path();
  for (auto* p : {&config.data.news, &config.data.train, &config.data.valid, &config.data.test,
                  &config.data.behaviors, &config.data.word_vectors}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
  }
  return config;
}

std::string to_json(const TrainConfig& config) { return train_json(config).dump(2); }
std::string to_json(const ModelConfig& config) { return model_json(config).dump(); }

ModelConfig parse_model_config(std::string_view json_text) {
  try {
    return model_from(json::parse(json_text));
  } catch (const json::exception& e) {
    throw Error(std::string("bad model config: ") + e.what());
  }
}

std::uint64_t fingerprint(const TrainConfig& config) {
  const auto text = train_json(config).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace awrs
