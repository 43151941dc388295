#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "awrs/corpus.hpp"
#include "awrs/news_encoder.hpp"

namespace awrs {

// Ablation switches. only_rel zeroes the engagement embeddings seen by the user encoder;
// only_avoid scores with the user-encoder term alone.
enum class Mode { full, only_rel, only_avoid };

std::string_view to_string(Mode mode);
// Throws Error for anything but "full", "only_rel", "only_avoid".
Mode parse_mode(std::string_view text);

struct ModelConfig {
  NewsEncoderConfig news;
  int grid_d = 5;
  std::size_t ue_dim = 32;
  std::size_t time_dim = 16;
  std::size_t user_heads = 4;
  std::size_t window = 1;
  std::size_t user_attention_hidden = 128;
  std::size_t history_len = 50;  // M
  Mode mode = Mode::full;

  std::size_t aug_dim() const { return news.news_dim + ue_dim; }
};

struct DataConfig {
  std::string news;
  std::string train;
  std::string valid;
  std::string test;
  // Alternative to train/valid/test: one log cut at two timestamps.
  std::string behaviors;
  std::optional<Timestamp> train_end;
  std::optional<Timestamp> valid_end;
  std::string word_vectors;
};

struct TrainConfig {
  ModelConfig model;
  DataConfig data;
  double lr = 1e-5;
  std::size_t negatives = 4;  // K
  std::size_t max_epochs = 10;
  std::size_t patience = 3;
  std::size_t batch_size = 32;
  std::size_t max_steps = 0;  // 0 = no limit
  std::uint64_t seed = 0;
  Timestamp bucket_width = 3600;
  std::size_t threads = 1;  // evaluation threads; training is single-threaded
  bool use_double = false;
};

// Throws Error on unknown keys, wrong types, or violated bounds (K >= 1, patience >= 1, ...).
TrainConfig parse_train_config(std::string_view json_text);
// Reads a config file; relative data paths are resolved against the file's directory.
TrainConfig load_train_config(const std::filesystem::path& path);
std::string to_json(const TrainConfig& config);
std::string to_json(const ModelConfig& config);
ModelConfig parse_model_config(std::string_view json_text);
void validate(const TrainConfig& config);

// 64-bit FNV-1a of the canonical JSON form.
std::uint64_t fingerprint(const TrainConfig& config);

}  // namespace awrs
