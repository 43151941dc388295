#pragma once

// Binary parameter container; the byte layout is described in docs/checkpoint_format.md.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "awrs/autodiff.hpp"

namespace awrs {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint8_t element_bytes = 4;  // 4 = float32, 8 = float64
  std::vector<double> values;      // widened on read
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string meta;  // JSON text
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const ad::ParameterStore<Real>& store,
                     const std::string& meta);

// Throws ParseError on a truncated file, bad magic or unsupported version.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies tensors into same-named parameters, converting precision if needed. Throws Error
// if a parameter is missing from the checkpoint or has a different shape.
template <typename Real>
void load_parameters(const Checkpoint& checkpoint, ad::ParameterStore<Real>& store);

}  // namespace awrs
