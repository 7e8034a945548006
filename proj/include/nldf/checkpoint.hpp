#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "nldf/conditioning.hpp"
#include "nldf/student.hpp"

namespace nldf::io {

// Checkpoint container: one file holding
//   line 1:  "NLDFCKPT1 <header_byte_count>\n"
//   header:  JSON (dtype, seed, step, model + fusion configs, tensor table)
//   payload: raw little-endian scalar arrays, in tensor-table order
// Only parameter values are stored; optimizer state is not.

template <typename S>
struct CheckpointBundle {
  student::NldfModel<S> model;
  cond::FusionModule<S> fusion;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

template <typename S>
void save_checkpoint(const std::filesystem::path& path, student::NldfModel<S>& model,
                     cond::FusionModule<S>& fusion, std::uint64_t seed, std::int64_t step);

/// Loads a checkpoint, converting the stored scalar type to S if they differ.
template <typename S>
CheckpointBundle<S> load_checkpoint(const std::filesystem::path& path);

/// Stored dtype ("float32" or "float64") without loading the payload.
std::string checkpoint_dtype(const std::filesystem::path& path);

}  // namespace nldf::io
