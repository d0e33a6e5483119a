#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ocvit/encoder.hpp"
#include "ocvit/param_store.hpp"

namespace ocvit {

// Checkpoint file layout:
//   bytes 0..7   little-endian u64 header length L
//   bytes 8..8+L UTF-8 JSON: name -> {"dtype":"f32","shape":[..],"offset":o,"nbytes":n}
//   payload      raw little-endian IEEE-754 f32 values, tightly packed,
//                offsets (relative to the payload start) ascending in name order.

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);

/// Loads a full store (all entries trainable until flags are reapplied).
/// Malformed files throw IoError naming the offending tensor; nothing
/// partial is ever returned.
ParamStore load_checkpoint(const std::filesystem::path& path);

/// Expected name -> shape map for an extractor plus FC head of given depth.
std::map<std::string, std::vector<std::size_t>> expected_param_shapes(
    const EncoderConfig& cfg, std::size_t head_depth);

/// Verifies the store carries exactly the expected tensors with the expected
/// shapes; throws IoError naming the first offender.
void validate_params(const ParamStore& store,
                     const std::map<std::string, std::vector<std::size_t>>& expected);

}  // namespace ocvit
