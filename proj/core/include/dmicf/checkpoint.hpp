#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmicf/tensor.hpp"

namespace dmicf {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor2 value;
};

/// Writes tensors in the text container documented in docs/formats.md.
/// Values use shortest round-trip formatting, so save → load is bitwise.
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::string checkpoint_to_string(const std::vector<NamedTensor>& tensors);

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);
std::vector<NamedTensor> checkpoint_from_string(const std::string& text);

}  // namespace dmicf
