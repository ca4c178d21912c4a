#pragma once

// Checkpoint container: a text manifest of `name,rows,cols` lines terminated
// by `end`, followed by the tensors as little-endian 64-bit floats in
// manifest order.

#include <filesystem>
#include <vector>

#include "qosdiff/nn.hpp"

namespace qosdiff {

void save_checkpoint(const std::filesystem::path& path, const nn::StateList& state);

/// Loads into `state`, which must list the same names and shapes in order.
void load_checkpoint(const std::filesystem::path& path, const nn::StateList& state);

/// In-memory copy of every tensor in `state`.
std::vector<ad::Matrix> snapshot(const nn::StateList& state);
void restore(const nn::StateList& state, const std::vector<ad::Matrix>& values);

}  // namespace qosdiff
