#pragma once

#include <map>
#include <string>

#include "varigan/nn/tensor.hpp"

namespace varigan::nn {

/// Flat binary container of named tensors. Little-endian, fixed-width header
/// per entry: name, rank, dims, then raw doubles. Entries are sorted by name
/// on write so files are byte-stable for identical contents.
void save_tensors(const std::string& path, const std::map<std::string, Tensor>& named);
std::map<std::string, Tensor> load_tensors(const std::string& path);

}  // namespace varigan::nn
