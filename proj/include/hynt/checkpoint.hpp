#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hynt/tensor.hpp"

namespace hynt {

// Named-tensor container: ordered (name, dtype, shape, raw little-endian
// payload) records behind a magic header. Reload is bit-exact for the build's
// scalar width; a width mismatch is an error, not a silent conversion.
using NamedTensorList = std::vector<std::pair<std::string, Tensor>>;

void save_tensor_file(const std::string& path, const NamedTensorList& tensors);
NamedTensorList load_tensor_file(const std::string& path);

}  // namespace hynt
