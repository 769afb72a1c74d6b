#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fmtk/diffcore/tensor.hpp"

namespace fmtk {

// Binary parameter container.
//
//   magic   "FMTK"
//   version u32 little-endian (currently 1)
//   records until EOF, each:
//     name_len u32 LE, name bytes,
//     rank u32 LE, dims u32 LE each,
//     payload: numel raw little-endian float64
//
// Written atomically (tmp + rename).
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);

std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace fmtk
