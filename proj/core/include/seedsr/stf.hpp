#pragma once

#include <string>

#include "seedsr/tensor.hpp"

namespace seedsr {

// STF tensor file: magic "STF1", dtype u8 (1=f32, 2=f64), ndim u8, dims as
// u32 little-endian, then the payload little-endian row-major. f32 files are
// widened exactly on load.
void save_stf(const std::string& path, const Tensor& t, bool as_f32 = false);
Tensor load_stf(const std::string& path);

}  // namespace seedsr
