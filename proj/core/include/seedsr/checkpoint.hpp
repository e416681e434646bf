#pragma once

#include <string>

#include "seedsr/model.hpp"
#include "seedsr/synthetic.hpp"

namespace seedsr {

// Checkpoint = directory of one STF file per parameter (layer path as the
// filename) plus a manifest describing the architecture.
void save_checkpoint(const std::string& dir, const DenoiserParams& params,
                     const DenoiserConfig& cfg);
DenoiserParams load_checkpoint(const std::string& dir, DenoiserConfig* out_cfg = nullptr);

void save_decoder(const std::string& dir, const ToyDecoder& dec);
ToyDecoder load_decoder(const std::string& dir);

}  // namespace seedsr
