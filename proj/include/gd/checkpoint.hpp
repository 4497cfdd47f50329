#pragma once

#include <iosfwd>
#include <string>

#include "gd/params.hpp"

namespace gd {

// Named-tensor archive, version GDCKPT1. Byte layout (normative):
//
//   "GDCKPT1\n"
//   <entry count as decimal digits>\n
//   then per entry, in order:
//     <name>\n
//     <space-separated shape dims>\n      (empty line for scalars)
//     <numel * 8 bytes: little-endian IEEE-754 float64, row-major>
//
// The float payload is raw bytes; readers must consume exactly
// prod(shape) * 8 bytes before the next name line.

void save_checkpoint(std::ostream& out, const ModelParams& params);
void save_checkpoint(const std::string& path, const ModelParams& params);

// Loads an archive. Tensors are created non-trainable; load_into() instead
// copies values into an existing ModelParams, requiring an exact name/shape
// match. Malformed archives raise std::runtime_error.
ModelParams load_checkpoint(std::istream& in);
ModelParams load_checkpoint(const std::string& path);
void load_into(std::istream& in, ModelParams& params);
void load_into(const std::string& path, ModelParams& params);

}  // namespace gd
