#pragma once

#include <filesystem>
#include <iosfwd>

#include "schedgraph/tensor.hpp"

namespace schedgraph {

// Named-tensor archive. Layout:
//   1 byte     format version (kCheckpointVersion)
//   per tensor, in name order:
//     "<name> <rows> <cols>\n"
//     rows * cols little-endian IEEE-754 f64 values, row-major
// Gradients are not stored; a loaded store has zero gradients.
inline constexpr unsigned char kCheckpointVersion = 1;

void save_checkpoint(const ParamStore& store, std::ostream& out);
ParamStore load_checkpoint(std::istream& in);

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace schedgraph
