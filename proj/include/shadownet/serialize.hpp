#pragma once

#include <string>

#include "shadownet/convert.hpp"
#include "shadownet/graph.hpp"

namespace shadownet {

// Container files ("SNM1"): 4-byte magic, u32 format version, u64 header
// length, UTF-8 JSON header, zero padding, then a 64-byte-aligned data section
// of blobs. Blob offsets in the header are relative to the data section base.
// Multi-byte integers and floats are little-endian. docs/FORMAT.md has the
// full layout.

void save_model(const std::string& path, const ModelGraph& g);
ModelGraph load_model(const std::string& path);

void save_part_a(const std::string& path, const PartA& a);
PartA load_part_a(const std::string& path);

void save_part_b(const std::string& path, const PartB& b);
PartB load_part_b(const std::string& path);

// Single-tensor files ("SNT1"), used for CLI inputs and outputs.
void save_tensor(const std::string& path, const TensorF& t);
TensorF load_tensor(const std::string& path);

// "model", "part-a", "part-b" or "tensor"; throws IoError on anything else.
std::string container_kind(const std::string& path);

}  // namespace shadownet
