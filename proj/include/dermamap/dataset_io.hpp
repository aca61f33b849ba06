#pragma once

#include <string>

#include "dermamap/types.hpp"

namespace dermamap {

// Container layout (see docs/FORMATS.md):
//   [magic "DMDS"][u32 version][u64 index_bytes]
//   [index: line-delimited JSON, one line per record]
//   [blob section: zlib-compressed raw RGB pixel arrays]
// Round-trips bit-exactly: load(serialize(ds)) compares equal on all fields.
constexpr uint32_t kDatasetFormatVersion = 1;

void serialize_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace dermamap
