#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmi/errors.hpp"

namespace ssmi {

// Named-tensor archive, little-endian throughout:
//
//   "SSMI"                     4 bytes magic
//   u32  format version (= 1)
//   u32  metadata length, then UTF-8 JSON bytes
//   u32  tensor count
//   per tensor:
//     u16  name length, then UTF-8 name
//     u8   ndim
//     u64  dims[ndim]
//     f64  data[prod(dims)]
//   u32  CRC32 (IEEE, zlib polarity) of all preceding bytes
//
// Writes are atomic (temp file + rename).

struct NamedArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

struct Container {
    std::string meta_json;
    std::vector<NamedArray> tensors;
};

constexpr std::uint32_t kContainerVersion = 1;

std::uint32_t crc32(const unsigned char* data, std::size_t len);

std::vector<unsigned char> encode_container(const Container& c);
Container decode_container(const std::vector<unsigned char>& bytes);

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace ssmi
