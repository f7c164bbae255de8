#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "madllm/parameter_store.hpp"

namespace madllm {

// Binary parameter checkpoint, all integers and floats little-endian:
//
//   magic    8 bytes  "MADLLMCK"
//   version  u8       = 1
//   section  u16 length + UTF-8 bytes ("encoder", "model", ...)
//   count    u32      number of records
//   record   u16 name length + name bytes
//            u8  frozen flag (0/1)
//            u8  rank
//            u64 x rank dimensions
//            f64 x product(dimensions) row-major values
//
// Loading verifies magic, version, and that the file ends after the last record.
inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'D', 'L', 'L', 'M', 'C', 'K'};
inline constexpr unsigned char kCheckpointVersion = 1;

struct Checkpoint {
  std::string section;
  ParameterStore params;
};

void write_checkpoint(std::ostream& out, const ParameterStore& params, const std::string& section);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const std::string& section);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Loads and checks the section name.
ParameterStore load_checkpoint(const std::filesystem::path& path, const std::string& expected_section);

}  // namespace madllm
