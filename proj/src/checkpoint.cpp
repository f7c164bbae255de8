#include "madllm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "madllm/errors.hpp"

namespace madllm {

namespace {

template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw DataError("checkpoint truncated");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  if (s.size() > 0xFFFF) throw ContractError("checkpoint string too long: " + s.substr(0, 32));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto len = get_le<std::uint16_t>(in);
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParameterStore& params, const std::string& section) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_le<std::uint8_t>(out, kCheckpointVersion);
  put_string(out, section);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    put_string(out, e.name);
    put_le<std::uint8_t>(out, e.frozen ? 1 : 0);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) put_le<std::uint64_t>(out, d);
    for (double v : e.value.data()) put_le<double>(out, v);
  }
  if (!out) throw DataError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  const auto version = get_le<std::uint8_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.section = get_string(in);
  const auto count = get_le<std::uint32_t>(in);
  for (std::uint32_t r = 0; r < count; ++r) {
    std::string name = get_string(in);
    const bool frozen = get_le<std::uint8_t>(in) != 0;
    const auto rank = get_le<std::uint8_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(in));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = get_le<double>(in);
    ck.params.add(std::move(name), Tensor(std::move(shape), std::move(values)), frozen);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const std::string& section) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params, section);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

ParameterStore load_checkpoint(const std::filesystem::path& path, const std::string& expected_section) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.section != expected_section) {
    throw DataError("checkpoint " + path.string() + " holds section '" + ck.section + "', expected '" +
                    expected_section + "'");
  }
  return std::move(ck.params);
}

}  // namespace madllm
