#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "act/params.hpp"

// Binary named-tensor container shared by weight checkpoints ("ACTW") and
// episode files ("ACTE"). All integers and floats are little-endian:
//
//   magic[4] u32 version u32 count
//   count × { u16 name_len, name bytes (UTF-8), u8 dtype (0 = f32), u8 ndim,
//             ndim × u32 dims, numel × f32 }
namespace act::io {

inline constexpr std::array<char, 4> kCheckpointMagic{'A', 'C', 'T', 'W'};
inline constexpr std::array<char, 4> kEpisodeMagic{'A', 'C', 'T', 'E'};
inline constexpr std::uint32_t kFormatVersion = 1;

void write_tensors(std::ostream& os, const std::array<char, 4>& magic, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& is, const std::array<char, 4>& magic);

void save_tensors(const std::filesystem::path& path, const std::array<char, 4>& magic,
                  const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path, const std::array<char, 4>& magic);

inline void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  save_tensors(path, kCheckpointMagic, params.entries());
}
inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return load_tensors(path, kCheckpointMagic);
}

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace act::io
