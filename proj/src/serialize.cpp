#include "act/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "act/errors.hpp"

namespace act::io {

namespace {

template <typename U>
void put_le(std::ostream& os, U value) {
  static_assert(std::is_unsigned_v<U>);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xffu);
  os.write(bytes, sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw IoError("unexpected end of tensor stream");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_tensors(std::ostream& os, const std::array<char, 4>& magic, const std::vector<NamedTensor>& tensors) {
  os.write(magic.data(), 4);
  put_le<std::uint32_t>(os, kFormatVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    if (nt.name.size() > 0xffff) throw IoError("tensor name too long: " + nt.name.substr(0, 32));
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put_le<std::uint8_t>(os, 0);  // f32
    const auto& shape = nt.tensor.shape();
    if (shape.size() > 0xff) throw IoError("tensor '" + nt.name + "' has too many dimensions");
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (float v : nt.tensor.data()) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os) throw IoError("failed writing tensor stream");
}

std::vector<NamedTensor> read_tensors(std::istream& is, const std::array<char, 4>& magic) {
  std::array<char, 4> got{};
  if (!is.read(got.data(), 4) || got != magic) {
    throw IoError(std::string("bad magic, expected ") + std::string(magic.data(), 4));
  }
  const auto version = get_le<std::uint32_t>(is);
  if (version != kFormatVersion) throw IoError("unsupported format version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(is);
    std::string name(len, '\0');
    if (len && !is.read(name.data(), len)) throw IoError("truncated tensor name");
    const auto dtype = get_le<std::uint8_t>(is);
    if (dtype != 0) throw IoError("tensor '" + name + "' has unsupported dtype code " + std::to_string(dtype));
    const auto ndim = get_le<std::uint8_t>(is);
    Shape shape(ndim);
    for (auto& d : shape) d = get_le<std::uint32_t>(is);
    std::vector<float> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<float>(get_le<std::uint32_t>(is));
    out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, const std::array<char, 4>& magic,
                  const std::vector<NamedTensor>& tensors) {
  std::ostringstream buffer(std::ios::binary);
  write_tensors(buffer, magic, tensors);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const auto bytes = buffer.str();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path, const std::array<char, 4>& magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_tensors(is, magic);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace act::io
