#include "hynt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace hynt {

namespace {

constexpr char kMagic[8] = {'H', 'Y', 'N', 'T', 'N', 'T', 'B', '1'};
constexpr std::uint8_t kDtypeF64 = 8;
constexpr std::uint8_t kDtypeF32 = 4;
constexpr std::uint8_t kBuildDtype = sizeof(real) == 8 ? kDtypeF64 : kDtypeF32;

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; serialize per-byte on other hosts");

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("tensor file: truncated header field");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_tensor_file(const std::string& path, const NamedTensorList& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("tensor file: cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(kBuildDtype));
    write_u32(out, static_cast<std::uint32_t>(tensor.rows()));
    write_u32(out, static_cast<std::uint32_t>(tensor.cols()));
    out.write(reinterpret_cast<const char*>(tensor.values().data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(real)));
  }
  if (!out) throw DataError("tensor file: write failed: " + path);
}

NamedTensorList load_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("tensor file: cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("tensor file: bad magic: " + path);
  }
  const std::uint32_t count = read_u32(in);
  NamedTensorList out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const int dtype = in.get();
    if (!in) throw DataError("tensor file: truncated entry in " + path);
    if (dtype != kBuildDtype) {
      throw DataError("tensor file: scalar width " + std::to_string(dtype) +
                      " does not match this build (" + std::to_string(kBuildDtype) + "): " + path);
    }
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    if (rows == 0 || cols == 0 || rows > (1u << 30) || cols > (1u << 30)) {
      throw DataError("tensor file: implausible shape for '" + name + "' in " + path);
    }
    std::vector<real> data(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(real)));
    if (!in) throw DataError("tensor file: truncated payload for '" + name + "' in " + path);
    out.emplace_back(std::move(name), Tensor::from_data(static_cast<int>(rows),
                                                        static_cast<int>(cols), std::move(data)));
  }
  return out;
}

}  // namespace hynt
