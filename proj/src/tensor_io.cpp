#include "shade/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace shade {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need byte swaps");

namespace {

constexpr char kMagic[4] = {'T', 'E', 'N', 'S'};
constexpr uint8_t kVersion = 1;

void write_header(std::ostream& os, TensorDType dtype, const Shape& shape) {
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  os.put(static_cast<char>(dtype));
  os.put(static_cast<char>(shape.size()));
  for (int64_t e : shape) {
    uint64_t v = static_cast<uint64_t>(e);
    os.write(reinterpret_cast<const char*>(&v), 8);
  }
}

Shape read_header(std::istream& is, TensorDType expect) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a tensor file (bad magic)");
  uint8_t ver = static_cast<uint8_t>(is.get());
  if (ver != kVersion) throw std::runtime_error("unsupported tensor file version");
  uint8_t dtype = static_cast<uint8_t>(is.get());
  if (dtype != static_cast<uint8_t>(expect))
    throw std::runtime_error("tensor dtype mismatch");
  uint8_t rank = static_cast<uint8_t>(is.get());
  Shape shape(rank);
  for (uint8_t i = 0; i < rank; ++i) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    shape[i] = static_cast<int64_t>(v);
  }
  if (!is) throw std::runtime_error("truncated tensor header");
  return shape;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return is;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  write_header(os, TensorDType::Float32, t.shape);
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

void write_tensor(std::ostream& os, const ByteTensor& t) {
  write_header(os, TensorDType::Uint8, t.shape);
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size()));
}

void save_tensor(const std::string& path, const Tensor& t) {
  auto os = open_out(path);
  write_tensor(os, t);
}

void save_tensor(const std::string& path, const ByteTensor& t) {
  auto os = open_out(path);
  write_tensor(os, t);
}

TensorDType peek_dtype(std::istream& is) {
  auto pos = is.tellg();
  char buf[6];
  is.read(buf, 6);
  is.seekg(pos);
  if (!is) throw std::runtime_error("truncated tensor file");
  return static_cast<TensorDType>(buf[5]);
}

Tensor read_tensor_f32(std::istream& is) {
  Shape shape = read_header(is, TensorDType::Float32);
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!is) throw std::runtime_error("truncated tensor payload");
  return t;
}

ByteTensor read_tensor_u8(std::istream& is) {
  Shape shape = read_header(is, TensorDType::Uint8);
  ByteTensor t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size()));
  if (!is) throw std::runtime_error("truncated tensor payload");
  return t;
}

Tensor load_tensor_f32(const std::string& path) {
  auto is = open_in(path);
  return read_tensor_f32(is);
}

ByteTensor load_tensor_u8(const std::string& path) {
  auto is = open_in(path);
  return read_tensor_u8(is);
}

uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h) {
  const uint8_t* p = static_cast<const uint8_t*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t file_digest(const std::string& path) {
  auto is = open_in(path);
  char buf[1 << 16];
  uint64_t h = 0xcbf29ce484222325ULL;
  while (is) {
    is.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
  }
  return h;
}

std::string digest_hex(uint64_t d) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(d));
  return buf;
}

void save_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, Tensor>>& entries) {
  auto os = open_out(path);
  os.write("SHCK", 4);
  uint32_t n = static_cast<uint32_t>(entries.size());
  os.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& [name, t] : entries) {
    uint32_t len = static_cast<uint32_t>(name.size());
    os.write(reinterpret_cast<const char*>(&len), 4);
    os.write(name.data(), len);
    write_tensor(os, t);
  }
}

std::vector<std::pair<std::string, Tensor>> load_named_tensors(const std::string& path) {
  auto is = open_in(path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SHCK", 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 4);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t len = 0;
    is.read(reinterpret_cast<char*>(&len), 4);
    std::string name(len, '\0');
    is.read(name.data(), len);
    out.emplace_back(std::move(name), read_tensor_f32(is));
  }
  return out;
}

}  // namespace shade
