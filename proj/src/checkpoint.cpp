#include "feddae/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "feddae/errors.hpp"

namespace feddae {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'A', 'E'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ingestion_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u64(os, meta_json.size());
  os.write(meta_json.data(), std::streamsize(meta_json.size()));
  write_u64(os, tensors.size());
  for (const auto& t : tensors) {
    uint64_t n = 1;
    for (uint64_t d : t.shape) n *= d;
    if (n != t.data.size())
      throw dimension_error("checkpoint tensor " + t.name + ": shape/data mismatch");
    write_u64(os, t.name.size());
    os.write(t.name.data(), std::streamsize(t.name.size()));
    write_u64(os, t.shape.size());
    for (uint64_t d : t.shape) write_u64(os, d);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             std::streamsize(t.data.size() * sizeof(double)));
  }
  if (!os) throw ingestion_error("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ingestion_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ingestion_error("not a checkpoint file: " + path);
  const uint32_t version = read_u32(is);
  if (version != kVersion)
    throw ingestion_error("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  const uint64_t meta_len = read_u64(is);
  ck.meta_json.resize(meta_len);
  is.read(ck.meta_json.data(), std::streamsize(meta_len));

  const uint64_t count = read_u64(is);
  ck.tensors.resize(count);
  for (auto& t : ck.tensors) {
    const uint64_t name_len = read_u64(is);
    t.name.resize(name_len);
    is.read(t.name.data(), std::streamsize(name_len));
    const uint64_t ndim = read_u64(is);
    t.shape.resize(ndim);
    uint64_t n = 1;
    for (auto& d : t.shape) {
      d = read_u64(is);
      n *= d;
    }
    t.data.resize(n);
    is.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(n * sizeof(double)));
    if (!is) throw ingestion_error("truncated checkpoint: " + path);
  }
  return ck;
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const NamedTensor& Checkpoint::require(const std::string& name,
                                       const std::vector<uint64_t>& shape) const {
  const NamedTensor* t = find(name);
  if (!t) throw dimension_error("checkpoint missing tensor: " + name);
  if (t->shape != shape) throw dimension_error("checkpoint tensor shape mismatch: " + name);
  return *t;
}

}  // namespace feddae
