#include "varigan/nn/store.hpp"

#include <cstdint>
#include <fstream>

#include "varigan/nn/common.hpp"

namespace varigan::nn {

namespace {

constexpr char kMagic[8] = {'t', 'n', 's', 'r', 's', 't', 'r', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_tensors(const std::string& path, const std::map<std::string, Tensor>& named) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(os.good(), "save_tensors: cannot open {}", path);
  os.write(kMagic, sizeof(kMagic));
  put_u64(os, named.size());
  for (const auto& [name, t] : named) {  // std::map iterates sorted
    put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, t.ndim());
    for (std::size_t d = 0; d < t.ndim(); ++d) put_u64(os, t.dim(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  check(os.good(), "save_tensors: write failed for {}", path);
}

std::map<std::string, Tensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "load_tensors: cannot open {}", path);
  char magic[8];
  is.read(magic, sizeof(magic));
  check(is.good() && std::equal(magic, magic + 8, kMagic), "load_tensors: bad header in {}",
        path);
  std::map<std::string, Tensor> out;
  const std::uint64_t count = get_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = get_u64(is);
    check(is.good() && name_len < (1u << 16), "load_tensors: corrupt entry in {}", path);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    const std::uint64_t rank = get_u64(is);
    check(is.good() && rank <= 8, "load_tensors: corrupt rank in {}", path);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = get_u64(is);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.raw().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    check(is.good(), "load_tensors: truncated data in {}", path);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace varigan::nn
