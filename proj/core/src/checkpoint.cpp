#include "lassode/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "lassode/errors.hpp"

namespace lassode {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'A', 'S', 'S', 'O', 'D', 'E', '\x01'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& file) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw LoadError("checkpoint '" + file.string() + "' is truncated");
  }
  return v;
}

std::string get_string(std::ifstream& in, std::size_t n, const std::filesystem::path& file) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw LoadError("checkpoint '" + file.string() + "' is truncated");
  }
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot open '" + file.string() + "' for writing");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint64_t>(out, ckpt.meta.size());
  out.write(ckpt.meta.data(), static_cast<std::streamsize>(ckpt.meta.size()));
  put<std::uint64_t>(out, ckpt.params.size());
  for (const auto& path : ckpt.params.paths()) {
    const Tensor& t = ckpt.params.value(path);
    const ParamFlags f = ckpt.params.flags(path);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(path.size()));
    out.write(path.data(), static_cast<std::streamsize>(path.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>((f.trainable ? 1 : 0) | (f.lora_adapter ? 2 : 0)));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw LoadError("failed writing checkpoint '" + file.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + file.string() + "'");
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw LoadError("'" + file.string() + "' is not a lassode checkpoint");
  }
  Checkpoint ckpt;
  const auto meta_len = get<std::uint64_t>(in, file);
  ckpt.meta = get_string(in, meta_len, file);
  const auto count = get<std::uint64_t>(in, file);
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto path_len = get<std::uint32_t>(in, file);
    std::string path = get_string(in, path_len, file);
    const auto flag_bits = get<std::uint8_t>(in, file);
    const auto ndim = get<std::uint32_t>(in, file);
    if (ndim > 8) throw LoadError("checkpoint '" + file.string() + "': corrupt entry " + path);
    std::vector<std::size_t> shape(ndim);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(get<std::uint64_t>(in, file));
      n *= d;
    }
    std::vector<double> values(n);
    if (n && !in.read(reinterpret_cast<char*>(values.data()),
                      static_cast<std::streamsize>(n * sizeof(double)))) {
      throw LoadError("checkpoint '" + file.string() + "' is truncated in " + path);
    }
    ckpt.params.add(path, Tensor(std::move(shape), std::move(values)),
                    ParamFlags{(flag_bits & 1) != 0, (flag_bits & 2) != 0});
  }
  return ckpt;
}

}  // namespace lassode
