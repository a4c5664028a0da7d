#include "curricubench/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace curricubench {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

// Tensor payloads are little-endian f32 on disk.
static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::string sanitize_filename(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (c == '/' || c == '\\' || c == '\t') c = '.';
  return out + ".f32";
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t size) {
  static const auto table = make_crc_table();
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint32_t c = 0xffffffffu;
  for (std::size_t i = 0; i < size; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  const auto it = tensors.find(name);
  require(it != tensors.end(), Errc::Key, "checkpoint has no tensor '" + name + "'");
  return it->second;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.tsv", std::ios::trunc);
  require(manifest.good(), Errc::Io, "cannot write manifest.tsv in " + dir.string());
  for (const auto& [name, tensor] : ckpt.tensors) {
    const std::string file = sanitize_filename(name);
    const std::size_t bytes = tensor.numel() * sizeof(float);
    std::ofstream raw(dir / file, std::ios::binary | std::ios::trunc);
    require(raw.good(), Errc::Io, "cannot write tensor file " + file);
    raw.write(reinterpret_cast<const char*>(tensor.ptr()),
              static_cast<std::streamsize>(bytes));
    require(raw.good(), Errc::Io, "short write to tensor file " + file);

    manifest << name << "\t";
    for (std::size_t i = 0; i < tensor.shape.size(); ++i)
      manifest << (i ? "," : "") << tensor.shape[i];
    manifest << "\tf32\t" << file << "\t" << crc32(tensor.ptr(), bytes) << "\n";
  }
  std::ofstream meta(dir / "meta.tsv", std::ios::trunc);
  for (const auto& [key, value] : ckpt.meta) meta << key << "\t" << value << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  require(manifest.good(), Errc::CorruptCheckpoint,
          "missing manifest.tsv in " + dir.string());
  Checkpoint ckpt;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string name, shape_s, dtype, file, crc_s;
    require(static_cast<bool>(std::getline(row, name, '\t')) &&
                static_cast<bool>(std::getline(row, shape_s, '\t')) &&
                static_cast<bool>(std::getline(row, dtype, '\t')) &&
                static_cast<bool>(std::getline(row, file, '\t')) &&
                static_cast<bool>(std::getline(row, crc_s, '\t')),
            Errc::CorruptCheckpoint, "malformed manifest row: " + line);
    require(dtype == "f32", Errc::CorruptCheckpoint, "unsupported dtype " + dtype);

    std::vector<std::size_t> shape;
    std::istringstream dims(shape_s);
    std::string d;
    while (std::getline(dims, d, ',')) shape.push_back(std::stoull(d));
    for (const std::size_t s : shape)
      require(s > 0, Errc::CorruptCheckpoint, "non-positive dim in " + name);

    Tensor tensor(shape);
    const std::size_t bytes = tensor.numel() * sizeof(float);
    std::ifstream raw(dir / file, std::ios::binary);
    require(raw.good(), Errc::CorruptCheckpoint,
            "manifest lists missing tensor file " + file);
    raw.read(reinterpret_cast<char*>(tensor.ptr()), static_cast<std::streamsize>(bytes));
    require(raw.gcount() == static_cast<std::streamsize>(bytes), Errc::CorruptCheckpoint,
            "tensor file " + file + " shorter than manifest shape");
    char extra;
    require(!raw.read(&extra, 1), Errc::CorruptCheckpoint,
            "tensor file " + file + " longer than manifest shape");

    const std::uint32_t crc = static_cast<std::uint32_t>(std::stoul(crc_s));
    require(crc == crc32(tensor.ptr(), bytes), Errc::CorruptCheckpoint,
            "checksum mismatch for tensor " + name);
    ckpt.tensors.emplace(std::move(name), std::move(tensor));
  }

  std::ifstream meta(dir / "meta.tsv");
  if (meta.good()) {
    while (std::getline(meta, line)) {
      if (line.empty()) continue;
      const std::size_t tab = line.find('\t');
      require(tab != std::string::npos, Errc::CorruptCheckpoint,
              "malformed meta row: " + line);
      ckpt.meta[line.substr(0, tab)] = line.substr(tab + 1);
    }
  }
  return ckpt;
}

}  // namespace curricubench
