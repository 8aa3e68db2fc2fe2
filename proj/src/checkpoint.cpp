#include "ctrlsum/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ctrlsum/error.hpp"

namespace ctrlsum {
namespace {

constexpr std::array<char, 8> kMagic{'C', 'S', 'U', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class UInt>
void put_le(std::string& out, UInt value) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <class UInt>
UInt get_le(const std::string& in, std::size_t offset) {
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    value |= static_cast<UInt>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return value;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                      const ParameterSet& tensors) {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& t : tensors) layout.push_back({{"name", t.name}, {"shape", t.shape}});
  header["tensors"] = std::move(layout);
  const std::string header_text = header.dump();

  std::string bytes(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(bytes, kVersion);
  put_le<std::uint64_t>(bytes, header_text.size());
  bytes += header_text;
  for (const auto& t : tensors) {
    for (double v : t.values) {
      put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingArtifactError("missing checkpoint: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto corrupt = [&](const std::string& why) {
    return Error("corrupt checkpoint " + path.string() + ": " + why);
  };
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw corrupt("bad magic");
  }
  if (get_le<std::uint32_t>(bytes, 8) != kVersion) throw corrupt("unsupported version");
  const auto header_len = get_le<std::uint64_t>(bytes, 12);
  if (header_len > bytes.size() - 20) throw corrupt("truncated header");

  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(bytes.substr(20, header_len));
    for (const auto& entry : ckpt.header.at("tensors")) {
      ckpt.tensors.add(entry.at("name").get<std::string>(),
                       entry.at("shape").get<std::vector<std::size_t>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(e.what());
  }

  std::size_t offset = 20 + header_len;
  const std::size_t needed = ckpt.tensors.scalar_count() * 4;
  if (bytes.size() - offset != needed) throw corrupt("payload size mismatch");
  for (auto& t : ckpt.tensors) {
    for (double& v : t.values) {
      v = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset)));
      offset += 4;
    }
  }
  return ckpt;
}

}  // namespace ctrlsum
