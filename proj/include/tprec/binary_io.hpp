#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace tprec::io {

/// Little helper for the versioned binary artifacts (graph snapshots,
/// embeddings, policy checkpoints). Every file starts with an 8-byte magic
/// and a u32 format version.
class BinaryWriter {
 public:
  BinaryWriter(const std::filesystem::path& path, std::string_view magic, std::uint32_t version)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    if (magic.size() != 8) throw std::invalid_argument("binary magic must be 8 bytes");
    out_.write(magic.data(), 8);
    put(version);
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put_array(std::span<const T> v) {
    put<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  }

  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed for " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  BinaryReader(const std::filesystem::path& path, std::string_view magic)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open " + path.string());
    std::string got(8, '\0');
    in_.read(got.data(), 8);
    if (!in_ || got != magic) throw std::runtime_error(path.string() + " is not a " + std::string(magic) + " file");
    version_ = get<std::uint32_t>();
  }

  std::uint32_t version() const { return version_; }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw std::runtime_error("truncated file " + path_.string());
    return v;
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  std::vector<T> get_array() {
    const auto n = get<std::uint64_t>();
    std::vector<T> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in_) throw std::runtime_error("truncated file " + path_.string());
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw std::runtime_error("truncated file " + path_.string());
    return s;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint32_t version_ = 0;
};

}  // namespace tprec::io
