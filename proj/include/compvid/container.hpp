#pragma once

// Named-array container used for sequence files and checkpoints.
//
// Layout (all integers little-endian):
//   magic      8 bytes  "CVPCONT1"
//   count      u32      number of fields
//   per field:
//     name_len u16, name bytes (UTF-8, no terminator)
//     dtype    u8       0 = u8, 1 = f32, 2 = text, 3 = f64, 4 = i64
//     ndim     u8
//     dims     ndim x u64
//     nbytes   u64      must equal prod(dims) * sizeof(dtype) (text: 1 byte/elem)
//     payload  nbytes
// Field names are unique within a file.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace compvid {

enum class DType : std::uint8_t { U8 = 0, F32 = 1, Text = 2, F64 = 3, I64 = 4 };

std::size_t dtype_size(DType t);

struct ArrayField {
  std::string name;
  DType dtype = DType::U8;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> bytes;

  std::uint64_t numel() const;
};

class Container {
 public:
  void add(ArrayField field);
  void add_u8(const std::string& name, std::vector<std::uint64_t> shape, const std::uint8_t* data);
  void add_f32(const std::string& name, std::vector<std::uint64_t> shape, const float* data);
  void add_text(const std::string& name, const std::string& text);

  bool has(const std::string& name) const;
  const ArrayField& get(const std::string& name) const;
  const std::vector<ArrayField>& fields() const { return fields_; }

  std::vector<std::uint8_t> serialize() const;
  static Container deserialize(const std::vector<std::uint8_t>& buf);

  void write(const std::filesystem::path& path) const;
  static Container read(const std::filesystem::path& path);

 private:
  std::vector<ArrayField> fields_;
};

/// `key = value` lines, one per entry, keys sorted.
std::string format_key_values(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> parse_key_values(const std::string& text);

}  // namespace compvid
