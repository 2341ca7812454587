#include "compvid/container.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "compvid/errors.hpp"

namespace compvid {

namespace {

constexpr char kMagic[8] = {'C', 'V', 'P', 'C', 'O', 'N', 'T', '1'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  template <typename T>
  T take(const std::string& what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  void bytes(std::uint8_t* dst, std::size_t n, const std::string& what) {
    need(n, what);
    if (n > 0) std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (buf_.size() - pos_ < n) {
      throw FormatError("container truncated while reading " + what);
    }
  }

  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::U8:
    case DType::Text:
      return 1;
    case DType::F32:
      return 4;
    case DType::F64:
    case DType::I64:
      return 8;
  }
  throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(t)));
}

std::uint64_t ArrayField::numel() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void Container::add(ArrayField field) {
  if (has(field.name)) throw ArgumentError("duplicate container field '" + field.name + "'");
  if (field.bytes.size() != field.numel() * dtype_size(field.dtype)) {
    throw ArgumentError("field '" + field.name + "' byte size does not match its shape");
  }
  fields_.push_back(std::move(field));
}

void Container::add_u8(const std::string& name, std::vector<std::uint64_t> shape, const std::uint8_t* data) {
  ArrayField f{name, DType::U8, std::move(shape), {}};
  f.bytes.assign(data, data + f.numel());
  add(std::move(f));
}

void Container::add_f32(const std::string& name, std::vector<std::uint64_t> shape, const float* data) {
  ArrayField f{name, DType::F32, std::move(shape), {}};
  const auto n = f.numel() * sizeof(float);
  f.bytes.resize(n);
  if (n > 0) std::memcpy(f.bytes.data(), data, n);
  add(std::move(f));
}

void Container::add_text(const std::string& name, const std::string& text) {
  ArrayField f{name, DType::Text, {text.size()}, {}};
  f.bytes.assign(text.begin(), text.end());
  add(std::move(f));
}

bool Container::has(const std::string& name) const {
  return std::any_of(fields_.begin(), fields_.end(), [&](const ArrayField& f) { return f.name == name; });
}

const ArrayField& Container::get(const std::string& name) const {
  for (const auto& f : fields_) {
    if (f.name == name) return f;
  }
  throw FormatError("container has no field '" + name + "'");
}

std::vector<std::uint8_t> Container::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(fields_.size()));
  for (const auto& f : fields_) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(f.name.size()));
    out.insert(out.end(), f.name.begin(), f.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(f.dtype));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(f.shape.size()));
    for (auto d : f.shape) put<std::uint64_t>(out, d);
    put<std::uint64_t>(out, f.bytes.size());
    out.insert(out.end(), f.bytes.begin(), f.bytes.end());
  }
  return out;
}

Container Container::deserialize(const std::vector<std::uint8_t>& buf) {
  Reader r(buf);
  char magic[8];
  r.bytes(reinterpret_cast<std::uint8_t*>(magic), 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("bad container magic");
  const auto count = r.take<std::uint32_t>("field count");
  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "field #" + std::to_string(i);
    ArrayField f;
    f.name.resize(r.take<std::uint16_t>(where + " name length"));
    r.bytes(reinterpret_cast<std::uint8_t*>(f.name.data()), f.name.size(), where + " name");
    const std::string label = "field '" + f.name + "'";
    const auto code = r.take<std::uint8_t>(label + " dtype");
    if (code > 4) throw FormatError(label + " has unknown dtype code " + std::to_string(code));
    f.dtype = static_cast<DType>(code);
    const auto ndim = r.take<std::uint8_t>(label + " ndim");
    for (int d = 0; d < ndim; ++d) f.shape.push_back(r.take<std::uint64_t>(label + " dims"));
    const auto nbytes = r.take<std::uint64_t>(label + " byte count");
    if (nbytes != f.numel() * dtype_size(f.dtype)) {
      throw FormatError(label + " byte count does not match its shape");
    }
    f.bytes.resize(nbytes);
    r.bytes(f.bytes.data(), nbytes, label + " payload");
    if (c.has(f.name)) throw FormatError("duplicate " + label);
    c.fields_.push_back(std::move(f));
  }
  if (!r.done()) throw FormatError("trailing bytes after last container field");
  return c;
}

void Container::write(const std::filesystem::path& path) const {
  const auto buf = serialize();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

Container Container::read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return deserialize(buf);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string format_key_values(const std::map<std::string, std::string>& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  return os.str();
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace compvid
