#include "seedrecon/npy.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

namespace seedrecon {

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kPrefixLen = 10;  // magic + version + uint16 header length
constexpr std::size_t kAlign = 64;
constexpr std::size_t kGrowthAxisDigits = 21;

std::string shape_repr(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  if (shape.size() == 1) out += ',';
  out += ')';
  return out;
}

// Minimal reader for the Python dict literal numpy writes.
class HeaderParser {
 public:
  explicit HeaderParser(std::string_view text) : text_(text) {}

  struct Fields {
    std::optional<std::string> descr;
    std::optional<bool> fortran_order;
    std::optional<Shape> shape;
  };

  Fields parse() {
    Fields fields;
    skip_ws();
    expect('{', "header");
    skip_ws();
    while (!at('}')) {
      const std::string key = parse_string("header");
      skip_ws();
      expect(':', "header");
      skip_ws();
      if (key == "descr") {
        if (fields.descr) fail("descr", "duplicate key");
        fields.descr = parse_string("descr");
      } else if (key == "fortran_order") {
        if (fields.fortran_order) fail("fortran_order", "duplicate key");
        fields.fortran_order = parse_bool();
      } else if (key == "shape") {
        if (fields.shape) fail("shape", "duplicate key");
        fields.shape = parse_shape_tuple();
      } else {
        fail("header", "unexpected key '" + key + "'");
      }
      skip_ws();
      if (at(',')) {
        ++pos_;
        skip_ws();
      } else if (!at('}')) {
        fail("header", "expected ',' or '}'");
      }
    }
    ++pos_;
    skip_ws();
    if (pos_ != text_.size()) fail("header", "trailing characters after dict");
    return fields;
  }

 private:
  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw NpyFormatError(field, what + " at header offset " + std::to_string(pos_));
  }

  bool at(char c) const { return pos_ < text_.size() && text_[pos_] == c; }

  void expect(char c, const char* field) {
    if (!at(c)) fail(field, std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\n' || text_[pos_] == '\t')) ++pos_;
  }

  std::string parse_string(const char* field) {
    if (!at('\'') && !at('"')) fail(field, "expected a quoted string");
    const char quote = text_[pos_++];
    const auto close = text_.find(quote, pos_);
    if (close == std::string_view::npos) fail(field, "unterminated string");
    std::string out(text_.substr(pos_, close - pos_));
    pos_ = close + 1;
    return out;
  }

  bool parse_bool() {
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    fail("fortran_order", "expected True or False");
  }

  Shape parse_shape_tuple() {
    expect('(', "shape");
    Shape shape;
    skip_ws();
    while (!at(')')) {
      std::size_t dim = 0;
      const char* begin = text_.data() + pos_;
      const char* end = text_.data() + text_.size();
      auto [next, ec] = std::from_chars(begin, end, dim);
      if (ec != std::errc{} || next == begin) fail("shape", "expected a non-negative integer dimension");
      pos_ += static_cast<std::size_t>(next - begin);
      shape.push_back(dim);
      skip_ws();
      if (at(',')) {
        ++pos_;
        skip_ws();
      } else if (!at(')')) {
        fail("shape", "expected ',' or ')'");
      }
    }
    ++pos_;
    return shape;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_npy(const Tensor& tensor) {
  if (tensor.empty()) throw std::invalid_argument("write_npy: refusing to write an empty tensor");
  const Shape& shape = tensor.shape();

  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape_repr(shape) + ", }";
  const std::size_t first_dim_digits = std::to_string(shape.front()).size();
  header.append(kGrowthAxisDigits - std::min(kGrowthAxisDigits, first_dim_digits), ' ');
  const std::size_t hlen = header.size() + 1;
  const std::size_t padlen = kAlign - ((kPrefixLen + hlen) % kAlign);
  header.append(padlen, ' ');
  header.push_back('\n');
  if (header.size() > 0xffff) throw std::invalid_argument("write_npy: header too long for NPY 1.0");

  std::string preamble(kMagic, kMagicLen);
  const auto len = static_cast<std::uint16_t>(header.size());
  preamble += {'\x01', '\x00', static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  preamble += header;

  std::vector<char> out(preamble.begin(), preamble.end());

  const std::size_t payload_at = out.size();
  out.resize(payload_at + tensor.size() * sizeof(float));
  std::memcpy(out.data() + payload_at, tensor.data(), tensor.size() * sizeof(float));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = payload_at; i < out.size(); i += 4) {
      std::swap(out[i], out[i + 3]);
      std::swap(out[i + 1], out[i + 2]);
    }
  }
  return out;
}

Tensor decode_npy(std::string_view bytes) {
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0)
    throw NpyFormatError("magic", "missing \\x93NUMPY signature");
  if (bytes.size() < kPrefixLen) throw NpyFormatError("header_len", "file ends inside the preamble");
  const auto major = static_cast<unsigned char>(bytes[6]);
  const auto minor = static_cast<unsigned char>(bytes[7]);
  if (major != 1 || minor != 0)
    throw NpyFormatError("version", "unsupported version " + std::to_string(major) + "." + std::to_string(minor));
  const std::size_t hlen =
      static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (kPrefixLen + hlen > bytes.size()) throw NpyFormatError("header_len", "header runs past end of file");

  const auto fields = HeaderParser(bytes.substr(kPrefixLen, hlen)).parse();
  if (!fields.descr) throw NpyFormatError("descr", "missing key");
  if (!fields.fortran_order) throw NpyFormatError("fortran_order", "missing key");
  if (!fields.shape) throw NpyFormatError("shape", "missing key");
  if (*fields.descr != "<f4")
    throw NpyFormatError("descr", "unsupported dtype '" + *fields.descr + "', expected '<f4'");
  if (*fields.fortran_order) throw NpyFormatError("fortran_order", "Fortran-ordered arrays are not supported");

  const Shape& shape = *fields.shape;
  if (shape.empty()) throw NpyFormatError("shape", "zero-dimensional arrays are not supported");
  std::size_t numel = 1;
  for (auto d : shape) {
    if (d == 0) throw NpyFormatError("shape", "zero-length dimension");
    if (numel > (std::size_t{1} << 40) / d) throw NpyFormatError("shape", "array too large");
    numel *= d;
  }

  const std::string_view payload = bytes.substr(kPrefixLen + hlen);
  if (payload.size() != numel * sizeof(float))
    throw NpyFormatError("payload", "expected " + std::to_string(numel * sizeof(float)) + " bytes, found " +
                                        std::to_string(payload.size()));

  std::vector<float> data(numel);
  std::memcpy(data.data(), payload.data(), payload.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : data) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
  }
  try {
    return Tensor(shape, std::move(data));
  } catch (const std::invalid_argument& e) {
    throw NpyFormatError("payload", e.what());
  }
}

Tensor read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path, "read failed");
  try {
    return decode_npy(bytes);
  } catch (const NpyFormatError& e) {
    throw NpyFormatError(e.field(), path.string() + ": " + e.what());
  }
}

void write_npy(const Tensor& tensor, const std::filesystem::path& path) {
  const auto bytes = encode_npy(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError(path, "write failed");
}

}  // namespace seedrecon
