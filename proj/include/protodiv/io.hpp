// =============================================================
// io.hpp -- little-endian binary IO, PGM images, CSV numbers
// =============================================================
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace protodiv {

// ---------- little-endian primitives ----------
// Wire format is explicitly little-endian 2's-complement / IEEE-754.

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }

  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

  void expect_end() const {
    if (!at_end()) throw ParseError(what_ + ": trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError(what_ + ": truncated");
  }
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

// ---------- whole-file helpers ----------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed for " + path);
}

// ---------- PGM (binary P5, maxval 255) ----------

inline std::string encode_pgm(const Tensor& img) {
  if (img.rank() != 2) throw DimensionError("encode_pgm: need rank-2 image");
  const std::size_t h = img.rows(), w = img.cols();
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double v = img(i, j);
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  return out;
}

inline void write_pgm(const std::string& path, const Tensor& img) {
  write_file(path, encode_pgm(img));
}

inline Tensor decode_pgm(const std::string& bytes, const std::string& what) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size() && (bytes[pos] == ' ' || bytes[pos] == '\n' || bytes[pos] == '\t' ||
                                  bytes[pos] == '\r' || bytes[pos] == '#')) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        ++pos;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != ' ' && bytes[pos] != '\n' && bytes[pos] != '\t' &&
           bytes[pos] != '\r')
      ++pos;
    if (start == pos) throw ParseError(what + ": truncated PGM header");
    return bytes.substr(start, pos - start);
  };
  if (token() != "P5") throw ParseError(what + ": not a binary PGM");
  std::size_t w, h, maxval;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw ParseError(what + ": bad PGM header");
  }
  if (maxval != 255) throw ParseError(what + ": only maxval 255 supported");
  ++pos;  // single whitespace after maxval
  if (pos + w * h > bytes.size()) throw ParseError(what + ": truncated PGM data");
  Tensor img({h, w});
  for (std::size_t i = 0; i < h * w; ++i)
    img[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / 255.0;
  return img;
}

inline Tensor read_pgm(const std::string& path) { return decode_pgm(read_file(path), path); }

// ---------- CSV numbers ----------

// Shortest round-trip decimal for a double (%.17g survives the trip; we
// try shorter forms first so the files stay human-readable).
inline std::string fmt_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace protodiv
