#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldwm {

/// Raised when a serialized stream ends early.
class TruncatedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Little-endian append-only encoder.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v)); }
  void f32(float v) {
    std::uint32_t b;
    std::memcpy(&b, &v, 4);
    le(b);
  }
  void f64(double v) {
    std::uint64_t b;
    std::memcpy(&b, &v, 8);
    le(b);
  }
  void str(const std::string& s) {
    u64(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void f32s(const std::vector<T>& v) {
    u64(v.size());
    for (T x : v) f32(static_cast<float>(x));
  }
  template <typename T>
  void f64s(const std::vector<T>& v) {
    u64(v.size());
    for (T x : v) f64(static_cast<double>(x));
  }
  void i32s(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) i32(x);
  }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : p_(data), n_(size) {}
  explicit ByteReader(const std::vector<std::uint8_t>& v) : ByteReader(v.data(), v.size()) {}
  ByteReader(std::vector<std::uint8_t>&&) = delete;  // would dangle

  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(le<std::uint32_t>()); }
  float f32() {
    const std::uint32_t b = le<std::uint32_t>();
    float v;
    std::memcpy(&v, &b, 4);
    return v;
  }
  double f64() {
    const std::uint64_t b = le<std::uint64_t>();
    double v;
    std::memcpy(&v, &b, 8);
    return v;
  }
  std::string str() {
    const std::size_t n = count(1);
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  const std::uint8_t* raw(std::size_t n) { return take(n); }
  template <typename T>
  std::vector<T> f32s() {
    std::vector<T> v(count(4));
    for (auto& x : v) x = static_cast<T>(f32());
    return v;
  }
  template <typename T>
  std::vector<T> f64s() {
    std::vector<T> v(count(8));
    for (auto& x : v) x = static_cast<T>(f64());
    return v;
  }
  std::vector<int> i32s() {
    std::vector<int> v(count(4));
    for (auto& x : v) x = i32();
    return v;
  }

  std::size_t remaining() const { return n_ - pos_; }
  bool done() const { return pos_ == n_; }

 private:
  // Element count prefix, validated against the bytes actually left.
  std::size_t count(std::size_t elem) {
    const std::uint64_t n = u64();
    if (n > remaining() / elem) throw TruncatedError("stream truncated (length prefix exceeds data)");
    return static_cast<std::size_t>(n);
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > n_ - pos_) throw TruncatedError("stream truncated");
    const auto* p = p_ + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U le() {
    const auto* b = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
  }

  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace ldwm
