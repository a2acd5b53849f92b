#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "chatdqn/common.hpp"

namespace chatdqn {

// Little-endian flat binary records. Doubles are written as raw IEEE-754
// bits so a round trip is bit-exact.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 8);
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void mat(const Mat& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
  void vec(const Vec& v) { mat(v); }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  std::uint64_t u64() {
    unsigned char b[8];
    in_.read(reinterpret_cast<char*>(b), 8);
    if (!in_) throw std::runtime_error("unexpected end of binary data");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u64();
    if (n > (1ULL << 32)) throw std::runtime_error("corrupt string length in binary data");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw std::runtime_error("unexpected end of binary data");
    return s;
  }
  Mat mat() {
    const auto rows = u64();
    const auto cols = u64();
    if (rows > (1ULL << 28) || cols > (1ULL << 28)) {
      throw std::runtime_error("corrupt matrix shape in binary data");
    }
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }
  Vec vec() {
    Mat m = mat();
    if (m.cols() != 1 && m.size() != 0) throw std::runtime_error("expected a column vector");
    return Eigen::Map<Vec>(m.data(), m.rows());
  }
  void expect(const std::string& tag) {
    const auto got = str();
    if (got != tag) throw std::runtime_error("expected section '" + tag + "', found '" + got + "'");
  }

 private:
  std::istream& in_;
};

}  // namespace chatdqn
