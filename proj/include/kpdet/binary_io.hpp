#ifndef KPDET_BINARY_IO_HPP
#define KPDET_BINARY_IO_HPP

#include "kpdet/error.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

// Little helpers for the native-endian binary formats (model, features,
// decomposition cache). All reads throw on truncation.
namespace kpdet::binary {

template <typename T>
void write(std::ostream& out, const T& value) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read(std::istream& in, const char* what) {
  static_assert(std::is_trivially_copyable_v<T>);
  T value;
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw input_error(std::string("truncated file while reading ") + what);
  }
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what) {
  const auto size = read<std::uint32_t>(in, what);
  if (size > (1u << 24)) throw input_error(std::string("implausible string length while reading ") + what);
  std::string s(size, '\0');
  if (size > 0 && !in.read(s.data(), size)) throw input_error(std::string("truncated file while reading ") + what);
  return s;
}

template <typename Derived>
void write_matrix(std::ostream& out, const Eigen::DenseBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  write<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  // Column-major element order regardless of the source storage order.
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense = m;
  out.write(reinterpret_cast<const char*>(dense.data()), static_cast<std::streamsize>(sizeof(Scalar) * dense.size()));
}

template <typename Matrix>
Matrix read_matrix(std::istream& in, const char* what) {
  using Scalar = typename Matrix::Scalar;
  const auto rows = read<std::uint64_t>(in, what);
  const auto cols = read<std::uint64_t>(in, what);
  if (rows > (1ull << 32) || cols > (1ull << 32) || rows * cols > (1ull << 34)) {
    throw input_error(std::string("implausible matrix size while reading ") + what);
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense(rows, cols);
  const auto bytes = static_cast<std::streamsize>(sizeof(Scalar) * rows * cols);
  if (bytes > 0 && !in.read(reinterpret_cast<char*>(dense.data()), bytes)) {
    throw input_error(std::string("truncated file while reading ") + what);
  }
  return Matrix(dense);
}

inline void expect_magic(std::istream& in, const char (&magic)[9], const char* what) {
  char buffer[8];
  if (!in.read(buffer, 8)) throw input_error(std::string("truncated file while reading ") + what + " header");
  if (std::memcmp(buffer, magic, 8) != 0) throw input_error(std::string("not a ") + what + " file (bad magic)");
}

class Fnv1a {
 public:
  void update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= 0x100000001b3ull;
    }
  }
  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

}  // namespace kpdet::binary

#endif  // KPDET_BINARY_IO_HPP
