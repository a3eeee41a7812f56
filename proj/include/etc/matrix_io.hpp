// Embedding matrices and their on-disk format.
//
// ETCM v1 layout (little endian):
//   bytes 0-3   magic "ETCM" (45 54 43 4D)
//   byte  4     version 0x01
//   bytes 5-8   d  (u32, rows)
//   bytes 9-12  N  (u32, columns)
//   byte  13    id length L (u8)
//   L bytes     UTF-8 concept id
//   d*N f32     payload, column-major
//
// Values are stored as f32; all in-memory computation is f64. Multi-tensor
// files (.etcmb) are a plain concatenation of such records.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "etc/errors.hpp"

namespace etc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr unsigned char kEtcmMagic[4] = {0x45, 0x54, 0x43, 0x4D};
inline constexpr unsigned char kEtcmVersion = 0x01;

// One concept's raw embedding set: d rows (embedding dim) by N columns
// (one column per template).
struct EmbeddingMatrix {
  std::string concept_id;
  MatrixXd data;

  int d() const { return int(data.rows()); }
  int n() const { return int(data.cols()); }

  void validate() const {
    if (data.rows() < 2 || data.cols() < 2)
      throw validation_error("embedding matrix '" + concept_id +
                             "' needs d >= 2 and N >= 2");
    if (!data.allFinite())
      throw validation_error("embedding matrix '" + concept_id +
                             "' contains non-finite entries");
  }
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

inline void put_f32_le(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32_le(out, bits);
}

inline float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = get_u32_le(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace detail

// Serializes one tensor record. Used both for single-matrix .etcm files and
// for the block sections of composite artifacts.
inline std::string encode_etcm(const std::string& id, const MatrixXd& m) {
  if (m.rows() < 1 || m.cols() < 1)
    throw validation_error("cannot encode empty tensor '" + id + "'");
  if (!m.allFinite())
    throw validation_error("tensor '" + id + "' contains non-finite entries");
  if (id.size() > 255)
    throw validation_error("tensor id exceeds 255 bytes: " + id);
  std::string out;
  out.reserve(14 + id.size() + std::size_t(m.size()) * 4);
  out.append(reinterpret_cast<const char*>(kEtcmMagic), 4);
  out.push_back(char(kEtcmVersion));
  detail::put_u32_le(out, std::uint32_t(m.rows()));
  detail::put_u32_le(out, std::uint32_t(m.cols()));
  out.push_back(char(id.size()));
  out.append(id);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      detail::put_f32_le(out, float(m(i, j)));
  return out;
}

// Parses one record starting at `offset`; advances `offset` past it.
inline std::pair<std::string, MatrixXd> decode_etcm(const std::string& bytes,
                                                    std::size_t& offset,
                                                    const std::string& where) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (offset + 14 > size)
    throw corruption_error("truncated header in " + where);
  if (std::memcmp(p + offset, kEtcmMagic, 4) != 0)
    throw format_error("bad magic in " + where + " (expected 45 54 43 4D)");
  if (p[offset + 4] != kEtcmVersion)
    throw format_error("unsupported version in " + where);
  const std::uint32_t rows = detail::get_u32_le(p + offset + 5);
  const std::uint32_t cols = detail::get_u32_le(p + offset + 9);
  const std::size_t idlen = p[offset + 13];
  if (rows == 0 || cols == 0)
    throw corruption_error("zero dimension declared in " + where);
  const std::size_t payload = std::size_t(rows) * cols * 4;
  const std::size_t need = 14 + idlen + payload;
  if (offset + need > size)
    throw corruption_error("payload shorter than declared dims in " + where);
  std::string id(bytes.data() + offset + 14, idlen);
  MatrixXd m(rows, cols);
  const unsigned char* v = p + offset + 14 + idlen;
  for (std::uint32_t j = 0; j < cols; ++j)
    for (std::uint32_t i = 0; i < rows; ++i) {
      const float f = detail::get_f32_le(v);
      v += 4;
      m(i, j) = double(f);
    }
  if (!m.allFinite())
    throw validation_error("non-finite value in payload of " + where);
  offset += need;
  return {std::move(id), std::move(m)};
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path,
                             const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw persistence_error("cannot open for writing: " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw persistence_error("write failed: " + path);
}

// Saves one embedding matrix to its own .etcm file.
inline void save_matrix(const EmbeddingMatrix& m, const std::string& path) {
  m.validate();
  write_file_bytes(path, encode_etcm(m.concept_id, m.data));
}

// Loads a single-matrix .etcm file, rejecting any dims/payload mismatch.
inline EmbeddingMatrix load_matrix(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  std::size_t offset = 0;
  auto [id, m] = decode_etcm(bytes, offset, path);
  if (offset != bytes.size())
    throw corruption_error("trailing bytes after payload in " + path);
  EmbeddingMatrix out{std::move(id), std::move(m)};
  out.validate();
  return out;
}

// Multi-tensor container: named records concatenated in order.
struct TensorBlock {
  std::string id;
  MatrixXd value;
};

inline void save_blocks(const std::vector<TensorBlock>& blocks,
                        const std::string& path) {
  std::string out;
  for (const auto& b : blocks) out += encode_etcm(b.id, b.value);
  write_file_bytes(path, out);
}

inline std::vector<TensorBlock> load_blocks(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  std::vector<TensorBlock> blocks;
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    auto [id, m] = decode_etcm(bytes, offset, path);
    blocks.push_back({std::move(id), std::move(m)});
  }
  return blocks;
}

inline const MatrixXd& find_block(const std::vector<TensorBlock>& blocks,
                                  const std::string& id,
                                  const std::string& where) {
  for (const auto& b : blocks)
    if (b.id == id) return b.value;
  throw corruption_error("missing tensor block '" + id + "' in " + where);
}

}  // namespace etc
