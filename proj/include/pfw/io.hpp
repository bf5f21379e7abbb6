#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfw/core.hpp"

namespace pfw::io {

/// All binary artifacts share one container: an 8-byte magic, a 4-byte
/// little-endian header length, a JSON header, then a raw little-endian
/// payload of 64-bit floats.
struct FramedFile {
  nlohmann::json header;
  std::vector<double> payload;
};

inline void require_little_endian_host() {
  const std::uint32_t probe = 1;
  unsigned char first;
  std::memcpy(&first, &probe, 1);
  if (first != 1) throw IoError("binary files require a little-endian host");
}

inline void write_framed(const std::string& path, const std::array<char, 8>& magic,
                         const nlohmann::json& header, std::span<const double> payload) {
  require_little_endian_host();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  std::string head = header.dump();
  if (head.size() > 0x7fffffffu) throw IoError("header too large: " + path);
  std::uint32_t len = static_cast<std::uint32_t>(head.size());
  out.write(magic.data(), 8);
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path);
}

inline FramedFile read_framed(const std::string& path, const std::array<char, 8>& magic) {
  require_little_endian_host();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::array<char, 8> got{};
  in.read(got.data(), 8);
  if (!in || got != magic) throw IoError("bad file magic: " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  if (!in) throw IoError("truncated header length: " + path);
  std::string head(len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated header: " + path);
  FramedFile file;
  try {
    file.header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid header JSON in " + path + ": " + e.what());
  }
  in.seekg(0, std::ios::end);
  std::streamoff end = in.tellg();
  std::streamoff data_begin = 12 + static_cast<std::streamoff>(len);
  std::streamoff bytes = end - data_begin;
  if (bytes < 0 || bytes % static_cast<std::streamoff>(sizeof(double)) != 0)
    throw IoError("payload is not a whole number of doubles: " + path);
  file.payload.resize(static_cast<std::size_t>(bytes) / sizeof(double));
  in.seekg(data_begin);
  in.read(reinterpret_cast<char*>(file.payload.data()), bytes);
  if (!in) throw IoError("truncated payload: " + path);
  return file;
}

/// Formats one number so that parsing recovers the exact double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void append_double(std::string& line, double v) {
  if (!line.empty()) line.push_back('\t');
  line += format_double(v);
}

/// Tab-delimited numeric table with '#' comment lines.
inline void write_table(const std::string& path, const std::vector<std::string>& comments,
                        const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& c : comments) out << "# " << c << "\n";
  std::string line;
  for (const auto& row : rows) {
    line.clear();
    for (double v : row) append_double(line, v);
    out << line << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

/// Reads a table written by write_table (or any whitespace-delimited numeric
/// text); enforces a fixed column count and reports offending line numbers.
inline std::vector<std::vector<double>> read_table(const std::string& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    std::vector<double> row;
    const char* p = line.c_str();
    char* endp = nullptr;
    while (true) {
      while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
      if (*p == '\0') break;
      double v = std::strtod(p, &endp);
      if (endp == p)
        throw IoError(path + ":" + std::to_string(lineno) + ": not a number: '" + p + "'");
      row.push_back(v);
      p = endp;
    }
    if (row.size() != columns)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(columns) + " columns, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace pfw::io
