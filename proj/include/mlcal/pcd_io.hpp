#pragma once

#include "mlcal/types.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mlcal {

static_assert(std::endian::native == std::endian::little,
              "PCD binary IO assumes a little-endian host");

struct PcdDiagnostics {
  std::size_t dropped_nan = 0;
};

enum class PcdEncoding { Ascii, Binary };

namespace detail {

struct PcdField {
  std::string name;
  int size = 4;
  char type = 'F';
  int count = 1;
};

struct PcdHeader {
  std::vector<PcdField> fields;
  std::size_t points = 0;
  std::string data;  // ascii | binary | binary_compressed
  int data_line = 0;
};

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

/// Reads PCD v0.7, ASCII or binary (little-endian). Requires FIELDS x y z as
/// floats (4 or 8 bytes); other fields are skipped. Points with NaN
/// coordinates are dropped and counted in the diagnostics.
inline PointCloud read_pcd(const std::string& path,
                           PcdDiagnostics* diagnostics = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);

  detail::PcdHeader header;
  std::size_t width = 0, height = 0;
  bool have_points = false;
  int line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tok = detail::split_ws(line);
    const std::string& key = tok[0];
    try {
      if (key == "FIELDS") {
        for (std::size_t i = 1; i < tok.size(); ++i)
          header.fields.push_back({tok[i], 4, 'F', 1});
      } else if (key == "SIZE") {
        if (tok.size() != header.fields.size() + 1)
          throw ParseError(line_no, "SIZE count mismatch");
        for (std::size_t i = 1; i < tok.size(); ++i)
          header.fields[i - 1].size = std::stoi(tok[i]);
      } else if (key == "TYPE") {
        if (tok.size() != header.fields.size() + 1)
          throw ParseError(line_no, "TYPE count mismatch");
        for (std::size_t i = 1; i < tok.size(); ++i)
          header.fields[i - 1].type = tok[i][0];
      } else if (key == "COUNT") {
        if (tok.size() != header.fields.size() + 1)
          throw ParseError(line_no, "COUNT count mismatch");
        for (std::size_t i = 1; i < tok.size(); ++i)
          header.fields[i - 1].count = std::stoi(tok[i]);
      } else if (key == "WIDTH") {
        width = std::stoul(tok.at(1));
      } else if (key == "HEIGHT") {
        height = std::stoul(tok.at(1));
      } else if (key == "POINTS") {
        header.points = std::stoul(tok.at(1));
        have_points = true;
      } else if (key == "DATA") {
        header.data = tok.at(1);
        header.data_line = line_no;
        break;
      }
      // VERSION / VIEWPOINT and unknown keys are accepted and ignored.
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError(line_no, "malformed header line: " + line);
    }
  }
  if (header.data.empty()) throw ParseError(line_no, "missing DATA line");
  if (header.data == "binary_compressed")
    throw UnsupportedFormatError("binary_compressed PCD");
  if (header.data != "ascii" && header.data != "binary")
    throw ParseError(header.data_line, "unknown DATA encoding " + header.data);
  if (!have_points) header.points = width * std::max<std::size_t>(height, 1);

  int xi = -1, yi = -1, zi = -1;
  for (std::size_t i = 0; i < header.fields.size(); ++i) {
    if (header.fields[i].name == "x") xi = static_cast<int>(i);
    if (header.fields[i].name == "y") yi = static_cast<int>(i);
    if (header.fields[i].name == "z") zi = static_cast<int>(i);
  }
  if (xi < 0 || yi < 0 || zi < 0)
    throw ParseError(header.data_line, "PCD lacks x y z fields");
  for (int idx : {xi, yi, zi}) {
    const auto& f = header.fields[idx];
    if (f.type != 'F' || (f.size != 4 && f.size != 8) || f.count != 1)
      throw UnsupportedFormatError("coordinate field must be F4 or F8");
  }

  PointCloud cloud;
  cloud.points.reserve(header.points);
  PcdDiagnostics diag;

  auto push_point = [&](double x, double y, double z) {
    if (std::isnan(x) || std::isnan(y) || std::isnan(z)) {
      ++diag.dropped_nan;
      return;
    }
    cloud.points.emplace_back(x, y, z);
  };

  if (header.data == "ascii") {
    std::size_t tokens_per_point = 0;
    std::vector<std::size_t> offsets(header.fields.size());
    for (std::size_t i = 0; i < header.fields.size(); ++i) {
      offsets[i] = tokens_per_point;
      tokens_per_point += header.fields[i].count;
    }
    for (std::size_t p = 0; p < header.points; ++p) {
      if (!std::getline(in, line))
        throw ParseError(line_no, "unexpected end of ASCII data");
      ++line_no;
      const auto tok = detail::split_ws(line);
      if (tok.size() < tokens_per_point)
        throw ParseError(line_no, "short ASCII point record");
      // Parse F4 fields as float so 9-digit decimals round-trip bitwise.
      auto parse_coord = [&](int field) {
        const std::string& s = tok[offsets[field]];
        return header.fields[field].size == 4
                   ? static_cast<double>(std::stof(s))
                   : std::stod(s);
      };
      try {
        push_point(parse_coord(xi), parse_coord(yi), parse_coord(zi));
      } catch (const std::exception&) {
        throw ParseError(line_no, "non-numeric coordinate");
      }
    }
  } else {
    std::size_t stride = 0;
    std::vector<std::size_t> offsets(header.fields.size());
    for (std::size_t i = 0; i < header.fields.size(); ++i) {
      offsets[i] = stride;
      stride += static_cast<std::size_t>(header.fields[i].size) *
                header.fields[i].count;
    }
    std::vector<char> buffer(stride * header.points);
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (static_cast<std::size_t>(in.gcount()) != buffer.size())
      throw ParseError(header.data_line, "binary payload shorter than POINTS");
    auto read_coord = [&](const char* rec, int field) {
      const auto& f = header.fields[field];
      if (f.size == 4) {
        float v;
        std::memcpy(&v, rec + offsets[field], 4);
        return static_cast<double>(v);
      }
      double v;
      std::memcpy(&v, rec + offsets[field], 8);
      return v;
    };
    for (std::size_t p = 0; p < header.points; ++p) {
      const char* rec = buffer.data() + p * stride;
      push_point(read_coord(rec, xi), read_coord(rec, yi),
                 read_coord(rec, zi));
    }
  }

  if (diagnostics) *diagnostics = diag;
  return cloud;
}

/// Writes PCD v0.7 with FIELDS x y z as float32. read_pcd(write_pcd(c)) is
/// the identity on float32-representable coordinates; clouds that came from
/// read_pcd round-trip exactly.
inline void write_pcd(const PointCloud& cloud, const std::string& path,
                      PcdEncoding encoding = PcdEncoding::Binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);

  const std::size_t n = cloud.size();
  out << "# .PCD v0.7 - Point Cloud Data file format\n"
      << "VERSION 0.7\n"
      << "FIELDS x y z\n"
      << "SIZE 4 4 4\n"
      << "TYPE F F F\n"
      << "COUNT 1 1 1\n"
      << "WIDTH " << n << "\n"
      << "HEIGHT 1\n"
      << "VIEWPOINT 0 0 0 1 0 0 0\n"
      << "POINTS " << n << "\n"
      << "DATA " << (encoding == PcdEncoding::Ascii ? "ascii" : "binary")
      << "\n";

  if (encoding == PcdEncoding::Ascii) {
    char buf[80];
    for (const Vec3& p : cloud.points) {
      // %.9g round-trips float32 exactly.
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n",
                    static_cast<double>(static_cast<float>(p.x())),
                    static_cast<double>(static_cast<float>(p.y())),
                    static_cast<double>(static_cast<float>(p.z())));
      out << buf;
    }
  } else {
    std::vector<float> row(3);
    for (const Vec3& p : cloud.points) {
      row[0] = static_cast<float>(p.x());
      row[1] = static_cast<float>(p.y());
      row[2] = static_cast<float>(p.z());
      out.write(reinterpret_cast<const char*>(row.data()), 12);
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace mlcal
