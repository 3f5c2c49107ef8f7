#include "mlcal/pcd_io.hpp"

#include "mlcal/rng.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace mlcal;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

PointCloud float_grid_cloud(std::size_t n) {
  // Coordinates chosen exactly representable in float32 so round trips are
  // bitwise.
  PointCloud cloud;
  SplitMix64 rng(70);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p(rng.uniform(-50, 50), rng.uniform(-50, 50),
                 rng.uniform(-5, 5));
    cloud.points.emplace_back(static_cast<float>(p.x()),
                              static_cast<float>(p.y()),
                              static_cast<float>(p.z()));
  }
  return cloud;
}

TEST(PcdIo, BinaryRoundTripIsExact) {
  const PointCloud cloud = float_grid_cloud(500);
  const std::string path = temp_path("mlcal_rt_binary.pcd");
  write_pcd(cloud, path, PcdEncoding::Binary);
  const PointCloud back = read_pcd(path);
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    EXPECT_EQ(back.points[i], cloud.points[i]);
}

TEST(PcdIo, AsciiRoundTripIsExact) {
  const PointCloud cloud = float_grid_cloud(500);
  const std::string path = temp_path("mlcal_rt_ascii.pcd");
  write_pcd(cloud, path, PcdEncoding::Ascii);
  const PointCloud back = read_pcd(path);
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    EXPECT_EQ(back.points[i], cloud.points[i]);
}

TEST(PcdIo, DoubleRoundTripWithinFloat32Precision) {
  PointCloud cloud;
  SplitMix64 rng(71);
  for (int i = 0; i < 200; ++i)
    cloud.points.emplace_back(rng.uniform(-100, 100), rng.uniform(-100, 100),
                              rng.uniform(-10, 10));
  const std::string path = temp_path("mlcal_rt_double.pcd");
  write_pcd(cloud, path);
  const PointCloud back = read_pcd(path);
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    // float32 has ~7 decimal digits; coordinates are below 100.
    EXPECT_LT((back.points[i] - cloud.points[i]).norm(), 1e-4);
}

TEST(PcdIo, AsciiWithExtraFieldsAndComments) {
  const std::string path = temp_path("mlcal_extra_fields.pcd");
  write_text(path,
             "# comment line\n"
             "VERSION 0.7\n"
             "FIELDS x y z intensity ring\n"
             "SIZE 4 4 4 4 2\n"
             "TYPE F F F F U\n"
             "COUNT 1 1 1 1 1\n"
             "WIDTH 3\n"
             "HEIGHT 1\n"
             "VIEWPOINT 0 0 0 1 0 0 0\n"
             "POINTS 3\n"
             "DATA ascii\n"
             "1 2 3 0.5 7\n"
             "4 5 6 0.1 8\n"
             "7 8 9 0.9 9\n");
  const PointCloud cloud = read_pcd(path);
  ASSERT_EQ(cloud.size(), 3u);
  EXPECT_EQ(cloud.points[0], Vec3(1, 2, 3));
  EXPECT_EQ(cloud.points[2], Vec3(7, 8, 9));
}

TEST(PcdIo, BinaryWithStrideSkipsExtraFields) {
  const std::string path = temp_path("mlcal_binary_stride.pcd");
  std::ofstream f(path, std::ios::binary);
  f << "VERSION 0.7\n"
       "FIELDS x y z intensity\n"
       "SIZE 4 4 4 4\n"
       "TYPE F F F F\n"
       "COUNT 1 1 1 1\n"
       "WIDTH 2\nHEIGHT 1\nPOINTS 2\nDATA binary\n";
  const float rows[2][4] = {{1, 2, 3, 0.5f}, {4, 5, 6, 0.25f}};
  f.write(reinterpret_cast<const char*>(rows), sizeof(rows));
  f.close();
  const PointCloud cloud = read_pcd(path);
  ASSERT_EQ(cloud.size(), 2u);
  EXPECT_EQ(cloud.points[0], Vec3(1, 2, 3));
  EXPECT_EQ(cloud.points[1], Vec3(4, 5, 6));
}

TEST(PcdIo, Float64CoordinatesSupported) {
  const std::string path = temp_path("mlcal_f8.pcd");
  std::ofstream f(path, std::ios::binary);
  f << "VERSION 0.7\n"
       "FIELDS x y z\n"
       "SIZE 8 8 8\n"
       "TYPE F F F\n"
       "COUNT 1 1 1\n"
       "WIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA binary\n";
  const double row[3] = {0.1, 0.2, 0.3};
  f.write(reinterpret_cast<const char*>(row), sizeof(row));
  f.close();
  const PointCloud cloud = read_pcd(path);
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_DOUBLE_EQ(cloud.points[0].x(), 0.1);
  EXPECT_DOUBLE_EQ(cloud.points[0].z(), 0.3);
}

TEST(PcdIo, NanPointsDroppedAndCounted) {
  const std::string path = temp_path("mlcal_nan.pcd");
  write_text(path,
             "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\n"
             "COUNT 1 1 1\nWIDTH 4\nHEIGHT 1\nPOINTS 4\nDATA ascii\n"
             "1 2 3\n"
             "nan 2 3\n"
             "1 nan 3\n"
             "4 5 6\n");
  PcdDiagnostics diag;
  const PointCloud cloud = read_pcd(path, &diag);
  EXPECT_EQ(cloud.size(), 2u);
  EXPECT_EQ(diag.dropped_nan, 2u);
}

TEST(PcdIo, CrlfLineEndingsAccepted) {
  const std::string path = temp_path("mlcal_crlf.pcd");
  write_text(path,
             "VERSION 0.7\r\nFIELDS x y z\r\nSIZE 4 4 4\r\nTYPE F F F\r\n"
             "COUNT 1 1 1\r\nWIDTH 1\r\nHEIGHT 1\r\nPOINTS 1\r\n"
             "DATA ascii\r\n"
             "1 2 3\r\n");
  const PointCloud cloud = read_pcd(path);
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_EQ(cloud.points[0], Vec3(1, 2, 3));
}

TEST(PcdIo, PointsInferredFromWidthHeight) {
  const std::string path = temp_path("mlcal_no_points.pcd");
  write_text(path,
             "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\n"
             "COUNT 1 1 1\nWIDTH 2\nHEIGHT 1\nDATA ascii\n"
             "1 2 3\n4 5 6\n");
  EXPECT_EQ(read_pcd(path).size(), 2u);
}

TEST(PcdIo, ErrorCases) {
  EXPECT_THROW(read_pcd(temp_path("mlcal_does_not_exist.pcd")), IoError);

  const std::string no_xyz = temp_path("mlcal_no_xyz.pcd");
  write_text(no_xyz,
             "FIELDS intensity\nSIZE 4\nTYPE F\nCOUNT 1\nWIDTH 1\n"
             "HEIGHT 1\nPOINTS 1\nDATA ascii\n0.5\n");
  EXPECT_THROW(read_pcd(no_xyz), ParseError);

  const std::string compressed = temp_path("mlcal_compressed.pcd");
  write_text(compressed,
             "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
             "WIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA binary_compressed\nxxxx\n");
  EXPECT_THROW(read_pcd(compressed), UnsupportedFormatError);

  const std::string int_xyz = temp_path("mlcal_int_xyz.pcd");
  write_text(int_xyz,
             "FIELDS x y z\nSIZE 4 4 4\nTYPE I I I\nCOUNT 1 1 1\n"
             "WIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA ascii\n1 2 3\n");
  EXPECT_THROW(read_pcd(int_xyz), UnsupportedFormatError);

  const std::string short_ascii = temp_path("mlcal_short_ascii.pcd");
  write_text(short_ascii,
             "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
             "WIDTH 2\nHEIGHT 1\nPOINTS 2\nDATA ascii\n1 2 3\n");
  EXPECT_THROW(read_pcd(short_ascii), ParseError);

  const std::string short_binary = temp_path("mlcal_short_binary.pcd");
  write_text(short_binary,
             "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
             "WIDTH 9\nHEIGHT 1\nPOINTS 9\nDATA binary\nAB");
  EXPECT_THROW(read_pcd(short_binary), ParseError);

  const std::string bad_token = temp_path("mlcal_bad_token.pcd");
  write_text(bad_token,
             "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
             "WIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA ascii\n1 abc 3\n");
  EXPECT_THROW(read_pcd(bad_token), ParseError);

  const std::string no_data = temp_path("mlcal_no_data.pcd");
  write_text(no_data, "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n");
  EXPECT_THROW(read_pcd(no_data), ParseError);
}

TEST(PcdIo, ParseErrorCarriesLineNumber) {
  const std::string path = temp_path("mlcal_line_number.pcd");
  write_text(path,
             "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
             "WIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA ascii\n1 bad 3\n");
  try {
    read_pcd(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 9);
  }
}

TEST(PcdIo, EmptyCloudRoundTrips) {
  const std::string path = temp_path("mlcal_empty.pcd");
  write_pcd(PointCloud{}, path);
  EXPECT_TRUE(read_pcd(path).empty());
}

}  // namespace
