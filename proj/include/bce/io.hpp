#pragma once

// Artifact files: binary blobs (JSON header + little-endian float64 payload)
// for datasets and checkpoints, and CSV tables for metrics.
//
// Blob layout:
//   bytes 0..7    magic "BCEBLOB1"
//   bytes 8..15   header length L, uint64 little-endian
//   next L bytes  UTF-8 JSON header
//   remainder     payload, float64 little-endian

#include "bce/core.hpp"

#include "json.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bce {

using Json = nlohmann::json;

struct Blob {
  Json header;
  std::vector<double> payload;
};

void write_blob(const std::filesystem::path& path, const Json& header, std::span<const double> payload);
Blob read_blob(const std::filesystem::path& path);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells);
  void add_row(const std::vector<double>& values);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

Json matrix_to_json(const Mat& m);
Mat matrix_from_json(const Json& j);
Json vector_to_json(const Vec& v);
Vec vector_from_json(const Json& j);

}  // namespace bce
