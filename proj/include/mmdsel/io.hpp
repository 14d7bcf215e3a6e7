#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "mmdsel/errors.hpp"
#include "mmdsel/simulate.hpp"
#include "mmdsel/types.hpp"

namespace mmdsel {

enum class FeatureFormat { Csv, Fmat };

// FMAT layout: magic "FMAT", version byte 0x01, uint32-LE n, uint32-LE d,
// then n*d little-endian IEEE-754 binary32 values in row-major order.
// Feature extractors emit 32-bit floats, so the on-disk format keeps them;
// everything in memory is widened to 64-bit on load.
namespace fmat {
inline constexpr std::array<char, 4> kMagic = {'F', 'M', 'A', 'T'};
inline constexpr unsigned char kVersion = 0x01;
inline constexpr std::size_t kHeaderBytes = 13;
}  // namespace fmat

namespace detail {

inline std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_u32_le(std::uint32_t v, std::ostream& out) {
  const std::array<char, 4> bytes = {
      static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
      static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes.data(), 4);
}

inline std::string shortest_double(double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace detail

inline FeatureMatrix load_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open '" + path.string() + "' for reading");
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  Index width = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": empty line");
    }
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = line.find(',', pos);
      const std::size_t end = comma == std::string::npos ? line.size() : comma;
      double value = 0.0;
      const char* first = line.data() + pos;
      const char* last = line.data() + end;
      const auto res = std::from_chars(first, last, value);
      if (res.ec != std::errc{} || res.ptr != last) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": field " + std::to_string(row.size() + 1) +
                         " is not a decimal number");
      }
      if (!std::isfinite(value)) {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": non-finite value in field " +
                        std::to_string(row.size() + 1));
      }
      row.push_back(value);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (width < 0) {
      width = static_cast<Index>(row.size());
    } else if (static_cast<Index>(row.size()) != width) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected " + std::to_string(width) +
                       " fields, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) {
    throw DataError(path.string() + ": need at least 2 samples, got " +
                    std::to_string(rows.size()));
  }
  FeatureMatrix m(static_cast<Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Index j = 0; j < width; ++j) {
      m(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

inline FeatureMatrix load_features_fmat(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open '" + path.string() + "' for reading");
  }
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  if (bytes.size() < fmat::kHeaderBytes) {
    throw ParseError(path.string() + ": truncated header at byte " +
                     std::to_string(bytes.size()) + " (need " +
                     std::to_string(fmat::kHeaderBytes) + ")");
  }
  if (std::memcmp(bytes.data(), fmat::kMagic.data(), 4) != 0) {
    throw ParseError(path.string() + ": bad magic at byte 0");
  }
  if (bytes[4] != fmat::kVersion) {
    throw ParseError(path.string() + ": unsupported version " +
                     std::to_string(bytes[4]) + " at byte 4");
  }
  const std::uint32_t n = detail::read_u32_le(bytes.data() + 5);
  const std::uint32_t d = detail::read_u32_le(bytes.data() + 9);
  const std::uint64_t expected =
      fmat::kHeaderBytes +
      4ull * static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(d);
  if (bytes.size() != expected) {
    throw ParseError(path.string() + ": payload size mismatch at byte " +
                     std::to_string(fmat::kHeaderBytes) + ": expected " +
                     std::to_string(expected) + " bytes total, got " +
                     std::to_string(bytes.size()));
  }
  if (n < 2 || d < 1) {
    throw DataError(path.string() + ": shape " + std::to_string(n) + "x" +
                    std::to_string(d) +
                    " violates the feature-matrix contract (n >= 2, d >= 1)");
  }
  FeatureMatrix m(static_cast<Index>(n), static_cast<Index>(d));
  const unsigned char* p = bytes.data() + fmat::kHeaderBytes;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      const float f = std::bit_cast<float>(detail::read_u32_le(p));
      if (!std::isfinite(f)) {
        const std::size_t offset =
            static_cast<std::size_t>(p - bytes.data());
        throw DataError(path.string() + ": non-finite value at byte " +
                        std::to_string(offset) + " (row " + std::to_string(i) +
                        ", col " + std::to_string(j) + ")");
      }
      m(static_cast<Index>(i), static_cast<Index>(j)) = f;
      p += 4;
    }
  }
  return m;
}

inline FeatureMatrix load_features(const std::filesystem::path& path,
                                   FeatureFormat format) {
  return format == FeatureFormat::Csv ? load_features_csv(path)
                                      : load_features_fmat(path);
}

inline void write_features(const std::filesystem::path& path,
                           const FeatureMatrix& m, FeatureFormat format) {
  std::ofstream out(path, format == FeatureFormat::Fmat
                              ? std::ios::binary
                              : std::ios::out);
  if (!out) {
    throw InputError("cannot open '" + path.string() + "' for writing");
  }
  if (format == FeatureFormat::Csv) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        if (j > 0) out << ',';
        out << detail::shortest_double(m(i, j));
      }
      out << '\n';
    }
  } else {
    out.write(fmat::kMagic.data(), 4);
    out.put(static_cast<char>(fmat::kVersion));
    detail::write_u32_le(static_cast<std::uint32_t>(m.rows()), out);
    detail::write_u32_le(static_cast<std::uint32_t>(m.cols()), out);
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        detail::write_u32_le(
            std::bit_cast<std::uint32_t>(static_cast<float>(m(i, j))), out);
      }
    }
  }
  if (!out) {
    throw InputError("write failed for '" + path.string() + "'");
  }
}

// ---------------------------------------------------------------------------
// Dataset manifest: a line-oriented key=value file.
//
//   format=csv            (or fmat; applies to every listed file)
//   real=path/to/real.csv
//   model=label:path/to/model.csv   (repeatable; labels must be unique)
//
// Blank lines and lines starting with '#' are skipped. Relative paths are
// resolved against the manifest's directory.

struct ManifestEntry {
  std::string label;
  std::filesystem::path path;
};

struct DatasetManifest {
  std::filesystem::path real_path;
  std::vector<ManifestEntry> model_entries;
  FeatureFormat format = FeatureFormat::Csv;
};

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open manifest '" + path.string() + "'");
  }
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](std::string_view rel) {
    std::filesystem::path p{std::string(rel)};
    return p.is_absolute() ? p : base / p;
  };

  DatasetManifest manifest;
  bool have_format = false;
  bool have_real = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto begin = line.find_first_not_of(" \t");
    if (begin == std::string::npos) continue;
    const auto end = line.find_last_not_of(" \t");
    std::string_view body{line.data() + begin, end - begin + 1};
    if (body.front() == '#') continue;

    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected key=value");
    }
    const std::string_view key = body.substr(0, eq);
    const std::string_view value = body.substr(eq + 1);
    if (value.empty()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": empty value for '" + std::string(key) + "'");
    }
    if (key == "format") {
      if (value == "csv") {
        manifest.format = FeatureFormat::Csv;
      } else if (value == "fmat") {
        manifest.format = FeatureFormat::Fmat;
      } else {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": unknown format '" + std::string(value) + "'");
      }
      have_format = true;
    } else if (key == "real") {
      if (have_real) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": duplicate real entry");
      }
      manifest.real_path = resolve(value);
      have_real = true;
    } else if (key == "model") {
      const auto colon = value.find(':');
      if (colon == std::string_view::npos || colon == 0 ||
          colon + 1 >= value.size()) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": model entries use label:path");
      }
      ManifestEntry entry;
      entry.label = std::string(value.substr(0, colon));
      entry.path = resolve(value.substr(colon + 1));
      for (const auto& existing : manifest.model_entries) {
        if (existing.label == entry.label) {
          throw InputError(path.string() + ":" + std::to_string(line_no) +
                           ": duplicate model label '" + entry.label + "'");
        }
      }
      manifest.model_entries.push_back(std::move(entry));
    } else {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_format) {
    throw InputError(path.string() + ": missing format entry");
  }
  if (!have_real) {
    throw InputError(path.string() + ": missing real entry");
  }
  if (manifest.model_entries.empty()) {
    throw InputError(path.string() + ": need at least one model entry");
  }
  return manifest;
}

struct LoadedDataset {
  FeatureMatrix real;
  std::vector<FeatureMatrix> models;
  std::vector<std::string> labels;
};

inline LoadedDataset load_dataset(const DatasetManifest& manifest) {
  LoadedDataset data;
  data.real = load_features(manifest.real_path, manifest.format);
  for (const auto& entry : manifest.model_entries) {
    FeatureMatrix m = load_features(entry.path, manifest.format);
    if (m.rows() != data.real.rows() || m.cols() != data.real.cols()) {
      throw InputError("'" + entry.path.string() + "' has shape " +
                       std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + " but '" +
                       manifest.real_path.string() + "' is " +
                       std::to_string(data.real.rows()) + "x" +
                       std::to_string(data.real.cols()));
    }
    data.models.push_back(std::move(m));
    data.labels.push_back(entry.label);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Report files: one JSON record per line so long studies stream. Trial
// records come first, a single summary record last. Infinite truncation
// points are encoded as the strings "-inf"/"inf" (JSON has no infinities).

using Record = nlohmann::ordered_json;

inline Record json_extended(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? Record("inf") : Record("-inf");
}

inline std::vector<int> p_value_histogram(std::span<const TrialReport> reports,
                                          int bins = 20) {
  std::vector<int> hist(static_cast<std::size_t>(bins), 0);
  for (const auto& report : reports) {
    const int bin = std::min(
        bins - 1, static_cast<int>(report.p_value * static_cast<double>(bins)));
    ++hist[static_cast<std::size_t>(std::max(0, bin))];
  }
  return hist;
}

inline Record trial_record(const TrialReport& report) {
  Record rec;
  rec["type"] = "trial";
  rec["trial"] = report.trial;
  rec["seed"] = report.seed;
  rec["labels"] = report.labels;
  rec["z"] = std::vector<double>(report.z.data(),
                                 report.z.data() + report.z.size());
  rec["sigma_logdet"] = report.sigma_logdet;
  rec["selected"] = report.selected_label;
  rec["v_minus"] = json_extended(report.v_minus);
  rec["v_plus"] = json_extended(report.v_plus);
  rec["p_value"] = report.p_value;
  return rec;
}

inline void write_records(const std::filesystem::path& path,
                          std::span<const Record> records) {
  std::ofstream out(path);
  if (!out) {
    throw InputError("cannot open '" + path.string() + "' for writing");
  }
  for (const auto& rec : records) {
    out << rec.dump() << '\n';
  }
  if (!out) {
    throw InputError("write failed for '" + path.string() + "'");
  }
}

inline void write_report(const std::filesystem::path& path,
                         std::span<const TrialReport> reports,
                         const Record& summary) {
  std::vector<Record> records;
  records.reserve(reports.size() + 1);
  for (const auto& report : reports) records.push_back(trial_record(report));
  if (!summary.is_null()) records.push_back(summary);
  write_records(path, records);
}

}  // namespace mmdsel
