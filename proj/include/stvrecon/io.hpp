#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "stvrecon/fields.hpp"

namespace stvrecon::io {

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal representation that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{})
    throw IoError("format_real: conversion failed");
  return std::string(buf, ptr);
}

inline double parse_real(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (!s.empty() && s.front() == '+')
    s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw IoError("parse_real: not a number: '" + std::string(s) + "'");
  return v;
}

// ---------------------------------------------------------------------------
// CSV: one grid row per line, comma-separated, '\n' terminated.

inline void write_csv_rows(std::ostream &os, const ScalarField &u) {
  for (std::size_t i = 0; i < u.height(); ++i) {
    for (std::size_t j = 0; j < u.width(); ++j) {
      if (j)
        os << ',';
      os << format_real(u(i, j));
    }
    os << '\n';
  }
}

inline ScalarField read_csv_rows(std::istream &is, const std::string &origin) {
  std::vector<double> values;
  std::size_t width = 0, height = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::size_t count = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      values.push_back(parse_real(rest.substr(0, comma)));
      ++count;
      if (comma == std::string_view::npos)
        break;
      rest.remove_prefix(comma + 1);
    }
    if (height == 0)
      width = count;
    else if (count != width)
      throw IoError(origin + ": ragged CSV row " + std::to_string(height + 1));
    ++height;
  }
  if (height == 0)
    throw IoError(origin + ": empty CSV");
  return ScalarField(height, width, std::move(values));
}

inline void write_csv(const std::string &path, const ScalarField &u) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw IoError("cannot open for writing: " + path);
  write_csv_rows(os, u);
  if (!os)
    throw IoError("write failed: " + path);
}

inline ScalarField read_csv(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError("cannot open for reading: " + path);
  return read_csv_rows(is, path);
}

// ---------------------------------------------------------------------------
// Sinogram CSV: header "angles=A bins=B", then one row per angle.

inline void write_sinogram_csv(const std::string &path, const ScalarField &s) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw IoError("cannot open for writing: " + path);
  os << "angles=" << s.height() << " bins=" << s.width() << '\n';
  write_csv_rows(os, s);
  if (!os)
    throw IoError("write failed: " + path);
}

inline ScalarField read_sinogram_csv(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError("cannot open for reading: " + path);
  std::string header;
  std::getline(is, header);
  if (!header.empty() && header.back() == '\r')
    header.pop_back();
  std::size_t angles = 0, bins = 0;
  if (std::sscanf(header.c_str(), "angles=%zu bins=%zu", &angles, &bins) != 2)
    throw IoError(path + ": missing 'angles=A bins=B' header");
  ScalarField s = read_csv_rows(is, path);
  if (s.height() != angles || s.width() != bins)
    throw IoError(path + ": header says " + std::to_string(angles) + "x" +
                  std::to_string(bins) + " but data is " + to_string(s.shape()));
  return s;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, 8-bit).

/// Writes u with [lo, hi] mapped linearly onto [0, 255] and clamped.
inline void write_pgm(const std::string &path, const ScalarField &u, double lo, double hi) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw IoError("cannot open for writing: " + path);
  os << "P5\n" << u.width() << ' ' << u.height() << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<unsigned char> bytes(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double t = std::clamp((u[k] - lo) / span, 0.0, 1.0);
    bytes[k] = static_cast<unsigned char>(std::lround(255.0 * t));
  }
  os.write(reinterpret_cast<const char *>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os)
    throw IoError("write failed: " + path);
}

/// Min/max scaled display output.
inline void write_pgm(const std::string &path, const ScalarField &u) {
  const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  write_pgm(path, u, *lo, *hi);
}

/// Reads a P5 image; values are returned as gray / maxval in [0, 1].
inline ScalarField read_pgm(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError("cannot open for reading: " + path);
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (is.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(is, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty())
          break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  if (next_token() != "P5")
    throw IoError(path + ": not a binary PGM (P5)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token());
    h = std::stoul(next_token());
    maxval = std::stoul(next_token());
  } catch (const std::exception &) {
    throw IoError(path + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
    throw IoError(path + ": only 8-bit PGM images are supported");
  std::vector<unsigned char> bytes(w * h);
  is.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(is.gcount()) != bytes.size())
    throw IoError(path + ": truncated PGM data");
  ScalarField u(h, w);
  for (std::size_t k = 0; k < u.size(); ++k)
    u[k] = static_cast<double>(bytes[k]) / static_cast<double>(maxval);
  return u;
}

inline bool has_extension(const std::string &path, std::string_view ext) {
  return path.size() >= ext.size() &&
         std::equal(ext.rbegin(), ext.rend(), path.rbegin(), [](char a, char b) {
           return std::tolower(static_cast<unsigned char>(a)) ==
                  std::tolower(static_cast<unsigned char>(b));
         });
}

/// Dispatches on extension: .pgm is read as an 8-bit image, anything else as CSV.
inline ScalarField read_image(const std::string &path) {
  return has_extension(path, ".pgm") ? read_pgm(path) : read_csv(path);
}

inline void write_image(const std::string &path, const ScalarField &u) {
  if (has_extension(path, ".pgm"))
    write_pgm(path, u);
  else
    write_csv(path, u);
}

} // namespace stvrecon::io
