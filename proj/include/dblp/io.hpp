// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dblp/image.hpp"
#include "dblp/tensor.hpp"

namespace dblp::io {

namespace fs = std::filesystem;

/// Raw little-endian float64 stream, no header.
void write_f64_le(const fs::path& path, std::span<const double> values);
std::vector<double> read_f64_le(const fs::path& path);

/// `<stem>.bin` (float64 LE) plus `<stem>.json` sidecar {"shape", "dtype", "endianness", ...extra}.
/// Returns the two paths written.
std::vector<fs::path> save_tensor(const fs::path& stem, const Tensor& t, const nlohmann::json& extra = {});
Tensor load_tensor(const fs::path& stem);

fs::path with_suffix(const fs::path& stem, const std::string& suffix);

/// One label per line under a "label" header.
void write_labels_csv(const fs::path& path, std::span<const int> labels);
std::vector<int> read_labels_csv(const fs::path& path);

nlohmann::json read_json(const fs::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const fs::path& path, const nlohmann::json& j);
void write_text(const fs::path& path, const std::string& text);

/// Binary PGM (P5, maxval 255). Pixels are written as round(255 v).
void write_pgm(const fs::path& path, const GrayImage& img);
GrayImage read_pgm(const fs::path& path);
/// Binary PPM (P6, maxval 255).
void write_ppm(const fs::path& path, const RgbImage& img);
RgbImage read_ppm(const fs::path& path);

/// 64-bit FNV-1a over the bytes of `text`, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace dblp::io
