// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "dblp/errors.hpp"

namespace dblp::io {

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StageError("cannot open " + path.string() + " for writing");
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    return in;
}

// Reads a PNM header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            if (!tok.empty()) break;
        } else {
            tok.push_back(static_cast<char>(c));
        }
        c = in.get();
    }
    return tok;
}

struct PnmHeader {
    int width = 0;
    int height = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::string& magic, const fs::path& path) {
    if (pnm_token(in) != magic) throw StageError(path.string() + ": expected " + magic + " image");
    PnmHeader h;
    h.width = std::stoi(pnm_token(in));
    h.height = std::stoi(pnm_token(in));
    const int maxval = std::stoi(pnm_token(in));
    if (maxval != 255 || h.width <= 0 || h.height <= 0) {
        throw StageError(path.string() + ": only 8-bit images are supported");
    }
    return h;
}

unsigned char to_byte(double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_f64_le(const fs::path& path, std::span<const double> values) {
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
    }
    auto out = open_out(path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw StageError("write failed: " + path.string());
}

std::vector<double> read_f64_le(const fs::path& path) {
    auto in = open_in(path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 8 != 0) throw StageError(path.string() + ": size is not a multiple of 8 bytes");
    std::vector<double> values(bytes.size() / 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

fs::path with_suffix(const fs::path& stem, const std::string& suffix) {
    return fs::path(stem.string() + suffix);
}

std::vector<fs::path> save_tensor(const fs::path& stem, const Tensor& t, const nlohmann::json& extra) {
    const fs::path bin = with_suffix(stem, ".bin");
    const fs::path meta = with_suffix(stem, ".json");
    write_f64_le(bin, t.data());
    nlohmann::json j = extra.is_object() ? extra : nlohmann::json::object();
    j["shape"] = t.shape();
    j["dtype"] = "float64";
    j["endianness"] = "little";
    j["data_file"] = bin.filename().string();
    write_json(meta, j);
    return {bin, meta};
}

Tensor load_tensor(const fs::path& stem) {
    const nlohmann::json meta = read_json(with_suffix(stem, ".json"));
    auto shape = meta.at("shape").get<std::vector<std::size_t>>();
    return Tensor(std::move(shape), read_f64_le(with_suffix(stem, ".bin")));
}

void write_labels_csv(const fs::path& path, std::span<const int> labels) {
    std::ostringstream s;
    s << "label\n";
    for (int l : labels) s << l << '\n';
    write_text(path, s.str());
}

std::vector<int> read_labels_csv(const fs::path& path) {
    auto in = open_in(path);
    std::string line;
    std::getline(in, line);
    if (line != "label") throw StageError(path.string() + ": missing 'label' header");
    std::vector<int> labels;
    while (std::getline(in, line)) {
        if (!line.empty()) labels.push_back(std::stoi(line));
    }
    return labels;
}

nlohmann::json read_json(const fs::path& path) {
    auto in = open_in(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const fs::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out) throw StageError("write failed: " + path.string());
}

void write_pgm(const fs::path& path, const GrayImage& img) {
    auto out = open_out(path);
    out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    std::vector<unsigned char> bytes(img.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.pixels()[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GrayImage read_pgm(const fs::path& path) {
    auto in = open_in(path);
    const PnmHeader h = read_pnm_header(in, "P5", path);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height));
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw StageError(path.string() + ": truncated");
    std::vector<double> px(bytes.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = bytes[i] / 255.0;
    return GrayImage(h.height, h.width, std::move(px));
}

void write_ppm(const fs::path& path, const RgbImage& img) {
    auto out = open_out(path);
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<unsigned char> bytes(img.rgb.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.rgb[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

RgbImage read_ppm(const fs::path& path) {
    auto in = open_in(path);
    const PnmHeader h = read_pnm_header(in, "P6", path);
    std::vector<unsigned char> bytes(3 * static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height));
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw StageError(path.string() + ": truncated");
    RgbImage img{h.height, h.width, std::vector<double>(bytes.size())};
    for (std::size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = bytes[i] / 255.0;
    return img;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace dblp::io
