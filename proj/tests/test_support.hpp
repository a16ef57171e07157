// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "forge/image.hpp"
#include "forge/schema.hpp"

namespace forge::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "forge") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Sorted relative path -> contents of every regular file under `root`.
inline std::vector<std::pair<std::string, std::string>> snapshot(const std::filesystem::path& root) {
    std::vector<std::pair<std::string, std::string>> files;
    if (!std::filesystem::exists(root)) return files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            files.emplace_back(std::filesystem::relative(e.path(), root).generic_string(), read_file(e.path()));
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline Image random_image(std::mt19937_64& rng, Eigen::Index h, Eigen::Index w) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(3, h, w);
    for (Eigen::Index c = 0; c < 3; ++c) {
        for (Eigen::Index y = 0; y < h; ++y) {
            for (Eigen::Index x = 0; x < w; ++x) img(c, y, x) = u(rng);
        }
    }
    return img;
}

/// Smooth frames of a coloured disc drifting across a gradient background.
inline std::vector<Image> synthetic_clip(std::uint64_t seed, int frames, int size = 32) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = u(rng), g = u(rng), b = u(rng);
    const double x0 = size * (0.2 + 0.2 * u(rng)), y0 = size * (0.3 + 0.4 * u(rng));
    const double vx = size * 0.5 / frames;
    std::vector<Image> out;
    for (int f = 0; f < frames; ++f) {
        Image img(3, size, size);
        const double cx = x0 + vx * f, cy = y0;
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const bool in = (x - cx) * (x - cx) + (y - cy) * (y - cy) < (size / 6.0) * (size / 6.0);
                const double bg = 0.2 + 0.5 * double(y) / size;
                img(0, y, x) = in ? r : bg;
                img(1, y, x) = in ? g : 0.5 * bg;
                img(2, y, x) = in ? b : 0.3;
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

/// Writes `frames` as root/<clip>/frame_NNN.png.
inline void write_clip(const std::filesystem::path& root, const std::string& clip, const std::vector<Image>& frames) {
    std::filesystem::create_directories(root / clip);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu.png", i);
        save_png(frames[i], root / clip / name);
    }
}

/// A valid t2i record with the given id and category.
inline TripletRecord make_record(const std::string& id, Category cat = Category::LongTerm,
                                 Branch branch = Branch::TextToImage,
                                 std::vector<std::string> keywords = {"cat"}) {
    TripletRecord r;
    r.id = id;
    r.input_image = "images/" + id + "_input.png";
    r.output_image = "images/" + id + "_output.png";
    r.instruction = "instruction for " + id;
    r.output_description = "output of " + id;
    r.category = cat;
    r.branch = branch;
    r.keywords = std::move(keywords);
    r.provenance = {{"input_description", "input of " + id}, {"seeds", {{"record", 1}}}};
    return r;
}

} // namespace forge::testing
