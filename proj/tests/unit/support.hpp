#pragma once

// Synthetic flows and point sets shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "flowsentry/flowdata.hpp"
#include "flowsentry/matrix.hpp"
#include "flowsentry/random.hpp"

namespace testsupport {

using flowsentry::BinaryLabel;
using flowsentry::FlowRecord;
using flowsentry::Matrix;

inline FlowRecord make_flow(std::size_t i, const std::string& cls) {
    FlowRecord f;
    f.ts = 1'500'000'000.0 + static_cast<double>(i) * 0.5;
    f.uid = "C" + std::to_string(i);
    f.orig_h = "192.168.1." + std::to_string(i % 200);
    f.resp_h = "10.0.0." + std::to_string(i % 50);
    const bool benign = cls == "Benign";
    f.orig_p = static_cast<std::uint16_t>(1024 + i % 5000);
    f.resp_p = benign ? 443 : static_cast<std::uint16_t>(23 + (i % 3));
    f.proto = benign ? "tcp" : (i % 2 ? "tcp" : "udp");
    if (benign) f.service = "ssl";
    if (benign) f.duration = 1.0 + static_cast<double>(i % 7);
    if (benign) {
        f.orig_bytes = 500 + i % 100;
        f.resp_bytes = 4000 + i % 300;
    }
    f.conn_state = benign ? "SF" : "S0";
    f.missed_bytes = 0;
    f.history = benign ? std::optional<std::string>("ShADadFf") : std::optional<std::string>("S");
    f.orig_pkts = benign ? 10 + i % 5 : 1;
    f.orig_ip_bytes = benign ? 900 + i % 50 : 40;
    f.resp_pkts = benign ? 12 + i % 4 : 0;
    f.resp_ip_bytes = benign ? 4600 + i % 40 : 0;
    if (benign) {
        f.binary_label = BinaryLabel::Benign;
    } else {
        f.binary_label = BinaryLabel::Malicious;
        f.detailed_label = cls == "POAHPS" ? "PartOfAHorizontalPortScan" : cls;
    }
    return f;
}

/// counts: (class, how many). Rows are interleaved deterministically.
inline std::vector<FlowRecord> make_capture(const std::vector<std::pair<std::string, std::size_t>>& counts) {
    std::vector<FlowRecord> out;
    std::size_t i = 0;
    for (const auto& [cls, n] : counts) {
        for (std::size_t k = 0; k < n; ++k) out.push_back(make_flow(i++, cls));
    }
    return out;
}

/// Two Gaussian blobs along the diagonal, labels 0/1.
inline void separable_blobs(std::size_t n, std::size_t dims, std::uint64_t seed, Matrix& x, std::vector<std::size_t>& y,
                            double gap = 3.0) {
    auto rng = flowsentry::make_rng(seed);
    std::normal_distribution<double> noise(0.0, 0.5);
    x = Matrix(n, dims);
    y.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = i % 2;
        const double centre = y[i] ? gap / 2 : -gap / 2;
        for (std::size_t d = 0; d < dims; ++d) x(i, d) = centre + noise(rng);
    }
}

/// 95% tight blob at the origin, 5% distant blob.
inline void planted_outliers(std::size_t n, std::size_t dims, std::uint64_t seed, Matrix& x, std::vector<std::size_t>& y) {
    auto rng = flowsentry::make_rng(seed);
    std::normal_distribution<double> tight(0.0, 0.3);
    x = Matrix(n, dims);
    y.assign(n, 0);
    const std::size_t outliers = n / 20;
    for (std::size_t i = 0; i < n; ++i) {
        const bool far = i >= n - outliers;
        y[i] = far ? 1 : 0;
        for (std::size_t d = 0; d < dims; ++d) x(i, d) = (far ? 6.0 : 0.0) + tight(rng);
    }
}

/// Fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("flowsentry_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testsupport
