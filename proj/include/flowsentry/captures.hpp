#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowsentry/flowdata.hpp"
#include "flowsentry/preprocess.hpp"

namespace flowsentry {

/// Finds the labeled conn.log of a dataset under `dir`. Accepted layouts:
///   <dir>/<name>/conn.log.labeled
///   <dir>/<name>.conn.log.labeled
///   <dir>/CTU-IoT-Malware-Capture-<name>/bro/conn.log.labeled
///   <dir>/CTU-IoT-Malware-Capture-<name>/conn.log.labeled
/// "1-1-full" is also found under the capture name "1-1".
std::optional<std::filesystem::path> locate_capture(const std::filesystem::path& dir, const std::string& dataset);

/// Loads named datasets from a capture directory. The 1-1 subsets are read
/// from disk when present and otherwise carved (once) from the full capture.
class CaptureLibrary {
public:
    CaptureLibrary(std::filesystem::path dir, std::uint64_t seed) : dir_(std::move(dir)), seed_(seed) {}

    bool available(const std::string& dataset) const;
    std::vector<FlowRecord> load(const std::string& dataset);

private:
    std::filesystem::path dir_;
    std::uint64_t seed_;
    std::optional<CarvedSubsets> carved_;
};

}  // namespace flowsentry
