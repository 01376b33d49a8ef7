#include "flowsentry/captures.hpp"

#include "flowsentry/error.hpp"

namespace flowsentry {

namespace {

bool is_subset_name(const std::string& name) {
    return name == "1-1-large" || name == "1-1-medium" || name == "1-1-small";
}

std::optional<std::filesystem::path> find_file(const std::filesystem::path& dir, const std::string& name) {
    const std::vector<std::filesystem::path> candidates = {
        dir / name / "conn.log.labeled",
        dir / (name + ".conn.log.labeled"),
        dir / ("CTU-IoT-Malware-Capture-" + name) / "bro" / "conn.log.labeled",
        dir / ("CTU-IoT-Malware-Capture-" + name) / "conn.log.labeled",
    };
    for (const auto& c : candidates) {
        if (std::filesystem::is_regular_file(c)) return c;
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::filesystem::path> locate_capture(const std::filesystem::path& dir, const std::string& dataset) {
    if (auto p = find_file(dir, dataset)) return p;
    if (dataset == "1-1-full") return find_file(dir, "1-1");
    return std::nullopt;
}

bool CaptureLibrary::available(const std::string& dataset) const {
    if (locate_capture(dir_, dataset)) return true;
    return is_subset_name(dataset) && locate_capture(dir_, "1-1-full");
}

std::vector<FlowRecord> CaptureLibrary::load(const std::string& dataset) {
    if (auto p = locate_capture(dir_, dataset)) return parse_conn_log_file(p->string());
    if (!is_subset_name(dataset)) throw DataError("no capture found for dataset " + dataset + " under " + dir_.string());
    if (!carved_) {
        auto full = locate_capture(dir_, "1-1-full");
        if (!full) throw DataError("carving " + dataset + " needs the 1-1 capture under " + dir_.string());
        auto flows = parse_conn_log_file(full->string());
        carved_ = carve_subsets(flows, seed_);
    }
    if (dataset == "1-1-large") return carved_->large;
    if (dataset == "1-1-medium") return carved_->medium;
    return carved_->small;
}

}  // namespace flowsentry
