#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowsentry {

enum class BinaryLabel { Benign, Malicious };

std::string_view to_string(BinaryLabel label) noexcept;

/// One row of a labeled Zeek conn.log.
struct FlowRecord {
    double ts = 0.0;
    std::string uid;
    std::string orig_h;
    std::uint16_t orig_p = 0;
    std::string resp_h;
    std::uint16_t resp_p = 0;
    std::string proto;
    std::optional<std::string> service;
    std::optional<double> duration;
    std::optional<std::uint64_t> orig_bytes;
    std::optional<std::uint64_t> resp_bytes;
    std::string conn_state;
    std::optional<bool> local_orig;
    std::optional<bool> local_resp;
    std::uint64_t missed_bytes = 0;
    std::optional<std::string> history;
    std::uint64_t orig_pkts = 0;
    std::uint64_t orig_ip_bytes = 0;
    std::uint64_t resp_pkts = 0;
    std::uint64_t resp_ip_bytes = 0;
    BinaryLabel binary_label = BinaryLabel::Benign;
    std::optional<std::string> detailed_label;

    bool operator==(const FlowRecord&) const = default;
};

/// Class composition of a capture, keyed by consolidated class name.
struct CaptureSummary {
    std::size_t total_samples = 0;
    std::map<std::string, std::size_t> per_class;
    std::optional<std::string> malware_type;
};

/// Column layout of a standard labeled IoT-23 conn.log.
const std::vector<std::string>& labeled_conn_fields();

/// Parses a Zeek conn.log. Lines starting with '#' are metadata; the '#fields'
/// line names the columns. '-' and '(empty)' mark missing values. Rows whose
/// trailing label columns are separated by spaces instead of tabs are accepted.
/// Throws ParseError (file-level when '#fields' is absent or lacks a required
/// column, record-level with the line number otherwise).
std::vector<FlowRecord> parse_conn_log(std::istream& source);
std::vector<FlowRecord> parse_conn_log_file(const std::string& path);

/// Tab-separated row in labeled_conn_fields() order.
std::string format_conn_row(const FlowRecord& record);

/// Header block plus one row per record; readable by parse_conn_log.
void write_conn_log(std::ostream& out, std::span<const FlowRecord> records);

CaptureSummary summarize_capture(std::span<const FlowRecord> records,
                                 std::optional<std::string> malware_type = std::nullopt);

}  // namespace flowsentry
