#include "flowsentry/flowdata.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "flowsentry/error.hpp"
#include "flowsentry/preprocess.hpp"

namespace flowsentry {

namespace {

enum class Column {
    ts, uid, orig_h, orig_p, resp_h, resp_p, proto, service, duration, orig_bytes,
    resp_bytes, conn_state, local_orig, local_resp, missed_bytes, history, orig_pkts,
    orig_ip_bytes, resp_pkts, resp_ip_bytes, tunnel_parents, label, detailed_label,
    ignored,
};

const std::unordered_map<std::string_view, Column>& column_names() {
    static const std::unordered_map<std::string_view, Column> names = {
        {"ts", Column::ts},
        {"uid", Column::uid},
        {"id.orig_h", Column::orig_h},
        {"orig_h", Column::orig_h},
        {"id.orig_p", Column::orig_p},
        {"orig_p", Column::orig_p},
        {"id.resp_h", Column::resp_h},
        {"resp_h", Column::resp_h},
        {"id.resp_p", Column::resp_p},
        {"resp_p", Column::resp_p},
        {"proto", Column::proto},
        {"service", Column::service},
        {"duration", Column::duration},
        {"orig_bytes", Column::orig_bytes},
        {"resp_bytes", Column::resp_bytes},
        {"conn_state", Column::conn_state},
        {"local_orig", Column::local_orig},
        {"local_resp", Column::local_resp},
        {"missed_bytes", Column::missed_bytes},
        {"history", Column::history},
        {"orig_pkts", Column::orig_pkts},
        {"orig_ip_bytes", Column::orig_ip_bytes},
        {"resp_pkts", Column::resp_pkts},
        {"resp_ip_bytes", Column::resp_ip_bytes},
        {"tunnel_parents", Column::tunnel_parents},
        {"label", Column::label},
        {"detailed-label", Column::detailed_label},
        {"detailed_label", Column::detailed_label},
    };
    return names;
}

constexpr std::array required_columns = {
    Column::ts, Column::uid, Column::orig_h, Column::orig_p, Column::resp_h,
    Column::resp_p, Column::proto, Column::label,
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

void split_whitespace(std::string_view text, std::vector<std::string_view>& out) {
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) out.push_back(text.substr(start, i - start));
    }
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

bool is_missing(std::string_view token) { return token == "-" || token == "(empty)" || token.empty(); }

template <typename T>
T parse_integer(std::string_view token, std::size_t line, std::string_view field) {
    T value{};
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
        throw ParseError(line, "invalid " + std::string(field) + " '" + std::string(token) + "'");
    }
    return value;
}

double parse_double(std::string_view token, std::size_t line, std::string_view field) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
        throw ParseError(line, "invalid " + std::string(field) + " '" + std::string(token) + "'");
    }
    return value;
}

std::uint16_t parse_port(std::string_view token, std::size_t line, std::string_view field) {
    if (is_missing(token)) return 0;
    auto value = parse_integer<std::uint32_t>(token, line, field);
    if (value > 65535) throw ParseError(line, std::string(field) + " out of range");
    return static_cast<std::uint16_t>(value);
}

std::optional<std::uint64_t> parse_optional_count(std::string_view token, std::size_t line,
                                                  std::string_view field) {
    if (is_missing(token)) return std::nullopt;
    return parse_integer<std::uint64_t>(token, line, field);
}

std::optional<bool> parse_optional_bool(std::string_view token, std::size_t line,
                                        std::string_view field) {
    if (is_missing(token)) return std::nullopt;
    if (token == "T" || token == "true") return true;
    if (token == "F" || token == "false") return false;
    throw ParseError(line, "invalid " + std::string(field) + " '" + std::string(token) + "'");
}

std::optional<std::string> parse_optional_string(std::string_view token) {
    if (is_missing(token)) return std::nullopt;
    return std::string(token);
}

std::string parse_string(std::string_view token) {
    if (is_missing(token)) return {};
    return std::string(token);
}

BinaryLabel parse_label(std::string_view token, std::size_t line) {
    if (token == "Benign" || token == "benign") return BinaryLabel::Benign;
    if (token == "Malicious" || token == "malicious") return BinaryLabel::Malicious;
    throw ParseError(line, "unknown label '" + std::string(token) + "'");
}

class RowParser {
public:
    explicit RowParser(std::vector<Column> columns) : columns_(std::move(columns)) {
        for (auto required : required_columns) {
            bool found = false;
            for (auto c : columns_) found = found || c == required;
            if (!found) throw ParseError(0, "#fields header lacks a required column");
        }
    }

    FlowRecord parse(std::string_view line, std::size_t line_no) const {
        auto tokens = split_tabs(line);
        if (tokens.size() < columns_.size()) {
            // Label columns glued to the last tab field by runs of spaces.
            auto tail = tokens.back();
            tokens.pop_back();
            split_whitespace(tail, tokens);
        }
        if (tokens.size() != columns_.size()) {
            throw ParseError(line_no, "expected " + std::to_string(columns_.size()) + " columns, found " +
                                          std::to_string(tokens.size()));
        }

        FlowRecord r;
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            auto t = tokens[i];
            switch (columns_[i]) {
                case Column::ts: r.ts = is_missing(t) ? 0.0 : parse_double(t, line_no, "ts"); break;
                case Column::uid: r.uid = parse_string(t); break;
                case Column::orig_h: r.orig_h = parse_string(t); break;
                case Column::orig_p: r.orig_p = parse_port(t, line_no, "orig_p"); break;
                case Column::resp_h: r.resp_h = parse_string(t); break;
                case Column::resp_p: r.resp_p = parse_port(t, line_no, "resp_p"); break;
                case Column::proto: r.proto = parse_string(t); break;
                case Column::service: r.service = parse_optional_string(t); break;
                case Column::duration:
                    if (!is_missing(t)) {
                        r.duration = parse_double(t, line_no, "duration");
                        if (*r.duration < 0.0) throw ParseError(line_no, "negative duration");
                    }
                    break;
                case Column::orig_bytes: r.orig_bytes = parse_optional_count(t, line_no, "orig_bytes"); break;
                case Column::resp_bytes: r.resp_bytes = parse_optional_count(t, line_no, "resp_bytes"); break;
                case Column::conn_state: r.conn_state = parse_string(t); break;
                case Column::local_orig: r.local_orig = parse_optional_bool(t, line_no, "local_orig"); break;
                case Column::local_resp: r.local_resp = parse_optional_bool(t, line_no, "local_resp"); break;
                case Column::missed_bytes: r.missed_bytes = parse_optional_count(t, line_no, "missed_bytes").value_or(0); break;
                case Column::history: r.history = parse_optional_string(t); break;
                case Column::orig_pkts: r.orig_pkts = parse_optional_count(t, line_no, "orig_pkts").value_or(0); break;
                case Column::orig_ip_bytes: r.orig_ip_bytes = parse_optional_count(t, line_no, "orig_ip_bytes").value_or(0); break;
                case Column::resp_pkts: r.resp_pkts = parse_optional_count(t, line_no, "resp_pkts").value_or(0); break;
                case Column::resp_ip_bytes: r.resp_ip_bytes = parse_optional_count(t, line_no, "resp_ip_bytes").value_or(0); break;
                case Column::label: r.binary_label = parse_label(t, line_no); break;
                case Column::detailed_label: r.detailed_label = parse_optional_string(t); break;
                case Column::tunnel_parents:
                case Column::ignored: break;
            }
        }
        if (r.binary_label == BinaryLabel::Malicious && !r.detailed_label) {
            throw ParseError(line_no, "malicious flow without a detailed label");
        }
        return r;
    }

private:
    std::vector<Column> columns_;
};

std::vector<Column> parse_fields_header(std::string_view line) {
    std::vector<std::string_view> names;
    split_whitespace(line.substr(std::string_view("#fields").size()), names);
    std::vector<Column> columns;
    columns.reserve(names.size());
    const auto& known = column_names();
    for (auto name : names) {
        auto it = known.find(name);
        columns.push_back(it == known.end() ? Column::ignored : it->second);
    }
    return columns;
}

void append_double(std::string& out, double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    out.append(buf.data(), ptr);
}

template <typename T>
void append_optional(std::string& out, const std::optional<T>& v) {
    if (!v) {
        out += '-';
    } else if constexpr (std::is_same_v<T, std::string>) {
        out += *v;
    } else if constexpr (std::is_same_v<T, bool>) {
        out += *v ? 'T' : 'F';
    } else if constexpr (std::is_same_v<T, double>) {
        append_double(out, *v);
    } else {
        out += std::to_string(*v);
    }
}

void append_string(std::string& out, const std::string& s) { out += s.empty() ? std::string("-") : s; }

}  // namespace

std::string_view to_string(BinaryLabel label) noexcept {
    return label == BinaryLabel::Benign ? "Benign" : "Malicious";
}

const std::vector<std::string>& labeled_conn_fields() {
    static const std::vector<std::string> fields = {
        "ts", "uid", "id.orig_h", "id.orig_p", "id.resp_h", "id.resp_p", "proto", "service",
        "duration", "orig_bytes", "resp_bytes", "conn_state", "local_orig", "local_resp",
        "missed_bytes", "history", "orig_pkts", "orig_ip_bytes", "resp_pkts", "resp_ip_bytes",
        "tunnel_parents", "label", "detailed-label",
    };
    return fields;
}

std::vector<FlowRecord> parse_conn_log(std::istream& source) {
    std::vector<FlowRecord> records;
    std::optional<RowParser> parser;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (line.starts_with("#fields")) parser.emplace(parse_fields_header(line));
            continue;
        }
        if (!parser) throw ParseError(0, "data row before any #fields header");
        records.push_back(parser->parse(line, line_no));
    }
    return records;
}

std::vector<FlowRecord> parse_conn_log_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open capture '" + path + "'");
    return parse_conn_log(in);
}

std::string format_conn_row(const FlowRecord& r) {
    std::string out;
    out.reserve(256);
    append_double(out, r.ts);
    out += '\t';
    append_string(out, r.uid);
    out += '\t';
    append_string(out, r.orig_h);
    out += '\t';
    out += std::to_string(r.orig_p);
    out += '\t';
    append_string(out, r.resp_h);
    out += '\t';
    out += std::to_string(r.resp_p);
    out += '\t';
    append_string(out, r.proto);
    out += '\t';
    append_optional(out, r.service);
    out += '\t';
    append_optional(out, r.duration);
    out += '\t';
    append_optional(out, r.orig_bytes);
    out += '\t';
    append_optional(out, r.resp_bytes);
    out += '\t';
    append_string(out, r.conn_state);
    out += '\t';
    append_optional(out, r.local_orig);
    out += '\t';
    append_optional(out, r.local_resp);
    out += '\t';
    out += std::to_string(r.missed_bytes);
    out += '\t';
    append_optional(out, r.history);
    out += '\t';
    out += std::to_string(r.orig_pkts);
    out += '\t';
    out += std::to_string(r.orig_ip_bytes);
    out += '\t';
    out += std::to_string(r.resp_pkts);
    out += '\t';
    out += std::to_string(r.resp_ip_bytes);
    out += "\t-\t";
    out += to_string(r.binary_label);
    out += '\t';
    append_optional(out, r.detailed_label);
    return out;
}

void write_conn_log(std::ostream& out, std::span<const FlowRecord> records) {
    out << "#separator \\x09\n#set_separator\t,\n#empty_field\t(empty)\n#unset_field\t-\n#path\tconn\n";
    out << "#fields";
    for (const auto& f : labeled_conn_fields()) out << '\t' << f;
    out << '\n';
    for (const auto& r : records) out << format_conn_row(r) << '\n';
}

CaptureSummary summarize_capture(std::span<const FlowRecord> records,
                                 std::optional<std::string> malware_type) {
    if (records.empty()) throw InvalidArgument("cannot summarize an empty capture");
    CaptureSummary summary;
    summary.total_samples = records.size();
    summary.malware_type = std::move(malware_type);
    for (const auto& r : records) ++summary.per_class[consolidate_label(r)];
    return summary;
}

}  // namespace flowsentry
