#include <doctest.h>

#include <sstream>

#include "flowsentry/error.hpp"
#include "flowsentry/flowdata.hpp"
#include "support.hpp"

using namespace flowsentry;

namespace {

const char* kHeader =
    "#separator \\x09\n"
    "#set_separator\t,\n"
    "#empty_field\t(empty)\n"
    "#unset_field\t-\n"
    "#path\tconn\n"
    "#fields\tts\tuid\tid.orig_h\tid.orig_p\tid.resp_h\tid.resp_p\tproto\tservice\tduration\torig_bytes\t"
    "resp_bytes\tconn_state\tlocal_orig\tlocal_resp\tmissed_bytes\thistory\torig_pkts\torig_ip_bytes\t"
    "resp_pkts\tresp_ip_bytes\ttunnel_parents   label   detailed-label\n"
    "#types\ttime\tstring\taddr\tport\taddr\tport\tenum\tstring\tinterval\tcount\tcount\tstring\tbool\tbool\t"
    "count\tstring\tcount\tcount\tcount\tcount\tset[string]   string   string\n";

const char* kRowPrefix =
    "1545403816.962094\tCrDn63WjJEmrWGjqf\t192.168.1.195\t41040\t185.244.25.235\t80\ttcp\t-\t-\t-\t-\tS0\t-\t-\t0\t"
    "S\t1\t60\t0\t0\t";

std::vector<FlowRecord> parse(const std::string& text) {
    std::istringstream in(text);
    return parse_conn_log(in);
}

}  // namespace

TEST_CASE("metadata-only file parses to nothing") {
    CHECK(parse(kHeader).empty());
    CHECK(parse(std::string(kHeader) + "#close\t2019-01-01-00-00-00\n").empty());
}

TEST_CASE("space-separated label columns parse like tab-separated ones") {
    auto spaced = parse(std::string(kHeader) + kRowPrefix + "-   Malicious   PartOfAHorizontalPortScan\n");
    auto tabbed = parse(std::string(kHeader) + kRowPrefix + "-\tMalicious\tPartOfAHorizontalPortScan\n");
    REQUIRE(spaced.size() == 1);
    REQUIRE(tabbed.size() == 1);
    CHECK(spaced == tabbed);
    const auto& r = spaced.front();
    CHECK(r.proto == "tcp");
    CHECK_FALSE(r.duration.has_value());
    CHECK_FALSE(r.service.has_value());
    CHECK(r.binary_label == BinaryLabel::Malicious);
    REQUIRE(r.detailed_label.has_value());
    CHECK(*r.detailed_label == "PartOfAHorizontalPortScan");
    CHECK(r.orig_p == 41040);
    CHECK(r.resp_p == 80);
    CHECK(r.history == std::optional<std::string>("S"));
    CHECK(r.orig_ip_bytes == 60);
}

TEST_CASE("benign rows with '-' detailed label get none") {
    auto rows = parse(std::string(kHeader) + kRowPrefix + "-   Benign   -\n");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].binary_label == BinaryLabel::Benign);
    CHECK_FALSE(rows[0].detailed_label.has_value());
}

TEST_CASE("(empty) counts as missing") {
    std::string row = kRowPrefix;
    row.replace(row.find("\t-\t-\t-\t-\tS0"), 2, "\t(empty)");
    auto rows = parse(std::string(kHeader) + row + "(empty)   Benign   -\n");
    REQUIRE(rows.size() == 1);
    CHECK_FALSE(rows[0].service.has_value());
}

TEST_CASE("missing #fields header is a file-level error") {
    try {
        parse(std::string(kRowPrefix) + "-\tBenign\t-\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.file_level());
    }
}

TEST_CASE("wrong column count reports the line number") {
    std::string text = std::string(kHeader) + kRowPrefix + "-\tBenign\t-\n" + "1.0\tCabc\t1.2.3.4\t80\n";
    try {
        parse(text);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 9);
        CHECK_FALSE(e.file_level());
    }
}

TEST_CASE("malicious row without detailed label is rejected") {
    CHECK_THROWS_AS(parse(std::string(kHeader) + kRowPrefix + "-   Malicious   -\n"), ParseError);
}

TEST_CASE("out-of-range port is rejected") {
    std::string row = kRowPrefix;
    row.replace(row.find("41040"), 5, "70000");
    CHECK_THROWS_AS(parse(std::string(kHeader) + row + "-\tBenign\t-\n"), ParseError);
}

TEST_CASE("formatting and re-parsing round-trips records") {
    auto flows = testsupport::make_capture({{"Benign", 20}, {"POAHPS", 7}, {"C&C", 3}});
    flows[3].local_orig = true;
    flows[4].local_resp = false;
    flows[5].duration = 0.000123456789;
    std::ostringstream out;
    write_conn_log(out, flows);
    auto back = parse(out.str());
    REQUIRE(back.size() == flows.size());
    for (std::size_t i = 0; i < flows.size(); ++i) CHECK(back[i] == flows[i]);

    // The single-row formatter yields the same data lines.
    std::istringstream lines(out.str());
    std::string line;
    std::size_t data_rows = 0;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#') continue;
        CHECK(line == format_conn_row(flows[data_rows]));
        ++data_rows;
    }
    CHECK(data_rows == flows.size());
}

TEST_CASE("parsing is deterministic and order-preserving") {
    auto flows = testsupport::make_capture({{"Benign", 5}, {"DDoS", 5}});
    std::ostringstream out;
    write_conn_log(out, flows);
    auto a = parse(out.str());
    auto b = parse(out.str());
    CHECK(a == b);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].uid == flows[i].uid);
}

TEST_CASE("summaries count consolidated classes") {
    SUBCASE("single benign record") {
        auto s = summarize_capture(testsupport::make_capture({{"Benign", 1}}));
        CHECK(s.total_samples == 1);
        CHECK(s.per_class.at("Benign") == 1);
    }
    SUBCASE("42-1 class make-up") {
        auto flows = testsupport::make_capture({{"Benign", 4421}, {"FileDownload", 3}, {"C&C-FileDownload", 3}});
        auto s = summarize_capture(flows, "Trojan");
        CHECK(s.total_samples == 4427);
        CHECK(s.per_class.at("FileDownload") == 3);
        CHECK(s.per_class.at("C&C-FD") == 3);
        CHECK(s.malware_type == std::optional<std::string>("Trojan"));
        std::size_t sum = 0;
        for (const auto& [k, v] : s.per_class) sum += v;
        CHECK(sum == s.total_samples);
    }
    SUBCASE("empty input") {
        std::vector<FlowRecord> none;
        CHECK_THROWS_AS(summarize_capture(none), InvalidArgument);
    }
}
