#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "flowsentry/error.hpp"
#include "flowsentry/preprocess.hpp"
#include "support.hpp"

using namespace flowsentry;

namespace {

std::vector<std::size_t> labels_with(const std::vector<std::pair<std::size_t, std::size_t>>& counts) {
    std::vector<std::size_t> out;
    for (auto [cls, n] : counts) out.insert(out.end(), n, cls);
    return out;
}

void check_partition(const std::vector<std::vector<std::size_t>>& parts, std::size_t n) {
    std::vector<std::size_t> all;
    for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    std::sort(all.begin(), all.end());
    REQUIRE(all.size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
}

}  // namespace

TEST_CASE("label consolidation") {
    auto f = testsupport::make_flow(0, "POAHPS");
    CHECK(consolidate_label(f) == "POAHPS");
    f.detailed_label = "C&C-FileDownload";
    CHECK(consolidate_label(f) == "C&C-FD");
    f.detailed_label = "C&C-Torii";
    CHECK(consolidate_label(f) == "C&C-Torii");
    CHECK(consolidate_label(testsupport::make_flow(1, "Benign")) == "Benign");
    f.detailed_label.reset();
    CHECK_THROWS_AS(consolidate_label(f), DataError);
}

TEST_CASE("single-sample classes are dropped") {
    SUBCASE("44-1 multi-class") {
        auto flows = testsupport::make_capture({{"Benign", 212}, {"C&C", 14}, {"C&C-FileDownload", 11}, {"DDoS", 1}});
        auto kept = drop_single_sample_classes(flows, Scenario::Multiclass);
        CHECK(kept.size() == 237);
        CHECK(class_names_of(kept) == std::vector<std::string>{"Benign", "C&C", "C&C-FD"});
        // Binary labels are unaffected.
        CHECK(drop_single_sample_classes(flows, Scenario::Binary).size() == 238);
    }
    SUBCASE("1-1-medium loses its C&C flow") {
        auto flows = testsupport::make_capture({{"Benign", 30}, {"POAHPS", 29}, {"C&C", 1}});
        auto kept = drop_single_sample_classes(flows, Scenario::Multiclass);
        CHECK(class_names_of(kept) == std::vector<std::string>{"Benign", "POAHPS"});
    }
    SUBCASE("no singletons leaves input unchanged") {
        auto flows = testsupport::make_capture({{"Benign", 3}, {"DDoS", 2}});
        CHECK(drop_single_sample_classes(flows, Scenario::Multiclass) == flows);
    }
}

TEST_CASE("subset carving hits exact class counts") {
    std::vector<std::string> labels;
    for (int i = 0; i < 60; ++i) labels.push_back("Benign");
    for (int i = 0; i < 50; ++i) labels.push_back("POAHPS");
    for (int i = 0; i < 5; ++i) labels.push_back("C&C");
    std::map<std::string, std::size_t> target = {{"Benign", 20}, {"POAHPS", 19}, {"C&C", 1}};
    auto rng1 = make_rng(7);
    auto rng2 = make_rng(7);
    auto a = carve_subset_indices(labels, target, rng1);
    auto b = carve_subset_indices(labels, target, rng2);
    CHECK(a == b);
    CHECK(std::is_sorted(a.begin(), a.end()));
    std::map<std::string, std::size_t> got;
    for (auto i : a) ++got[labels[i]];
    CHECK(got == target);
    std::map<std::string, std::size_t> too_many = {{"C&C", 6}};
    CHECK_THROWS_AS(carve_subset_indices(labels, too_many, rng1), DataError);

    const auto& targets = capture_1_1_subset_targets();
    REQUIRE(targets.size() == 3);
    CHECK(targets[0].counts.at("Benign") == 200000);
    CHECK(targets[0].counts.at("POAHPS") == 199996);
    CHECK(targets[0].counts.at("C&C") == 4);
    CHECK(targets[1].counts.at("Benign") == 100000);
    CHECK(targets[1].counts.at("POAHPS") == 99999);
    CHECK(targets[1].counts.at("C&C") == 1);
    CHECK(targets[2].counts.at("Benign") == 10000);
    CHECK(targets[2].counts.at("POAHPS") == 10000);
    CHECK(targets[2].counts.count("C&C") == 0);
}

TEST_CASE("feature schema fit on training flows") {
    auto flows = testsupport::make_capture({{"Benign", 2}});
    flows[0].proto = "tcp";
    flows[1].proto = "udp";
    flows[0].duration = 1.0;
    flows[1].duration = 3.0;
    auto schema = build_feature_schema(flows);
    const auto& proto = schema.categorical_vocabularies.at(0);
    CHECK(proto.feature == "proto");
    CHECK(proto.values == std::vector<std::string>{"tcp", "udp", "unknown"});
    auto it = std::find(schema.numeric_features.begin(), schema.numeric_features.end(), "duration");
    REQUIRE(it != schema.numeric_features.end());
    const auto& range = schema.scale_params[static_cast<std::size_t>(it - schema.numeric_features.begin())];
    CHECK(range.min == 1.0);
    CHECK(range.max == 3.0);
    for (const auto& v : schema.categorical_vocabularies) {
        std::set<std::string> unique(v.values.begin(), v.values.end());
        CHECK(unique.size() == v.values.size());
        CHECK(v.values.back() == "unknown");
    }
    for (const auto& r : schema.scale_params) CHECK(r.min <= r.max);
}

TEST_CASE("vectorize scales, one-hot encodes and handles unseen values") {
    auto train = testsupport::make_capture({{"Benign", 6}, {"POAHPS", 6}});
    auto schema = build_feature_schema(train);
    const auto names = schema.feature_names();
    auto col = [&](const std::string& n) {
        auto it = std::find(names.begin(), names.end(), n);
        REQUIRE(it != names.end());
        return static_cast<std::size_t>(it - names.begin());
    };
    auto classes = class_names_of(train);
    CHECK(classes == std::vector<std::string>{"Benign", "POAHPS"});
    auto enc = vectorize(train, schema, classes);
    CHECK(enc.features.cols() == schema.feature_count());
    for (std::size_t i = 0; i < enc.size(); ++i) {
        for (std::size_t j = 0; j < schema.numeric_features.size(); ++j) {
            CHECK(enc.features(i, j) >= 0.0);
            CHECK(enc.features(i, j) <= 1.0);
        }
    }
    // Malicious flows have missing duration: encoded 0.
    CHECK(enc.features(6, col("duration")) == 0.0);
    // Minimum value maps to 0, maximum to 1.
    CHECK(enc.features(0, col("duration")) == 0.0);
    CHECK(enc.features(6, col("missed_bytes")) == 0.0);  // constant feature

    auto eval = train;
    eval[0].proto = "icmp";
    eval[1].duration = 1e6;
    auto enc_eval = vectorize(eval, schema, classes);
    CHECK(enc_eval.features(0, col("proto=unknown")) == 1.0);
    CHECK(enc_eval.features(0, col("proto=tcp")) == 0.0);
    CHECK(enc_eval.features(1, col("duration")) == 1.0);

    // One-hot groups contain at most one 1 per row.
    std::size_t offset = schema.numeric_features.size();
    for (const auto& v : schema.categorical_vocabularies) {
        for (std::size_t i = 0; i < enc_eval.size(); ++i) {
            double s = 0;
            for (std::size_t k = 0; k < v.values.size(); ++k) s += enc_eval.features(i, offset + k);
            CHECK(s == 1.0);
        }
        offset += v.values.size();
    }
    CHECK(vectorize(train, schema, classes).features == enc.features);
    CHECK(enc.binary_targets[0] == 0);
    CHECK(enc.binary_targets[6] == 1);
    CHECK(enc.multiclass_targets[6] == 1);
}

TEST_CASE("stratified train/eval split") {
    auto labels = labels_with({{0, 10000}, {1, 10000}});
    SplitSpec spec;
    auto split = split_train_eval(labels, spec);
    CHECK(split.train.size() == 16000);
    CHECK(split.eval.size() == 4000);
    auto positives = [&](const std::vector<std::size_t>& idx) {
        return std::count_if(idx.begin(), idx.end(), [&](auto i) { return labels[i] == 1; });
    };
    CHECK(positives(split.train) == 8000);
    CHECK(positives(split.eval) == 2000);
    check_partition({split.train, split.eval}, labels.size());
    auto again = split_train_eval(labels, spec);
    CHECK(again.train == split.train);
    CHECK(again.eval == split.eval);

    auto tiny = labels_with({{0, 10}, {1, 1}});
    CHECK_THROWS_AS(split_train_eval(tiny, spec), DataError);
    // Two samples: one on each side.
    auto pair = labels_with({{0, 10}, {1, 2}});
    auto s2 = split_train_eval(pair, spec);
    auto pair_pos = [&](const std::vector<std::size_t>& idx) {
        return std::count_if(idx.begin(), idx.end(), [&](auto i) { return pair[i] == 1; });
    };
    CHECK(pair_pos(s2.eval) == 1);
    CHECK(pair_pos(s2.train) == 1);
}

TEST_CASE("stratified folds") {
    auto labels = labels_with({{0, 500}, {1, 500}});
    auto folds = make_folds(labels, 5, 3);
    REQUIRE(folds.size() == 5);
    for (const auto& f : folds) {
        CHECK(f.size() == 200);
        CHECK(std::count_if(f.begin(), f.end(), [&](auto i) { return labels[i] == 1; }) == 100);
    }
    check_partition(folds, labels.size());

    auto five = labels_with({{0, 5}});
    auto single = make_folds(five, 5, 1);
    for (const auto& f : single) CHECK(f.size() == 1);

    // Small classes are dealt round-robin.
    auto skew = labels_with({{0, 40}, {1, 3}});
    auto sf = make_folds(skew, 5, 9);
    check_partition(sf, skew.size());
    std::size_t with_minority = 0;
    for (const auto& f : sf) with_minority += std::any_of(f.begin(), f.end(), [&](auto i) { return skew[i] == 1; });
    CHECK(with_minority == 3);
}

TEST_CASE("contamination subsampling") {
    auto labels = labels_with({{0, 8000}, {1, 8000}});
    auto kept = subsample_contamination(labels, 0.05, 1);
    auto malicious = std::count_if(kept.begin(), kept.end(), [&](auto i) { return labels[i] == 1; });
    CHECK(malicious == 421);
    CHECK(kept.size() == 8421);
    CHECK(std::is_sorted(kept.begin(), kept.end()));

    auto low = labels_with({{0, 990}, {1, 10}});
    CHECK(subsample_contamination(low, 0.05, 1).size() == 1000);
    CHECK_THROWS_AS(subsample_contamination(labels, 0.6, 1), InvalidArgument);
    auto no_benign = labels_with({{1, 10}});
    CHECK_THROWS_AS(subsample_contamination(no_benign, 0.05, 1), DataError);
}

TEST_CASE("prepared data round-trips through CSV and schema JSON") {
    auto flows = testsupport::make_capture({{"Benign", 40}, {"POAHPS", 30}, {"C&C", 5}, {"DDoS", 1}});
    SplitSpec spec;
    auto prepared = prepare_capture(flows, Scenario::Multiclass, spec);
    CHECK(prepared.train.size() + prepared.eval.size() == 75);
    CHECK(prepared.train.class_names == std::vector<std::string>{"Benign", "C&C", "POAHPS"});

    std::ostringstream csv_out;
    write_dataset_csv(csv_out, prepared.eval);
    auto schema_json = schema_to_json(prepared.train.schema, prepared.train.class_names);
    auto schema = schema_from_json(schema_json);
    CHECK(schema == prepared.train.schema);
    std::istringstream csv_in(csv_out.str());
    auto back = read_dataset_csv(csv_in, schema, class_names_from_json(schema_json));
    CHECK(back.features == prepared.eval.features);
    CHECK(back.multiclass_targets == prepared.eval.multiclass_targets);
    CHECK(back.binary_targets == prepared.eval.binary_targets);
}
