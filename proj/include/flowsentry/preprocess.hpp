#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flowsentry/flowdata.hpp"
#include "flowsentry/matrix.hpp"
#include "flowsentry/random.hpp"

namespace flowsentry {

enum class Scenario { Binary, Multiclass };

std::string_view to_string(Scenario scenario) noexcept;
Scenario parse_scenario(std::string_view text);

/// Benign flows become "Benign"; detailed labels pass through except the two
/// long names, which are shortened to "POAHPS" and "C&C-FD".
std::string consolidate_label(const FlowRecord& record);

/// Class name of a flow under a scenario: Benign/Malicious or consolidated.
std::string scenario_label(const FlowRecord& record, Scenario scenario);

/// Removes every flow whose class (under the scenario) has exactly one sample.
std::vector<FlowRecord> drop_single_sample_classes(std::vector<FlowRecord> flows, Scenario scenario);

// --- subset carving -------------------------------------------------------

struct SubsetTarget {
    std::string name;
    std::map<std::string, std::size_t> counts;
};

/// Class counts of the three balanced subsets carved from capture 1-1.
const std::vector<SubsetTarget>& capture_1_1_subset_targets();

/// Uniformly samples exactly `targets[c]` indices of every class c. Output is
/// in ascending index order. Throws DataError on a class shortfall.
std::vector<std::size_t> carve_subset_indices(std::span<const std::string> labels,
                                              const std::map<std::string, std::size_t>& targets,
                                              Rng& rng);

struct CarvedSubsets {
    std::vector<FlowRecord> large;
    std::vector<FlowRecord> medium;
    std::vector<FlowRecord> small;
};

CarvedSubsets carve_subsets(std::span<const FlowRecord> full, std::uint64_t seed);

// --- feature encoding -----------------------------------------------------

inline constexpr std::string_view kUnknownCategory = "unknown";
inline constexpr std::string_view kMissingCategory = "missing";

struct ScaleRange {
    double min = 0.0;
    double max = 0.0;
    bool operator==(const ScaleRange&) const = default;
};

/// Value list of one categorical feature. The last slot is always "unknown".
struct CategoricalVocabulary {
    std::string feature;
    std::vector<std::string> values;
    bool operator==(const CategoricalVocabulary&) const = default;
};

struct FeatureSchema {
    std::vector<std::string> numeric_features;
    std::vector<ScaleRange> scale_params;
    std::vector<CategoricalVocabulary> categorical_vocabularies;

    std::size_t feature_count() const;
    std::vector<std::string> feature_names() const;
    bool operator==(const FeatureSchema&) const = default;
};

struct EncodedDataset {
    Matrix features;
    std::vector<std::size_t> binary_targets;      // 1 = Malicious
    std::vector<std::size_t> multiclass_targets;  // index into class_names
    std::vector<std::string> class_names;
    FeatureSchema schema;

    std::size_t size() const noexcept { return features.rows(); }
    const std::vector<std::size_t>& targets(Scenario scenario) const;
    std::vector<std::string> scenario_class_names(Scenario scenario) const;
    EncodedDataset subset(std::span<const std::size_t> rows) const;
};

/// Fits vocabularies and min/max ranges on training flows only.
FeatureSchema build_feature_schema(std::span<const FlowRecord> train_flows);

/// "Benign" first, then the remaining consolidated class names sorted.
std::vector<std::string> class_names_of(std::span<const FlowRecord> flows);

/// Min-max scales numerics (clamped to [0,1], missing -> 0) and one-hot
/// encodes categoricals (unseen -> "unknown" slot). Identifier columns are
/// not encoded.
EncodedDataset vectorize(std::span<const FlowRecord> flows, const FeatureSchema& schema,
                         const std::vector<std::string>& class_names);

// --- splitting ------------------------------------------------------------

struct SplitSpec {
    double eval_fraction = 0.2;
    std::uint64_t seed = 1;
    bool stratified = true;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
};

/// Per-class eval count is round(fraction * n) clamped to [1, n - 1].
SplitIndices split_train_eval(std::span<const std::size_t> labels, const SplitSpec& spec);

/// Stratified folds: each class is shuffled and dealt round-robin, the deal
/// continuing from where the previous class stopped.
std::vector<std::vector<std::size_t>> make_folds(std::span<const std::size_t> labels, std::size_t k,
                                                 std::uint64_t seed);

/// Keeps every benign row and round(benign * r / (1 - r)) malicious rows.
/// Returned indices are ascending.
std::vector<std::size_t> subsample_contamination(std::span<const std::size_t> binary_labels,
                                                 double target_ratio, std::uint64_t seed);

struct PreparedData {
    EncodedDataset train;
    EncodedDataset eval;
};

/// Singleton removal, stratified split, schema fit on train, encoding.
PreparedData prepare_capture(std::vector<FlowRecord> flows, Scenario scenario, const SplitSpec& spec);

// --- persistence ----------------------------------------------------------

void write_dataset_csv(std::ostream& out, const EncodedDataset& data);
EncodedDataset read_dataset_csv(std::istream& in, const FeatureSchema& schema,
                                const std::vector<std::string>& class_names);

nlohmann::json schema_to_json(const FeatureSchema& schema, const std::vector<std::string>& class_names);
FeatureSchema schema_from_json(const nlohmann::json& j);
std::vector<std::string> class_names_from_json(const nlohmann::json& j);

}  // namespace flowsentry
