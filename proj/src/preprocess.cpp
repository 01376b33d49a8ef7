#include "flowsentry/preprocess.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <unordered_map>

#include "flowsentry/csv.hpp"
#include "flowsentry/error.hpp"

namespace flowsentry {

namespace {

constexpr std::size_t kNumericCount = 10;
constexpr std::array<std::string_view, kNumericCount> kNumericNames = {
    "orig_p", "resp_p", "duration", "orig_bytes", "resp_bytes",
    "missed_bytes", "orig_pkts", "orig_ip_bytes", "resp_pkts", "resp_ip_bytes",
};
constexpr std::array<std::string_view, 4> kCategoricalNames = {"proto", "service", "conn_state", "history"};

std::optional<double> numeric_value(const FlowRecord& r, std::size_t feature) {
    auto opt = [](const std::optional<std::uint64_t>& v) -> std::optional<double> {
        if (!v) return std::nullopt;
        return static_cast<double>(*v);
    };
    switch (feature) {
        case 0: return r.orig_p;
        case 1: return r.resp_p;
        case 2: return r.duration;
        case 3: return opt(r.orig_bytes);
        case 4: return opt(r.resp_bytes);
        case 5: return static_cast<double>(r.missed_bytes);
        case 6: return static_cast<double>(r.orig_pkts);
        case 7: return static_cast<double>(r.orig_ip_bytes);
        case 8: return static_cast<double>(r.resp_pkts);
        case 9: return static_cast<double>(r.resp_ip_bytes);
        default: return std::nullopt;
    }
}

std::string categorical_value(const FlowRecord& r, std::size_t feature) {
    auto or_missing = [](const std::string& s) { return s.empty() ? std::string(kMissingCategory) : s; };
    switch (feature) {
        case 0: return or_missing(r.proto);
        case 1: return r.service ? or_missing(*r.service) : std::string(kMissingCategory);
        case 2: return or_missing(r.conn_state);
        case 3: return r.history ? or_missing(*r.history) : std::string(kMissingCategory);
        default: return std::string(kMissingCategory);
    }
}

std::vector<std::size_t> scenario_indices(std::span<const FlowRecord> flows, Scenario scenario,
                                          const std::vector<std::string>& names) {
    std::unordered_map<std::string, std::size_t> lookup;
    for (std::size_t i = 0; i < names.size(); ++i) lookup.emplace(names[i], i);
    std::vector<std::size_t> out;
    out.reserve(flows.size());
    for (const auto& f : flows) out.push_back(lookup.at(scenario_label(f, scenario)));
    return out;
}

std::size_t clamped_eval_count(double fraction, std::size_t n) {
    auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    return std::clamp<std::size_t>(count, 1, n - 1);
}

double parse_cell(const std::string& cell, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw ParseError(line, "invalid numeric cell '" + cell + "'");
    }
    return v;
}

}  // namespace

std::string_view to_string(Scenario scenario) noexcept {
    return scenario == Scenario::Binary ? "binary" : "multiclass";
}

Scenario parse_scenario(std::string_view text) {
    if (text == "binary") return Scenario::Binary;
    if (text == "multiclass" || text == "multi-class" || text == "multi") return Scenario::Multiclass;
    throw InvalidArgument("unknown scenario '" + std::string(text) + "'");
}

std::string consolidate_label(const FlowRecord& record) {
    if (record.binary_label == BinaryLabel::Benign) return "Benign";
    if (!record.detailed_label) throw DataError("malicious flow '" + record.uid + "' has no detailed label");
    const auto& label = *record.detailed_label;
    if (label == "PartOfAHorizontalPortScan") return "POAHPS";
    if (label == "C&C-FileDownload") return "C&C-FD";
    return label;
}

std::string scenario_label(const FlowRecord& record, Scenario scenario) {
    if (scenario == Scenario::Binary) return std::string(to_string(record.binary_label));
    return consolidate_label(record);
}

std::vector<FlowRecord> drop_single_sample_classes(std::vector<FlowRecord> flows, Scenario scenario) {
    std::map<std::string, std::size_t> counts;
    std::vector<std::string> labels;
    labels.reserve(flows.size());
    for (const auto& f : flows) {
        labels.push_back(scenario_label(f, scenario));
        ++counts[labels.back()];
    }
    std::vector<FlowRecord> kept;
    kept.reserve(flows.size());
    for (std::size_t i = 0; i < flows.size(); ++i) {
        if (counts[labels[i]] != 1) kept.push_back(std::move(flows[i]));
    }
    return kept;
}

const std::vector<SubsetTarget>& capture_1_1_subset_targets() {
    static const std::vector<SubsetTarget> targets = {
        {"1-1-large", {{"Benign", 200'000}, {"POAHPS", 199'996}, {"C&C", 4}}},
        {"1-1-medium", {{"Benign", 100'000}, {"POAHPS", 99'999}, {"C&C", 1}}},
        {"1-1-small", {{"Benign", 10'000}, {"POAHPS", 10'000}}},
    };
    return targets;
}

std::vector<std::size_t> carve_subset_indices(std::span<const std::string> labels,
                                              const std::map<std::string, std::size_t>& targets,
                                              Rng& rng) {
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (targets.contains(labels[i])) by_class[labels[i]].push_back(i);
    }
    std::vector<std::size_t> chosen;
    for (const auto& [name, want] : targets) {
        auto& pool = by_class[name];
        if (pool.size() < want) {
            throw DataError("class '" + name + "' has " + std::to_string(pool.size()) + " flows, " +
                            std::to_string(want) + " required");
        }
        // Partial Fisher-Yates: the first `want` slots become a uniform sample.
        for (std::size_t i = 0; i < want; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

CarvedSubsets carve_subsets(std::span<const FlowRecord> full, std::uint64_t seed) {
    std::vector<std::string> labels;
    labels.reserve(full.size());
    for (const auto& f : full) labels.push_back(consolidate_label(f));

    const auto& targets = capture_1_1_subset_targets();
    auto carve = [&](std::size_t which) {
        auto rng = make_rng(seed, which);
        auto idx = carve_subset_indices(labels, targets[which].counts, rng);
        std::vector<FlowRecord> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(full[i]);
        return out;
    };
    return CarvedSubsets{carve(0), carve(1), carve(2)};
}

std::size_t FeatureSchema::feature_count() const {
    std::size_t n = numeric_features.size();
    for (const auto& v : categorical_vocabularies) n += v.values.size();
    return n;
}

std::vector<std::string> FeatureSchema::feature_names() const {
    std::vector<std::string> names(numeric_features.begin(), numeric_features.end());
    for (const auto& vocab : categorical_vocabularies) {
        for (const auto& v : vocab.values) names.push_back(vocab.feature + "=" + v);
    }
    return names;
}

const std::vector<std::size_t>& EncodedDataset::targets(Scenario scenario) const {
    return scenario == Scenario::Binary ? binary_targets : multiclass_targets;
}

std::vector<std::string> EncodedDataset::scenario_class_names(Scenario scenario) const {
    if (scenario == Scenario::Binary) return {"Benign", "Malicious"};
    return class_names;
}

EncodedDataset EncodedDataset::subset(std::span<const std::size_t> rows) const {
    EncodedDataset out;
    out.features = features.select_rows(rows);
    out.binary_targets = select(binary_targets, rows);
    out.multiclass_targets = select(multiclass_targets, rows);
    out.class_names = class_names;
    out.schema = schema;
    return out;
}

FeatureSchema build_feature_schema(std::span<const FlowRecord> train_flows) {
    if (train_flows.empty()) throw InvalidArgument("cannot fit a feature schema on no flows");
    FeatureSchema schema;
    for (std::size_t f = 0; f < kNumericCount; ++f) {
        schema.numeric_features.emplace_back(kNumericNames[f]);
        std::optional<ScaleRange> range;
        for (const auto& r : train_flows) {
            auto v = numeric_value(r, f);
            if (!v) continue;
            if (!range) {
                range = ScaleRange{*v, *v};
            } else {
                range->min = std::min(range->min, *v);
                range->max = std::max(range->max, *v);
            }
        }
        schema.scale_params.push_back(range.value_or(ScaleRange{}));
    }
    for (std::size_t c = 0; c < kCategoricalNames.size(); ++c) {
        std::set<std::string> seen;
        for (const auto& r : train_flows) seen.insert(categorical_value(r, c));
        seen.erase(std::string(kUnknownCategory));
        CategoricalVocabulary vocab{std::string(kCategoricalNames[c]), {seen.begin(), seen.end()}};
        vocab.values.emplace_back(kUnknownCategory);
        schema.categorical_vocabularies.push_back(std::move(vocab));
    }
    return schema;
}

std::vector<std::string> class_names_of(std::span<const FlowRecord> flows) {
    std::set<std::string> names;
    for (const auto& f : flows) names.insert(consolidate_label(f));
    std::vector<std::string> out;
    if (names.erase("Benign")) out.emplace_back("Benign");
    out.insert(out.end(), names.begin(), names.end());
    return out;
}

EncodedDataset vectorize(std::span<const FlowRecord> flows, const FeatureSchema& schema,
                         const std::vector<std::string>& class_names) {
    if (schema.numeric_features.size() != kNumericCount || schema.scale_params.size() != kNumericCount ||
        schema.categorical_vocabularies.size() != kCategoricalNames.size()) {
        throw InvalidArgument("feature schema does not match the flow feature layout");
    }
    std::vector<std::unordered_map<std::string, std::size_t>> lookups;
    std::vector<std::size_t> offsets;
    std::size_t offset = kNumericCount;
    for (const auto& vocab : schema.categorical_vocabularies) {
        std::unordered_map<std::string, std::size_t> lookup;
        for (std::size_t i = 0; i < vocab.values.size(); ++i) lookup.emplace(vocab.values[i], i);
        lookups.push_back(std::move(lookup));
        offsets.push_back(offset);
        offset += vocab.values.size();
    }
    std::unordered_map<std::string, std::size_t> class_lookup;
    for (std::size_t i = 0; i < class_names.size(); ++i) class_lookup.emplace(class_names[i], i);

    EncodedDataset out;
    out.features = Matrix(flows.size(), schema.feature_count());
    out.binary_targets.reserve(flows.size());
    out.multiclass_targets.reserve(flows.size());
    out.class_names = class_names;
    out.schema = schema;

    for (std::size_t i = 0; i < flows.size(); ++i) {
        const auto& r = flows[i];
        auto row = out.features.row(i);
        for (std::size_t f = 0; f < kNumericCount; ++f) {
            auto v = numeric_value(r, f);
            const auto& range = schema.scale_params[f];
            if (!v || range.max <= range.min) {
                row[f] = 0.0;
            } else {
                row[f] = std::clamp((*v - range.min) / (range.max - range.min), 0.0, 1.0);
            }
        }
        for (std::size_t c = 0; c < lookups.size(); ++c) {
            auto it = lookups[c].find(categorical_value(r, c));
            std::size_t slot = it == lookups[c].end() ? schema.categorical_vocabularies[c].values.size() - 1
                                                      : it->second;
            row[offsets[c] + slot] = 1.0;
        }
        out.binary_targets.push_back(r.binary_label == BinaryLabel::Malicious ? 1 : 0);
        auto cls = class_lookup.find(consolidate_label(r));
        if (cls == class_lookup.end()) {
            throw DataError("flow class '" + consolidate_label(r) + "' is not among the dataset classes");
        }
        out.multiclass_targets.push_back(cls->second);
    }
    return out;
}

SplitIndices split_train_eval(std::span<const std::size_t> labels, const SplitSpec& spec) {
    if (!(spec.eval_fraction > 0.0 && spec.eval_fraction < 1.0)) {
        throw InvalidArgument("eval_fraction must lie in (0, 1)");
    }
    auto rng = make_rng(spec.seed);
    SplitIndices out;
    auto deal = [&](std::vector<std::size_t>& pool, const std::string& what) {
        if (pool.size() < 2) throw DataError(what + " has fewer than 2 samples; cannot split");
        std::shuffle(pool.begin(), pool.end(), rng);
        auto n_eval = clamped_eval_count(spec.eval_fraction, pool.size());
        out.eval.insert(out.eval.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_eval));
        out.train.insert(out.train.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_eval), pool.end());
    };
    if (spec.stratified) {
        std::map<std::size_t, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
        for (auto& [cls, pool] : by_class) deal(pool, "class " + std::to_string(cls));
    } else {
        std::vector<std::size_t> pool(labels.size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
        deal(pool, "dataset");
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.eval.begin(), out.eval.end());
    return out;
}

std::vector<std::vector<std::size_t>> make_folds(std::span<const std::size_t> labels, std::size_t k,
                                                 std::uint64_t seed) {
    if (k < 2) throw InvalidArgument("need at least 2 folds");
    if (labels.size() < k) throw DataError("fewer rows than folds");
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    auto rng = make_rng(seed, 1);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t next = 0;
    for (auto& [cls, pool] : by_class) {
        std::shuffle(pool.begin(), pool.end(), rng);
        for (auto i : pool) {
            folds[next].push_back(i);
            next = (next + 1) % k;
        }
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

std::vector<std::size_t> subsample_contamination(std::span<const std::size_t> binary_labels,
                                                 double target_ratio, std::uint64_t seed) {
    if (!(target_ratio > 0.0 && target_ratio <= 0.5)) {
        throw InvalidArgument("contamination ratio must lie in (0, 0.5]");
    }
    std::vector<std::size_t> benign;
    std::vector<std::size_t> malicious;
    for (std::size_t i = 0; i < binary_labels.size(); ++i) {
        (binary_labels[i] == 0 ? benign : malicious).push_back(i);
    }
    if (benign.empty()) throw DataError("contamination subsampling needs benign rows");

    const double n = static_cast<double>(binary_labels.size());
    std::vector<std::size_t> kept;
    if (static_cast<double>(malicious.size()) / n <= target_ratio) {
        kept.resize(binary_labels.size());
        for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;
        return kept;
    }
    auto keep = static_cast<std::size_t>(
        std::llround(static_cast<double>(benign.size()) * target_ratio / (1.0 - target_ratio)));
    keep = std::min(keep, malicious.size());
    auto rng = make_rng(seed, 2);
    for (std::size_t i = 0; i < keep; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, malicious.size() - 1);
        std::swap(malicious[i], malicious[pick(rng)]);
    }
    kept = benign;
    kept.insert(kept.end(), malicious.begin(), malicious.begin() + static_cast<std::ptrdiff_t>(keep));
    std::sort(kept.begin(), kept.end());
    return kept;
}

PreparedData prepare_capture(std::vector<FlowRecord> flows, Scenario scenario, const SplitSpec& spec) {
    flows = drop_single_sample_classes(std::move(flows), scenario);
    if (flows.empty()) throw DataError("no flows left after removing single-sample classes");
    auto class_names = class_names_of(flows);
    std::vector<std::string> split_names =
        scenario == Scenario::Binary ? std::vector<std::string>{"Benign", "Malicious"} : class_names;
    auto labels = scenario_indices(flows, scenario, split_names);
    auto split = split_train_eval(labels, spec);

    std::vector<FlowRecord> train_flows = select(flows, split.train);
    std::vector<FlowRecord> eval_flows = select(flows, split.eval);
    auto schema = build_feature_schema(train_flows);
    return PreparedData{vectorize(train_flows, schema, class_names), vectorize(eval_flows, schema, class_names)};
}

void write_dataset_csv(std::ostream& out, const EncodedDataset& data) {
    auto names = data.schema.feature_names();
    for (const auto& n : names) out << csv::escape(n) << ',';
    out << "label_binary,label_multi\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.features.row(i)) out << csv::format_double(v) << ',';
        out << data.binary_targets[i] << ',' << data.multiclass_targets[i] << '\n';
    }
}

EncodedDataset read_dataset_csv(std::istream& in, const FeatureSchema& schema,
                                const std::vector<std::string>& class_names) {
    auto names = schema.feature_names();
    std::string line;
    if (!std::getline(in, line)) throw ParseError(0, "dataset CSV is empty");
    auto header = csv::split(line);
    names.emplace_back("label_binary");
    names.emplace_back("label_multi");
    if (header != names) throw ParseError(1, "dataset CSV header does not match the feature schema");

    EncodedDataset out;
    out.schema = schema;
    out.class_names = class_names;
    const std::size_t nf = schema.feature_count();
    std::vector<double> row(nf);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = csv::split(line);
        if (cells.size() != nf + 2) throw ParseError(line_no, "wrong number of cells");
        for (std::size_t j = 0; j < nf; ++j) row[j] = parse_cell(cells[j], line_no);
        out.features.append_row(row);
        auto binary = static_cast<std::size_t>(parse_cell(cells[nf], line_no));
        auto multi = static_cast<std::size_t>(parse_cell(cells[nf + 1], line_no));
        if (binary > 1 || multi >= class_names.size()) throw ParseError(line_no, "label out of range");
        out.binary_targets.push_back(binary);
        out.multiclass_targets.push_back(multi);
    }
    if (out.features.cols() == 0) out.features = Matrix(0, nf);
    return out;
}

nlohmann::json schema_to_json(const FeatureSchema& schema, const std::vector<std::string>& class_names) {
    nlohmann::json j;
    j["numeric_features"] = schema.numeric_features;
    auto& ranges = j["scale_params"] = nlohmann::json::array();
    for (const auto& r : schema.scale_params) ranges.push_back({r.min, r.max});
    auto& vocabs = j["categorical_vocabularies"] = nlohmann::json::array();
    for (const auto& v : schema.categorical_vocabularies) vocabs.push_back({{"feature", v.feature}, {"values", v.values}});
    j["class_names"] = class_names;
    return j;
}

FeatureSchema schema_from_json(const nlohmann::json& j) {
    try {
        FeatureSchema schema;
        schema.numeric_features = j.at("numeric_features").get<std::vector<std::string>>();
        for (const auto& r : j.at("scale_params")) schema.scale_params.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
        for (const auto& v : j.at("categorical_vocabularies")) {
            schema.categorical_vocabularies.push_back(
                {v.at("feature").get<std::string>(), v.at("values").get<std::vector<std::string>>()});
        }
        return schema;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed schema JSON: ") + e.what());
    }
}

std::vector<std::string> class_names_from_json(const nlohmann::json& j) {
    try {
        return j.at("class_names").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed schema JSON: ") + e.what());
    }
}

}  // namespace flowsentry
