#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flowsentry/matrix.hpp"
#include "flowsentry/preprocess.hpp"

namespace flowsentry {

enum class ModelKind { Svm, Xgboost, Lightgbm, Iforest, Lof, Drl };

/// Short key used on the command line and in runs.csv ("svm", "xgboost", ...).
std::string_view to_string(ModelKind kind) noexcept;
/// Table-style name ("SVM", "XGBoost", ...).
std::string_view display_name(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view text);
const std::vector<ModelKind>& all_model_kinds();

bool is_unsupervised(ModelKind kind) noexcept;
bool supports(ModelKind kind, Scenario scenario) noexcept;

/// A trainable classifier behind one interface. Unsupervised detectors ignore
/// the labels passed to fit and predict 1 for anomalies.
class Detector {
public:
    virtual ~Detector() = default;

    virtual ModelKind kind() const noexcept = 0;
    virtual void fit(const Matrix& x, std::span<const std::size_t> y, std::size_t n_classes) = 0;
    virtual std::vector<std::size_t> predict(const Matrix& x) const = 0;
    /// Fully resolved configuration.
    virtual nlohmann::json config_json() const = 0;
    /// Fitted parameters.
    virtual nlohmann::json params_json() const = 0;
    virtual void load_params(const nlohmann::json& params) = 0;
};

/// `config` holds only the knobs to override; the rest take preset values.
std::unique_ptr<Detector> make_detector(ModelKind kind, const nlohmann::json& config, std::uint64_t seed);

/// Model file layout: {model, scenario, class_names, config, params}.
nlohmann::json model_file_json(const Detector& detector, Scenario scenario,
                               const std::vector<std::string>& class_names);

struct LoadedModel {
    std::unique_ptr<Detector> detector;
    Scenario scenario = Scenario::Binary;
    std::vector<std::string> class_names;
};

LoadedModel load_model_file(const nlohmann::json& j);

}  // namespace flowsentry
