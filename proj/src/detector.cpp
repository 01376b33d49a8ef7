#include "flowsentry/detector.hpp"

#include <optional>

#include "flowsentry/drl.hpp"
#include "flowsentry/error.hpp"
#include "flowsentry/gbdt.hpp"
#include "flowsentry/iforest.hpp"
#include "flowsentry/linsvm.hpp"
#include "flowsentry/lof.hpp"
#include "flowsentry/neuralnet.hpp"

namespace flowsentry {

namespace {

nlohmann::json merged(nlohmann::json base, const nlohmann::json& overrides) {
    if (!overrides.is_null() && !overrides.is_object()) throw InvalidArgument("model config must be a JSON object");
    if (overrides.is_object()) base.update(overrides);
    return base;
}

void require_fitted(bool fitted, ModelKind kind) {
    if (!fitted) throw InvalidArgument(std::string(to_string(kind)) + " model used before fitting");
}

class SvmDetector final : public Detector {
public:
    explicit SvmDetector(const nlohmann::json& config) {
        auto j = merged({{"c", 0.01}}, config);
        c_ = j.at("c").get<double>();
        if (!(c_ > 0.0)) throw InvalidArgument("SVM C must be positive");
    }
    ModelKind kind() const noexcept override { return ModelKind::Svm; }
    void fit(const Matrix& x, std::span<const std::size_t> y, std::size_t n_classes) override {
        if (n_classes == 2) {
            std::vector<int> signs(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) signs[i] = y[i] == 1 ? 1 : -1;
            model_ = train_linear_svm(x, signs, c_);
        } else {
            model_ = train_ova(x, y, n_classes, c_);
        }
    }
    std::vector<std::size_t> predict(const Matrix& x) const override {
        require_fitted(model_.has_value(), kind());
        return svm_predict(*model_, x);
    }
    nlohmann::json config_json() const override { return {{"c", c_}}; }
    nlohmann::json params_json() const override {
        require_fitted(model_.has_value(), kind());
        return to_json(*model_);
    }
    void load_params(const nlohmann::json& p) override { model_ = linear_svm_from_json(p); }

private:
    double c_;
    std::optional<LinearSvmModel> model_;
};

class GbdtDetector final : public Detector {
public:
    GbdtDetector(ModelKind kind, const nlohmann::json& config, std::uint64_t seed) : kind_(kind), seed_(seed) {
        auto preset = kind == ModelKind::Xgboost ? level_wise_preset() : leaf_wise_preset();
        config_ = gbdt_config_from_json(merged(to_json(preset), config));
    }
    ModelKind kind() const noexcept override { return kind_; }
    void fit(const Matrix& x, std::span<const std::size_t> y, std::size_t n_classes) override {
        model_ = gbdt_train(x, y, n_classes, config_, seed_);
    }
    std::vector<std::size_t> predict(const Matrix& x) const override {
        require_fitted(model_.has_value(), kind());
        return gbdt_predict(*model_, x).labels;
    }
    nlohmann::json config_json() const override { return to_json(config_); }
    nlohmann::json params_json() const override {
        require_fitted(model_.has_value(), kind());
        return to_json(*model_);
    }
    void load_params(const nlohmann::json& p) override { model_ = gbdt_from_json(p); }

private:
    ModelKind kind_;
    std::uint64_t seed_;
    GbdtConfig config_;
    std::optional<GbdtEnsemble> model_;
};

class IForestDetector final : public Detector {
public:
    IForestDetector(const nlohmann::json& config, std::uint64_t seed)
        : config_(iforest_config_from_json(merged(to_json(IForestConfig{}), config))), seed_(seed) {}
    ModelKind kind() const noexcept override { return ModelKind::Iforest; }
    void fit(const Matrix& x, std::span<const std::size_t>, std::size_t) override {
        model_ = iforest_fit(x, config_, seed_);
    }
    std::vector<std::size_t> predict(const Matrix& x) const override {
        require_fitted(model_.has_value(), kind());
        return iforest_predict(*model_, x);
    }
    nlohmann::json config_json() const override { return to_json(config_); }
    nlohmann::json params_json() const override {
        require_fitted(model_.has_value(), kind());
        return to_json(*model_);
    }
    void load_params(const nlohmann::json& p) override { model_ = iforest_from_json(p); }

private:
    IForestConfig config_;
    std::uint64_t seed_;
    std::optional<IForestModel> model_;
};

class LofDetector final : public Detector {
public:
    explicit LofDetector(const nlohmann::json& config)
        : config_(lof_config_from_json(merged(to_json(LofConfig{}), config))) {}
    ModelKind kind() const noexcept override { return ModelKind::Lof; }
    void fit(const Matrix& x, std::span<const std::size_t>, std::size_t) override {
        model_ = std::make_unique<LofModel>(lof_fit(x, config_));
    }
    std::vector<std::size_t> predict(const Matrix& x) const override {
        require_fitted(model_ != nullptr, kind());
        return lof_predict(*model_, x);
    }
    nlohmann::json config_json() const override { return to_json(config_); }
    nlohmann::json params_json() const override {
        require_fitted(model_ != nullptr, kind());
        return to_json(*model_);
    }
    void load_params(const nlohmann::json& p) override { model_ = std::make_unique<LofModel>(lof_from_json(p)); }

private:
    LofConfig config_;
    std::unique_ptr<LofModel> model_;
};

class DrlDetector final : public Detector {
public:
    DrlDetector(const nlohmann::json& config, std::uint64_t seed)
        : config_(agent_config_from_json(merged(to_json(AgentConfig{}), config))), seed_(seed) {}
    ModelKind kind() const noexcept override { return ModelKind::Drl; }
    void fit(const Matrix& x, std::span<const std::size_t> y, std::size_t n_classes) override {
        auto result = train_agent(x, y, n_classes, config_, seed_);
        converged_ = result.converged;
        episodes_ = result.episodes.size();
        net_ = std::move(result.network);
    }
    std::vector<std::size_t> predict(const Matrix& x) const override {
        require_fitted(net_.has_value(), kind());
        return mlp_predict(*net_, x);
    }
    nlohmann::json config_json() const override { return to_json(config_); }
    nlohmann::json params_json() const override {
        require_fitted(net_.has_value(), kind());
        auto j = to_json(*net_);
        j["converged"] = converged_;
        j["episodes"] = episodes_;
        return j;
    }
    void load_params(const nlohmann::json& p) override {
        net_ = mlp_from_json(p);
        converged_ = p.value("converged", false);
        episodes_ = p.value("episodes", std::size_t{0});
    }

private:
    AgentConfig config_;
    std::uint64_t seed_;
    std::optional<Mlp> net_;
    bool converged_ = false;
    std::size_t episodes_ = 0;
};

}  // namespace

std::string_view to_string(ModelKind kind) noexcept {
    switch (kind) {
        case ModelKind::Svm: return "svm";
        case ModelKind::Xgboost: return "xgboost";
        case ModelKind::Lightgbm: return "lightgbm";
        case ModelKind::Iforest: return "iforest";
        case ModelKind::Lof: return "lof";
        case ModelKind::Drl: return "drl";
    }
    return "svm";
}

std::string_view display_name(ModelKind kind) noexcept {
    switch (kind) {
        case ModelKind::Svm: return "SVM";
        case ModelKind::Xgboost: return "XGBoost";
        case ModelKind::Lightgbm: return "LightGBM";
        case ModelKind::Iforest: return "iForest";
        case ModelKind::Lof: return "LOF";
        case ModelKind::Drl: return "DRL";
    }
    return "SVM";
}

ModelKind parse_model_kind(std::string_view text) {
    for (auto k : all_model_kinds()) {
        if (text == to_string(k) || text == display_name(k)) return k;
    }
    throw InvalidArgument("unknown model '" + std::string(text) + "'");
}

const std::vector<ModelKind>& all_model_kinds() {
    static const std::vector<ModelKind> kinds = {ModelKind::Svm,     ModelKind::Xgboost, ModelKind::Lightgbm,
                                                 ModelKind::Iforest, ModelKind::Lof,     ModelKind::Drl};
    return kinds;
}

bool is_unsupervised(ModelKind kind) noexcept { return kind == ModelKind::Iforest || kind == ModelKind::Lof; }

bool supports(ModelKind kind, Scenario scenario) noexcept {
    return scenario == Scenario::Binary || !is_unsupervised(kind);
}

std::unique_ptr<Detector> make_detector(ModelKind kind, const nlohmann::json& config, std::uint64_t seed) {
    switch (kind) {
        case ModelKind::Svm: return std::make_unique<SvmDetector>(config);
        case ModelKind::Xgboost:
        case ModelKind::Lightgbm: return std::make_unique<GbdtDetector>(kind, config, seed);
        case ModelKind::Iforest: return std::make_unique<IForestDetector>(config, seed);
        case ModelKind::Lof: return std::make_unique<LofDetector>(config);
        case ModelKind::Drl: return std::make_unique<DrlDetector>(config, seed);
    }
    throw InvalidArgument("unknown model kind");
}

nlohmann::json model_file_json(const Detector& detector, Scenario scenario,
                               const std::vector<std::string>& class_names) {
    return {{"model", std::string(to_string(detector.kind()))},
            {"scenario", std::string(to_string(scenario))},
            {"class_names", class_names},
            {"config", detector.config_json()},
            {"params", detector.params_json()}};
}

LoadedModel load_model_file(const nlohmann::json& j) {
    try {
        LoadedModel out;
        const auto kind = parse_model_kind(j.at("model").get<std::string>());
        out.scenario = parse_scenario(j.at("scenario").get<std::string>());
        out.class_names = j.at("class_names").get<std::vector<std::string>>();
        out.detector = make_detector(kind, j.at("config"), 0);
        out.detector->load_params(j.at("params"));
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

}  // namespace flowsentry
