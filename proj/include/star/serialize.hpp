#pragma once

#include <fstream>
#include <string>

#include "json.hpp"
#include "star/ensemble.hpp"

namespace star {

// Versioned JSON weight file for trained predictors. Values round-trip
// exactly (shortest-representation doubles).
inline constexpr int kPredictorFormatVersion = 1;

namespace detail {

inline nlohmann::ordered_json spec_to_json(const NetworkSpec& spec) {
    nlohmann::ordered_json j;
    j["depth"] = spec.depth;
    j["widths"] = spec.widths;
    j["dropout"] = spec.dropout_prob;
    j["batch_norm"] = spec.use_batch_norm;
    return j;
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.depth = j.at("depth").get<int>();
    spec.widths = j.at("widths").get<std::vector<int>>();
    spec.dropout_prob = j.at("dropout").get<double>();
    spec.use_batch_norm = j.at("batch_norm").get<bool>();
    spec.validate();
    return spec;
}

}  // namespace detail

template <typename T>
void save_predictor(const TrainedPredictor<T>& pred, const std::string& path) {
    nlohmann::ordered_json j;
    j["format"] = "star-predictor";
    j["version"] = kPredictorFormatVersion;
    j["precision"] = sizeof(T) == 8 ? "f64" : "f32";
    j["variant"] = variant_name(pred.variant);
    j["rule"] = pred.rule == CombineRule::Average  ? "average"
                : pred.rule == CombineRule::Convex ? "convex"
                                                   : "linear";
    j["loss"] = pred.loss == LossKind::Squared ? "squared" : "cross_entropy";
    j["spec"] = detail::spec_to_json(pred.spec);
    j["logits"] = std::vector<double>(pred.logits.begin(), pred.logits.end());
    j["linear"] = std::vector<double>(pred.linear.begin(), pred.linear.end());
    j["members"] = nlohmann::ordered_json::array();
    for (const auto& m : pred.members) {
        nlohmann::ordered_json member;
        member["weights"] = nlohmann::ordered_json::array();
        for (const auto& w : m.weights)
            member["weights"].push_back(std::vector<double>(w.data.begin(), w.data.end()));
        member["shifts"] = nlohmann::ordered_json::array();
        for (const auto& v : m.shifts)
            member["shifts"].push_back(std::vector<double>(v.begin(), v.end()));
        member["bn_mean"] = nlohmann::ordered_json::array();
        for (const auto& v : m.bn_mean)
            member["bn_mean"].push_back(std::vector<double>(v.begin(), v.end()));
        member["bn_var"] = nlohmann::ordered_json::array();
        for (const auto& v : m.bn_var)
            member["bn_var"].push_back(std::vector<double>(v.begin(), v.end()));
        j["members"].push_back(member);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write predictor to '" + path + "'");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

template <typename T>
TrainedPredictor<T> load_predictor(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open predictor '" + path + "'");
    nlohmann::json j;
    in >> j;
    if (j.at("format").get<std::string>() != "star-predictor")
        throw IoError("not a predictor file: " + path);
    if (j.at("version").get<int>() != kPredictorFormatVersion)
        throw IoError("unsupported predictor version in " + path);

    TrainedPredictor<T> pred;
    pred.variant = variant_from_name(j.at("variant").get<std::string>());
    const std::string rule = j.at("rule").get<std::string>();
    pred.rule = rule == "average"  ? CombineRule::Average
                : rule == "convex" ? CombineRule::Convex
                                   : CombineRule::Linear;
    pred.loss = j.at("loss").get<std::string>() == "squared" ? LossKind::Squared
                                                             : LossKind::CrossEntropy;
    pred.spec = detail::spec_from_json(j.at("spec"));
    for (double v : j.at("logits").get<std::vector<double>>())
        pred.logits.push_back(static_cast<T>(v));
    for (double v : j.at("linear").get<std::vector<double>>())
        pred.linear.push_back(static_cast<T>(v));

    for (const auto& member : j.at("members")) {
        NetParams<T> m = zero_params<T>(pred.spec);
        const auto weights = member.at("weights");
        if (weights.size() != m.weights.size()) throw IoError("member layer count mismatch");
        for (std::size_t l = 0; l < m.weights.size(); ++l) {
            const auto flat = weights[l].get<std::vector<double>>();
            if (flat.size() != m.weights[l].data.size())
                throw IoError("member weight size mismatch");
            for (std::size_t i = 0; i < flat.size(); ++i)
                m.weights[l].data[i] = static_cast<T>(flat[i]);
        }
        const auto shifts = member.at("shifts");
        for (std::size_t l = 0; l < m.shifts.size(); ++l) {
            const auto flat = shifts[l].get<std::vector<double>>();
            for (std::size_t i = 0; i < flat.size(); ++i)
                m.shifts[l][i] = static_cast<T>(flat[i]);
        }
        if (pred.spec.use_batch_norm) {
            const auto bm = member.at("bn_mean");
            const auto bv = member.at("bn_var");
            for (std::size_t l = 0; l < m.bn_mean.size(); ++l) {
                const auto fm = bm[l].get<std::vector<double>>();
                const auto fv = bv[l].get<std::vector<double>>();
                for (std::size_t i = 0; i < fm.size(); ++i) {
                    m.bn_mean[l][i] = static_cast<T>(fm[i]);
                    m.bn_var[l][i] = static_cast<T>(fv[i]);
                }
            }
        }
        pred.members.push_back(std::move(m));
    }
    return pred;
}

}  // namespace star
