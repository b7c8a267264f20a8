#pragma once

#include <json.hpp>

#include "gflow/experiments.hpp"
#include "gflow/gaussian_theory.hpp"
#include "gflow/model.hpp"

namespace gflow {

inline const char* bound_kind_name(BoundKind k) {
    switch (k) {
        case BoundKind::gaussianization_lower: return "gaussianization_lower";
        case BoundKind::learned_rotation_lower: return "learned_rotation_lower";
        case BoundKind::iterative_rate: return "iterative_rate";
        case BoundKind::coupling_lower: return "coupling_lower";
        case BoundKind::coupling_upper_48: return "coupling_upper_48";
        case BoundKind::coupling_rate: return "coupling_rate";
    }
    return "unknown";
}

/// Inspection export of a trained model: rotations and spline knots as JSON.
inline nlohmann::json model_to_json(const GaussianizationModel& model) {
    nlohmann::json j;
    j["dim"] = model.dim();
    j["blocks"] = nlohmann::json::array();
    for (const auto& block : model.blocks()) {
        nlohmann::json b;
        const auto& q = block.rotation.matrix();
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(q.rows()));
        for (int i = 0; i < q.rows(); ++i)
            rows[static_cast<std::size_t>(i)].assign(q.row(i).begin(), q.row(i).end());
        b["rotation"] = rows;
        b["transforms"] = nlohmann::json::array();
        for (const auto& t : block.transforms) {
            b["transforms"].push_back({{"knots_x", t.knots_x()},
                                       {"knots_y", t.knots_y()},
                                       {"derivatives", t.derivatives()},
                                       {"alpha_inner", t.alpha_inner()},
                                       {"alpha_tail", t.alpha_tail()}});
        }
        j["blocks"].push_back(std::move(b));
    }
    return j;
}

inline nlohmann::json records_to_json(const std::vector<ConvergenceRecord>& records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json row = {{"experiment", r.experiment}, {"case", r.case_label},
                              {"dim", r.dim},              {"seed", r.seed},
                              {"layer", r.layer},          {"loss", r.loss}};
        if (std::isfinite(r.gamma)) row["gamma"] = r.gamma;
        if (std::isfinite(r.required_layers)) row["required_layers"] = r.required_layers;
        arr.push_back(std::move(row));
    }
    return arr;
}

}  // namespace gflow
