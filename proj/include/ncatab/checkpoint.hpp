// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "ncatab/data.hpp"
#include "ncatab/diffcore.hpp"
#include "ncatab/models.hpp"
#include "ncatab/training.hpp"

namespace ncatab {

/// Everything needed to reuse a trained model: architecture, inference
/// knobs, the label transform, the fitted feature standardizer, and the
/// schema it was trained against. Parameter values, batch-norm running
/// statistics, and RNG lineage are stored as hexfloats and round-trip
/// bit-exactly.
struct ModelBundle {
    std::unique_ptr<Model> model;
    InferenceSpec inference;
    LabelTransform label_transform;
    Standardizer standardizer;
    Schema schema;
    TaskKind task = TaskKind::classification;
    int n_classes = 0;
};

inline nlohmann::json inference_to_json(const InferenceSpec& s) {
    return nlohmann::json{{"rule", s.rule == PredictionRule::soft_nn ? "soft_nn" : "hard_knn"},
                          {"knn_k", s.knn_k},
                          {"distance", to_string(s.distance)},
                          {"kernel", s.kernel == KernelKind::exp_neg ? "exp" : "t"},
                          {"nu", s.nu}};
}

inline InferenceSpec inference_from_json(const nlohmann::json& j) {
    InferenceSpec s;
    const std::string rule = j.value("rule", "soft_nn");
    s.rule = rule == "hard_knn" ? PredictionRule::hard_knn : PredictionRule::soft_nn;
    s.knn_k = j.value("knn_k", 1);
    s.distance = distance_from_string(j.value("distance", "euclid"));
    s.kernel = j.value("kernel", "exp") == "t" ? KernelKind::t_dist : KernelKind::exp_neg;
    s.nu = j.value("nu", 1.0);
    return s;
}

namespace detail {

inline void write_hex_row(std::ostream& os, const Vector& v) {
    char buf[64];
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%a", v[i]);
        os << buf << (i + 1 == v.size() ? "" : " ");
    }
    os << "\n";
}

inline Vector read_hex_row(std::istream& is, Eigen::Index n, const std::string& what) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::string cell;
        is >> cell;
        char* end = nullptr;
        v[i] = std::strtod(cell.c_str(), &end);
        check(end == cell.c_str() + cell.size() && !cell.empty(),
              "checkpoint: bad " + what + " value");
    }
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Model& model,
                            const InferenceSpec& inference, const LabelTransform& lt,
                            const Standardizer& st, const Schema& schema, TaskKind task,
                            int n_classes) {
    std::ofstream os(path);
    check(os.good(), "cannot write checkpoint: " + path);
    nlohmann::json header{{"arch", arch_to_json(model.arch())},
                          {"inference", inference_to_json(inference)},
                          {"task", task == TaskKind::classification ? "classification"
                                                                    : "regression"},
                          {"n_classes", n_classes},
                          {"d_num", model.d_num()},
                          {"d_cat", model.d_cat()},
                          {"init_seed", model.params().init_seed()},
                          {"schema", schema_to_json(schema)}};
    os << "ncatab-checkpoint v1\n" << header.dump() << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a %a", lt.mean, lt.scale);
    os << "label_transform " << buf << "\n";
    os << "standardizer " << st.means.size() << "\n";
    detail::write_hex_row(os, st.means);
    detail::write_hex_row(os, st.scales);
    write_param_store(os, model.params(), model.dropout_rng());
    check(os.good(), "checkpoint write failed: " + path);
}

inline ModelBundle load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    check(is.good(), "cannot open checkpoint: " + path);
    std::string line;
    check(static_cast<bool>(std::getline(is, line)) && line == "ncatab-checkpoint v1",
          path + ": not a ncatab checkpoint");
    check(static_cast<bool>(std::getline(is, line)), path + ": missing header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        fail(path + ": bad header: " + e.what());
    }

    ModelBundle bundle;
    bundle.inference = inference_from_json(header.at("inference"));
    bundle.task = header.at("task").get<std::string>() == "classification"
                      ? TaskKind::classification
                      : TaskKind::regression;
    bundle.n_classes = header.at("n_classes").get<int>();
    const auto d_num = header.at("d_num").get<Eigen::Index>();
    const auto d_cat = header.at("d_cat").get<Eigen::Index>();
    const auto seed = header.at("init_seed").get<std::uint64_t>();
    const ArchConfig arch = arch_from_json(header.at("arch"));
    {
        // schema round-trips through its own loader format
        const auto jschema = header.at("schema");
        for (const auto& jc : jschema.at("columns")) {
            ColumnSchema col;
            col.name = jc.at("name").get<std::string>();
            const std::string kind = jc.at("kind").get<std::string>();
            col.kind = kind == "numerical"     ? ColumnKind::numerical
                       : kind == "categorical" ? ColumnKind::categorical
                                               : ColumnKind::label;
            if (jc.contains("categories"))
                col.categories = jc["categories"].get<std::vector<std::string>>();
            bundle.schema.push_back(std::move(col));
        }
        validate_schema(bundle.schema);
    }

    bundle.model = build_model(arch, d_num, d_cat, seed);

    std::string tag;
    is >> tag;
    check(tag == "label_transform", path + ": missing label_transform");
    const Vector lt_vals = detail::read_hex_row(is, 2, "label_transform");
    bundle.label_transform.mean = lt_vals[0];
    bundle.label_transform.scale = lt_vals[1];

    Eigen::Index d_st = 0;
    is >> tag >> d_st;
    check(tag == "standardizer", path + ": missing standardizer");
    bundle.standardizer.means = detail::read_hex_row(is, d_st, "standardizer mean");
    bundle.standardizer.scales = detail::read_hex_row(is, d_st, "standardizer scale");

    read_param_store(is, bundle.model->params(), bundle.model->dropout_rng());
    return bundle;
}

}  // namespace ncatab
