// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncatab/common.hpp"

namespace ncatab {

enum class ColumnKind { numerical, categorical, label };

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::numerical;
    std::vector<std::string> categories;  // categorical columns; label column when classification
};

using Schema = std::vector<ColumnSchema>;

enum class TaskKind { classification, regression };

inline void validate_schema(const Schema& schema) {
    int n_label = 0;
    for (const auto& col : schema) {
        if (col.kind == ColumnKind::label) ++n_label;
        if (col.kind == ColumnKind::categorical) {
            check(!col.categories.empty(),
                  "schema: categorical column '" + col.name + "' has no categories");
            std::vector<std::string> sorted = col.categories;
            std::sort(sorted.begin(), sorted.end());
            check(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
                  "schema: duplicate category in column '" + col.name + "'");
        }
    }
    check(n_label == 1, "schema: exactly one column must have kind=label");
}

/// Immutable table of standardizable numerical features, one-hot encoded
/// categoricals, and labels. Classification labels are class indices in
/// [0, n_classes); regression labels are raw reals.
struct Dataset {
    Schema schema;
    Matrix numerical;           // N x d_num
    Matrix categorical_onehot;  // N x d_cat (0/1, one block per categorical column)
    Vector labels;              // N
    TaskKind task = TaskKind::classification;
    int n_classes = 0;

    Eigen::Index rows() const { return labels.size(); }
    Eigen::Index num_width() const { return numerical.cols(); }
    Eigen::Index cat_width() const { return categorical_onehot.cols(); }

    const ColumnSchema& label_column() const {
        for (const auto& c : schema)
            if (c.kind == ColumnKind::label) return c;
        fail("dataset schema has no label column");
    }

    std::vector<int> class_labels() const {
        check(task == TaskKind::classification, "class_labels: regression dataset");
        std::vector<int> out(static_cast<std::size_t>(rows()));
        for (Eigen::Index i = 0; i < rows(); ++i) out[static_cast<std::size_t>(i)] = static_cast<int>(labels[i]);
        return out;
    }

    Dataset subset(const std::vector<int>& idx) const {
        Dataset out;
        out.schema = schema;
        out.task = task;
        out.n_classes = n_classes;
        const auto n = static_cast<Eigen::Index>(idx.size());
        out.numerical.resize(n, numerical.cols());
        out.categorical_onehot.resize(n, categorical_onehot.cols());
        out.labels.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto src = idx[static_cast<std::size_t>(i)];
            out.numerical.row(i) = numerical.row(src);
            out.categorical_onehot.row(i) = categorical_onehot.row(src);
            out.labels[i] = labels[src];
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Schema sidecar file.
//
// JSON format:
//   { "columns": [ { "name": "age", "kind": "numerical" },
//                  { "name": "color", "kind": "categorical",
//                    "categories": ["red", "green"] },
//                  { "name": "target", "kind": "label",
//                    "categories": ["no", "yes"] } ] }
//
// A label column with "categories" defines a classification task (class index
// = position in the list); without it the task is regression.
// ---------------------------------------------------------------------------

inline Schema load_schema(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "cannot open schema file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail("schema file " + path + ": " + e.what());
    }
    check(j.contains("columns") && j["columns"].is_array(),
          "schema file " + path + ": missing \"columns\" array");
    Schema schema;
    for (const auto& jc : j["columns"]) {
        ColumnSchema col;
        col.name = jc.at("name").get<std::string>();
        const std::string kind = jc.at("kind").get<std::string>();
        if (kind == "numerical") {
            col.kind = ColumnKind::numerical;
        } else if (kind == "categorical") {
            col.kind = ColumnKind::categorical;
        } else if (kind == "label") {
            col.kind = ColumnKind::label;
        } else {
            fail("schema column '" + col.name + "': unknown kind '" + kind + "'");
        }
        if (jc.contains("categories"))
            col.categories = jc["categories"].get<std::vector<std::string>>();
        schema.push_back(std::move(col));
    }
    validate_schema(schema);
    return schema;
}

inline nlohmann::json schema_to_json(const Schema& schema) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : schema) {
        nlohmann::json jc;
        jc["name"] = c.name;
        jc["kind"] = c.kind == ColumnKind::numerical     ? "numerical"
                     : c.kind == ColumnKind::categorical ? "categorical"
                                                         : "label";
        if (!c.categories.empty()) jc["categories"] = c.categories;
        cols.push_back(jc);
    }
    return nlohmann::json{{"columns", cols}};
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell += ch;
        }
    }
    out.push_back(cell);
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    check(!s.empty(), where + ": empty numerical cell");
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    check(end == begin + s.size(), where + ": cannot parse '" + s + "' as a number");
    check(std::isfinite(v), where + ": non-finite value '" + s + "'");
    return v;
}

}  // namespace detail

/// Loads a comma-separated file (first row header, UTF-8, no quoting) under
/// the given schema. Columns are located by header name; row order preserved.
inline Dataset load_csv(const std::string& path, const Schema& schema) {
    validate_schema(schema);
    std::ifstream in(path);
    check(in.good(), "cannot open dataset file: " + path);

    std::string line;
    check(static_cast<bool>(std::getline(in, line)), path + ": empty file");
    const auto header = detail::split_csv_line(line);

    std::unordered_map<std::string, std::size_t> header_pos;
    for (std::size_t i = 0; i < header.size(); ++i) {
        check(header_pos.emplace(header[i], i).second,
              path + ": duplicate header column '" + header[i] + "'");
    }
    std::vector<std::size_t> col_pos(schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c) {
        const auto it = header_pos.find(schema[c].name);
        check(it != header_pos.end(), path + ": missing column '" + schema[c].name + "'");
        col_pos[c] = it->second;
    }
    check(header.size() == schema.size(),
          path + ": header has " + std::to_string(header.size()) + " columns, schema has " +
              std::to_string(schema.size()));

    Eigen::Index d_num = 0, d_cat = 0;
    std::size_t label_col = 0;
    for (std::size_t c = 0; c < schema.size(); ++c) {
        if (schema[c].kind == ColumnKind::numerical) ++d_num;
        if (schema[c].kind == ColumnKind::categorical)
            d_cat += static_cast<Eigen::Index>(schema[c].categories.size());
        if (schema[c].kind == ColumnKind::label) label_col = c;
    }

    std::vector<std::vector<std::string>> raw_rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        check(cells.size() == header.size(),
              path + " row " + std::to_string(raw_rows.size()) + ": expected " +
                  std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
        raw_rows.push_back(std::move(cells));
    }
    check(!raw_rows.empty(), path + ": empty dataset");

    Dataset ds;
    ds.schema = schema;
    const auto n = static_cast<Eigen::Index>(raw_rows.size());
    ds.numerical.setZero(n, d_num);
    ds.categorical_onehot.setZero(n, d_cat);
    ds.labels.resize(n);

    const auto& label_schema = schema[label_col];
    if (!label_schema.categories.empty()) {
        ds.task = TaskKind::classification;
        ds.n_classes = static_cast<int>(label_schema.categories.size());
    } else {
        ds.task = TaskKind::regression;
    }

    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& cells = raw_rows[static_cast<std::size_t>(r)];
        Eigen::Index jn = 0, jc = 0;
        for (std::size_t c = 0; c < schema.size(); ++c) {
            const auto& col = schema[c];
            const auto& cell = cells[col_pos[c]];
            const std::string where = path + " row " + std::to_string(r) + " column '" + col.name + "'";
            switch (col.kind) {
                case ColumnKind::numerical:
                    ds.numerical(r, jn++) = detail::parse_double(cell, where);
                    break;
                case ColumnKind::categorical: {
                    const auto it = std::find(col.categories.begin(), col.categories.end(), cell);
                    check(it != col.categories.end(), where + ": value '" + cell + "' not in schema categories");
                    ds.categorical_onehot(r, jc + (it - col.categories.begin())) = 1.0;
                    jc += static_cast<Eigen::Index>(col.categories.size());
                    break;
                }
                case ColumnKind::label:
                    if (ds.task == TaskKind::classification) {
                        const auto it = std::find(col.categories.begin(), col.categories.end(), cell);
                        check(it != col.categories.end(), where + ": label '" + cell + "' not in schema categories");
                        ds.labels[r] = static_cast<double>(it - col.categories.begin());
                    } else {
                        ds.labels[r] = detail::parse_double(cell, where);
                    }
                    break;
            }
        }
    }
    return ds;
}

/// Query-time loader: the label column may be absent (labels become 0) and
/// an empty data section is allowed (prediction on zero rows is legal).
inline Dataset load_query_csv(const std::string& path, const Schema& schema) {
    std::ifstream probe(path);
    check(probe.good(), "cannot open query file: " + path);
    std::string header_line;
    check(static_cast<bool>(std::getline(probe, header_line)), path + ": empty file");
    const auto header = detail::split_csv_line(header_line);

    const ColumnSchema* label = nullptr;
    for (const auto& c : schema)
        if (c.kind == ColumnKind::label) label = &c;
    const bool has_label =
        std::find(header.begin(), header.end(), label->name) != header.end();

    Schema effective = schema;
    if (!has_label)
        effective.erase(std::remove_if(effective.begin(), effective.end(),
                                       [](const ColumnSchema& c) {
                                           return c.kind == ColumnKind::label;
                                       }),
                        effective.end());

    bool has_rows = false;
    std::string line;
    while (std::getline(probe, line))
        if (!line.empty()) {
            has_rows = true;
            break;
        }

    Dataset ds;
    if (!has_rows) {
        // header-only query file: zero rows, widths from the schema
        ds.schema = schema;
        Eigen::Index d_num = 0, d_cat = 0;
        for (const auto& c : schema) {
            if (c.kind == ColumnKind::numerical) ++d_num;
            if (c.kind == ColumnKind::categorical)
                d_cat += static_cast<Eigen::Index>(c.categories.size());
        }
        ds.numerical.resize(0, d_num);
        ds.categorical_onehot.resize(0, d_cat);
        ds.labels.resize(0);
        if (!label->categories.empty()) {
            ds.task = TaskKind::classification;
            ds.n_classes = static_cast<int>(label->categories.size());
        } else {
            ds.task = TaskKind::regression;
        }
        return ds;
    }
    if (has_label) return load_csv(path, schema);

    // no label column: parse the feature cells directly
    std::ifstream in(path);
    std::getline(in, line);  // header
    std::unordered_map<std::string, std::size_t> header_pos;
    for (std::size_t i = 0; i < header.size(); ++i)
        check(header_pos.emplace(header[i], i).second,
              path + ": duplicate header column '" + header[i] + "'");
    std::vector<std::size_t> col_pos;
    for (const auto& c : effective) {
        const auto it = header_pos.find(c.name);
        check(it != header_pos.end(), path + ": missing column '" + c.name + "'");
        col_pos.push_back(it->second);
    }
    check(header.size() == effective.size(),
          path + ": header has " + std::to_string(header.size()) +
              " columns, expected " + std::to_string(effective.size()) + " (label optional)");

    std::vector<std::vector<std::string>> raw_rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        check(cells.size() == header.size(),
              path + " row " + std::to_string(raw_rows.size()) + ": wrong cell count");
        raw_rows.push_back(std::move(cells));
    }

    ds.schema = schema;
    Eigen::Index d_num = 0, d_cat = 0;
    for (const auto& c : effective) {
        if (c.kind == ColumnKind::numerical) ++d_num;
        if (c.kind == ColumnKind::categorical)
            d_cat += static_cast<Eigen::Index>(c.categories.size());
    }
    const auto n = static_cast<Eigen::Index>(raw_rows.size());
    ds.numerical.setZero(n, d_num);
    ds.categorical_onehot.setZero(n, d_cat);
    ds.labels = Vector::Zero(n);
    if (!label->categories.empty()) {
        ds.task = TaskKind::classification;
        ds.n_classes = static_cast<int>(label->categories.size());
    } else {
        ds.task = TaskKind::regression;
    }
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& cells = raw_rows[static_cast<std::size_t>(r)];
        Eigen::Index jn = 0, jc = 0;
        for (std::size_t c = 0; c < effective.size(); ++c) {
            const auto& col = effective[c];
            const auto& cell = cells[col_pos[c]];
            const std::string where =
                path + " row " + std::to_string(r) + " column '" + col.name + "'";
            if (col.kind == ColumnKind::numerical) {
                ds.numerical(r, jn++) = detail::parse_double(cell, where);
            } else if (col.kind == ColumnKind::categorical) {
                const auto it = std::find(col.categories.begin(), col.categories.end(), cell);
                check(it != col.categories.end(),
                      where + ": value '" + cell + "' not in schema categories");
                ds.categorical_onehot(r, jc + (it - col.categories.begin())) = 1.0;
                jc += static_cast<Eigen::Index>(col.categories.size());
            }
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

/// Per-column mean and population standard deviation of the training
/// numerical features. Degenerate (near-constant) columns get scale 1.0 so
/// column indices stay stable across splits.
struct Standardizer {
    Vector means;
    Vector scales;
};

inline Standardizer fit_standardizer(const Dataset& train) {
    check(train.rows() >= 1, "fit_standardizer: empty dataset");
    const auto d = train.num_width();
    Standardizer s;
    s.means.resize(d);
    s.scales.resize(d);
    const double n = static_cast<double>(train.rows());
    for (Eigen::Index j = 0; j < d; ++j) {
        const double mean = train.numerical.col(j).mean();
        const double var = (train.numerical.col(j).array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        s.means[j] = mean;
        s.scales[j] = sd < 1e-12 ? 1.0 : sd;
    }
    return s;
}

inline Dataset apply_standardizer(const Standardizer& s, const Dataset& d) {
    check(s.means.size() == d.num_width(),
          "apply_standardizer: width mismatch (" + std::to_string(s.means.size()) + " vs " +
              std::to_string(d.num_width()) + ")");
    Dataset out = d;
    for (Eigen::Index j = 0; j < d.num_width(); ++j)
        out.numerical.col(j) = (d.numerical.col(j).array() - s.means[j]) / s.scales[j];
    return out;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct SplitIndices {
    std::vector<int> train, val, test;
};

/// Deterministic 64/16/20 split: test = ceil(0.2 N) of a seeded shuffle,
/// validation = ceil(0.2 (N - test)) of the remainder, train = the rest.
/// Index sets are returned in ascending row order.
inline SplitIndices split_indices(Eigen::Index n, std::uint64_t seed) {
    check(n >= 5, "split_dataset: need at least 5 rows, got " + std::to_string(n));
    const int n_test = static_cast<int>(std::ceil(0.2 * static_cast<double>(n)));
    const int n_val = static_cast<int>(std::ceil(0.2 * static_cast<double>(n - n_test)));
    const int n_train = static_cast<int>(n) - n_test - n_val;
    check(n_train >= 1 && n_val >= 1 && n_test >= 1,
          "split_dataset: " + std::to_string(n) + " rows cannot give each split >= 1 row");

    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, /*stream=*/0x5714));
    rng.shuffle(idx);

    SplitIndices out;
    out.test.assign(idx.begin(), idx.begin() + n_test);
    out.val.assign(idx.begin() + n_test, idx.begin() + n_test + n_val);
    out.train.assign(idx.begin() + n_test + n_val, idx.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

struct DataSplit {
    Dataset train, val, test;
};

inline DataSplit split_dataset(const Dataset& d, std::uint64_t seed) {
    const auto idx = split_indices(d.rows(), seed);
    return DataSplit{d.subset(idx.train), d.subset(idx.val), d.subset(idx.test)};
}

// ---------------------------------------------------------------------------
// Regression label transform
// ---------------------------------------------------------------------------

/// Shift/scale applied to regression labels during training; predictions are
/// mapped back through inverse() before computing RMSE in original units.
struct LabelTransform {
    double mean = 0.0;
    double scale = 1.0;

    double transform(double y) const { return (y - mean) / scale; }
    double inverse(double z) const { return z * scale + mean; }
    bool is_identity() const { return mean == 0.0 && scale == 1.0; }
};

inline LabelTransform fit_label_transform(const Dataset& train) {
    check(train.task == TaskKind::regression, "label transform: classification task");
    LabelTransform t;
    t.mean = train.labels.mean();
    const double var =
        (train.labels.array() - t.mean).square().sum() / static_cast<double>(train.rows());
    const double sd = std::sqrt(var);
    t.scale = sd < 1e-12 ? 1.0 : sd;
    return t;
}

inline void apply_label_transform(const LabelTransform& t, Dataset& d) {
    for (Eigen::Index i = 0; i < d.rows(); ++i) d.labels[i] = t.transform(d.labels[i]);
}

inline LabelTransform standardize_regression_labels(Dataset& train, Dataset& val, Dataset& test) {
    const LabelTransform t = fit_label_transform(train);
    apply_label_transform(t, train);
    apply_label_transform(t, val);
    apply_label_transform(t, test);
    return t;
}

}  // namespace ncatab
