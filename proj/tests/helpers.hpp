// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "ncatab/data.hpp"

namespace testutil {

using namespace ncatab;

/// Linearly separable 2-class Gaussian data with inter-class margin
/// `margin` along a random unit direction.
inline Dataset make_separable(int n, int d, double margin, std::uint64_t seed) {
    Rng rng(seed);
    Vector w(d);
    for (int j = 0; j < d; ++j) w[j] = rng.normal();
    w.normalize();
    Dataset ds;
    ds.task = TaskKind::classification;
    ds.n_classes = 2;
    ds.numerical.resize(n, d);
    ds.categorical_onehot.resize(n, 0);
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        Vector x(d);
        for (int j = 0; j < d; ++j) x[j] = rng.normal();
        const int label = x.dot(w) >= 0.0 ? 1 : 0;
        const double proj = x.dot(w);
        if (std::fabs(proj) < margin / 2.0)
            x += (label == 1 ? 1.0 : -1.0) * (margin / 2.0 - std::fabs(proj)) * w;
        ds.numerical.row(i) = x.transpose();
        ds.labels[i] = label;
    }
    for (int j = 0; j < d; ++j)
        ds.schema.push_back({"x" + std::to_string(j), ColumnKind::numerical, {}});
    ds.schema.push_back({"y", ColumnKind::label, {"neg", "pos"}});
    return ds;
}

/// Two interleaved concentric noisy shells in d dimensions; the separating
/// feature (radius) is not expressible by any linear metric.
inline Dataset make_shells(int n, int d, double r0, double r1, double noise, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.task = TaskKind::classification;
    ds.n_classes = 2;
    ds.numerical.resize(n, d);
    ds.categorical_onehot.resize(n, 0);
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        Vector u(d);
        for (int j = 0; j < d; ++j) u[j] = rng.normal();
        u.normalize();
        const double r = (label == 0 ? r0 : r1) + noise * rng.normal();
        ds.numerical.row(i) = (r * u).transpose();
        ds.labels[i] = label;
    }
    for (int j = 0; j < d; ++j)
        ds.schema.push_back({"x" + std::to_string(j), ColumnKind::numerical, {}});
    ds.schema.push_back({"y", ColumnKind::label, {"inner", "outer"}});
    return ds;
}

inline Dataset make_sine(int n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.task = TaskKind::regression;
    ds.numerical.resize(n, 1);
    ds.categorical_onehot.resize(n, 0);
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform(-2.0, 2.0);
        ds.numerical(i, 0) = x;
        ds.labels[i] = std::sin(3.0 * x) + 0.1 * rng.normal();
    }
    ds.schema.push_back({"x0", ColumnKind::numerical, {}});
    ds.schema.push_back({"y", ColumnKind::label, {}});
    return ds;
}

inline Dataset make_random_classification(int n, int d, int n_classes, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.task = TaskKind::classification;
    ds.n_classes = n_classes;
    ds.numerical.resize(n, d);
    ds.categorical_onehot.resize(n, 0);
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) ds.numerical(i, j) = rng.normal();
        ds.labels[i] = static_cast<double>(rng.uniform_int(n_classes));
    }
    for (int j = 0; j < d; ++j)
        ds.schema.push_back({"x" + std::to_string(j), ColumnKind::numerical, {}});
    ColumnSchema label{"y", ColumnKind::label, {}};
    for (int c = 0; c < n_classes; ++c) label.categories.push_back("c" + std::to_string(c));
    ds.schema.push_back(label);
    return ds;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

/// CSV + schema sidecar for a small mixed-type classification table.
inline void write_demo_dataset(const std::string& csv_path, const std::string& schema_path,
                               int n, std::uint64_t seed) {
    Rng rng(seed);
    std::string csv = "age,height,color,target\n";
    for (int i = 0; i < n; ++i) {
        const char* color = rng.uniform() < 0.5 ? "red" : "blue";
        const double age = rng.uniform(20, 60);
        const double height = rng.normal(170, 10);
        // labels correlate with height so the task is learnable
        const char* target = height + 5.0 * rng.normal() > 170 ? "tall" : "short";
        csv += format_double(age) + "," + format_double(height) + "," + color + "," + target + "\n";
    }
    write_file(csv_path, csv);
    write_file(schema_path, R"({"columns":[
        {"name":"age","kind":"numerical"},
        {"name":"height","kind":"numerical"},
        {"name":"color","kind":"categorical","categories":["red","blue"]},
        {"name":"target","kind":"label","categories":["short","tall"]}]})");
}

}  // namespace testutil
