// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
//
// ncatab — soft nearest-neighbor tabular learner.
//
// Subcommands:
//   train    train (optionally after random hyperparameter search) and write
//            checkpoint + history + metrics
//   predict  predict labels for a query CSV from a checkpoint
//   ablate   run one or more ablation axes and emit rank tables
//   verify   run the full invariant suite
//
// Exit codes: 0 success, 1 user error, 2 internal invariant failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ncatab/ablation.hpp"
#include "ncatab/checkpoint.hpp"
#include "ncatab/common.hpp"
#include "ncatab/data.hpp"
#include "ncatab/eval.hpp"
#include "ncatab/training.hpp"
#include "ncatab/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DatasetRef {
    std::string name;
    std::string csv;
    std::string schema;
};

struct RunManifest {
    std::vector<DatasetRef> datasets;
    std::string config_path;
    std::string search_space_path;
    std::string outdir;
    std::vector<std::uint64_t> seeds{0};
    std::uint64_t split_seed = 0;
    std::uint64_t search_seed = 0;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    ncatab::check(in.good(), "cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        ncatab::fail(path + ": " + e.what());
    }
    return j;
}

RunManifest load_manifest(const std::string& path) {
    const json j = read_json_file(path);
    RunManifest m;
    auto parse_ref = [](const json& jd) {
        DatasetRef r;
        r.name = jd.value("name", std::string("dataset"));
        r.csv = jd.at("csv").get<std::string>();
        r.schema = jd.at("schema").get<std::string>();
        return r;
    };
    if (j.contains("dataset")) m.datasets.push_back(parse_ref(j["dataset"]));
    if (j.contains("datasets"))
        for (const auto& jd : j["datasets"]) m.datasets.push_back(parse_ref(jd));
    ncatab::check(!m.datasets.empty(), path + ": manifest lists no datasets");
    m.config_path = j.value("config", std::string());
    m.search_space_path = j.value("search_space", std::string());
    m.outdir = j.value("outdir", std::string("ncatab_out"));
    if (j.contains("seeds")) m.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    ncatab::check(!m.seeds.empty(), path + ": empty seed list");
    m.split_seed = j.value("split_seed", 0ULL);
    m.search_seed = j.value("search_seed", 0ULL);
    for (const auto& d : m.datasets) {
        ncatab::check(fs::exists(d.csv), "manifest references missing file: " + d.csv);
        ncatab::check(fs::exists(d.schema), "manifest references missing file: " + d.schema);
    }
    return m;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    ncatab::check(out.good(), "cannot write: " + path);
    out << content;
    ncatab::check(out.good(), "write failed: " + path);
}

std::string metrics_csv(const std::string& dataset, const std::string& method,
                        const std::vector<std::uint64_t>& seeds,
                        const ncatab::SeedRunResult& result) {
    std::string out = "dataset,method,seed,metric\n";
    for (std::size_t i = 0; i < result.metrics.size(); ++i)
        out += dataset + "," + method + "," + std::to_string(seeds[i]) + "," +
               ncatab::format_double(result.metrics[i]) + "\n";
    out += dataset + "," + method + ",mean," + ncatab::format_double(result.mean) + "\n";
    out += dataset + "," + method + ",std," + ncatab::format_double(result.stddev) + "\n";
    return out;
}

json history_to_json(const ncatab::TrainHistory& h) {
    return json{{"train_loss", h.train_loss},
                {"val_metric", h.val_metric},
                {"epoch_seconds", h.epoch_seconds},
                {"best_epoch", h.best_epoch},
                {"best_val_metric", h.best_val_metric},
                {"stop_reason", h.stop_reason},
                {"mcml_skipped_queries", h.mcml_skipped_queries}};
}

int cmd_train(const std::string& manifest_path) {
    const RunManifest m = load_manifest(manifest_path);
    const auto& dref = m.datasets.front();
    const auto schema = ncatab::load_schema(dref.schema);
    const auto data = ncatab::load_csv(dref.csv, schema);
    const auto d_input_raw = data.num_width() + data.cat_width();

    fs::create_directories(m.outdir);

    ncatab::TrainConfig cfg;
    if (!m.config_path.empty()) {
        cfg = ncatab::train_config_from_json(read_json_file(m.config_path), data.task,
                                             d_input_raw);
    } else {
        cfg = ncatab::variant_preset(ncatab::Variant::modern_nca, data.task, d_input_raw);
    }

    if (!m.search_space_path.empty()) {
        const auto space = ncatab::search_space_from_json(read_json_file(m.search_space_path));
        const auto prep = ncatab::prepare_split(data, m.split_seed, cfg.standardize_targets);
        const auto search = ncatab::random_search(space, cfg, prep.train, prep.val,
                                                  prep.label_transform, m.search_seed);
        std::string log;
        for (const auto& t : search.trials) {
            json rec{{"trial", t.trial},
                     {"val_metric", t.val_metric},
                     {"seconds", t.seconds},
                     {"config", ncatab::train_config_to_json(t.cfg)}};
            if (t.failed) rec["error"] = t.error;
            log += rec.dump() + "\n";
        }
        write_text_file((fs::path(m.outdir) / "trials.jsonl").string(), log);
        std::cout << "search: best trial " << search.best_trial << " val metric "
                  << ncatab::format_double(search.best_val_metric) << "\n";
        cfg = search.best;
    }

    ncatab::validate_train_config(cfg, data.task);
    auto result = ncatab::run_seeds(cfg, data, m.seeds, m.split_seed);

    write_text_file((fs::path(m.outdir) / "metrics.csv").string(),
                    metrics_csv(dref.name, to_string(cfg.arch.variant), m.seeds, result));
    json histories = json::array();
    for (const auto& h : result.histories) histories.push_back(history_to_json(h));
    write_text_file((fs::path(m.outdir) / "history.json").string(), histories.dump(2) + "\n");
    write_text_file((fs::path(m.outdir) / "config_used.json").string(),
                    ncatab::train_config_to_json(cfg).dump(2) + "\n");

    const auto inf = ncatab::inference_spec(cfg, /*train_rows=*/data.rows());
    ncatab::save_checkpoint((fs::path(m.outdir) / "checkpoint.txt").string(),
                            *result.first_model, inf, result.label_transform,
                            result.standardizer, schema, data.task, data.n_classes);

    std::cout << "dataset " << dref.name << ": test metric mean "
              << ncatab::format_double(result.mean) << " std "
              << ncatab::format_double(result.stddev) << " over " << m.seeds.size()
              << " seed(s)\n";
    std::cout << "outputs in " << m.outdir << "\n";
    return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& train_csv,
                const std::string& query_csv, const std::string& out_path) {
    auto bundle = ncatab::load_checkpoint(checkpoint_path);
    auto train_raw = ncatab::load_csv(train_csv, bundle.schema);
    ncatab::check(train_raw.task == bundle.task,
                  "checkpoint task does not match training file task");
    auto queries_raw = ncatab::load_query_csv(query_csv, bundle.schema);

    auto train_std = ncatab::apply_standardizer(bundle.standardizer, train_raw);
    auto queries_std = ncatab::apply_standardizer(bundle.standardizer, queries_raw);
    if (bundle.task == ncatab::TaskKind::regression)
        ncatab::apply_label_transform(bundle.label_transform, train_std);

    std::string out;
    if (bundle.task == ncatab::TaskKind::classification) {
        const auto& cats = train_std.label_column().categories;
        out = "prediction";
        for (const auto& c : cats) out += ",p_" + c;
        out += "\n";
        if (queries_std.rows() > 0) {
            const auto pred = ncatab::predict(*bundle.model, train_std, queries_std,
                                              bundle.inference, bundle.label_transform);
            for (Eigen::Index i = 0; i < pred.values.size(); ++i) {
                out += cats[static_cast<std::size_t>(pred.values[i])];
                if (pred.probabilities.size() > 0)
                    for (Eigen::Index c = 0; c < pred.probabilities.cols(); ++c)
                        out += "," + ncatab::format_double(pred.probabilities(i, c));
                else
                    for (std::size_t c = 0; c < cats.size(); ++c)
                        out += std::string(",") +
                               (static_cast<double>(c) == pred.values[i] ? "1" : "0");
                out += "\n";
            }
        }
    } else {
        out = "prediction\n";
        if (queries_std.rows() > 0) {
            const auto pred = ncatab::predict(*bundle.model, train_std, queries_std,
                                              bundle.inference, bundle.label_transform);
            for (Eigen::Index i = 0; i < pred.values.size(); ++i)
                out += ncatab::format_double(pred.values[i]) + "\n";
        }
    }
    write_text_file(out_path, out);
    std::cout << "wrote " << queries_std.rows() << " prediction(s) to " << out_path << "\n";
    return 0;
}

int cmd_ablate(const std::string& manifest_path, const std::string& axes_csv) {
    const RunManifest m = load_manifest(manifest_path);
    std::vector<ncatab::NamedDataset> datasets;
    for (const auto& dref : m.datasets) {
        ncatab::NamedDataset nd;
        nd.name = dref.name;
        nd.data = ncatab::load_csv(dref.csv, ncatab::load_schema(dref.schema));
        datasets.push_back(std::move(nd));
    }
    const auto task = datasets[0].data.task;
    const auto d_input_raw = datasets[0].data.num_width() + datasets[0].data.cat_width();

    ncatab::TrainConfig base;
    if (!m.config_path.empty())
        base = ncatab::train_config_from_json(read_json_file(m.config_path), task, d_input_raw);
    else
        base = ncatab::variant_preset(ncatab::Variant::modern_nca, task, d_input_raw);

    fs::create_directories(m.outdir);

    std::vector<std::string> axes;
    std::string cur;
    for (char ch : axes_csv + ",") {
        if (ch == ',') {
            if (!cur.empty()) axes.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    ncatab::check(!axes.empty(), "ablate: no axes given");

    for (const auto& axis : axes) {
        const auto run = ncatab::run_ablation_axis(axis, base, datasets, m.seeds, m.split_seed);
        write_text_file((fs::path(m.outdir) / ("ablate_" + axis + "_metrics.csv")).string(),
                        ncatab::ablation_metrics_csv(run, m.seeds));
        for (const auto& f : run.failures) std::cerr << "ablate " << axis << ": FAILED " << f << "\n";
        const auto table = ncatab::ablation_rank_table(run);
        write_text_file((fs::path(m.outdir) / ("ablate_" + axis + "_rank.csv")).string(),
                        ncatab::rank_table_csv(table));
        std::cout << "axis " << axis << ": " << run.cell_ids.size() << " cells x "
                  << run.dataset_names.size() << " dataset(s), rank table written\n";
    }
    return 0;
}

int cmd_verify(bool inject_fault) {
    const auto results = ncatab::verify::run_invariant_suite(inject_fault);
    std::size_t failed = 0;
    std::printf("%-42s %-14s %-12s %s\n", "check", "measured", "tolerance", "status");
    for (const auto& r : results) {
        if (!r.pass) ++failed;
        std::printf("%-42s %-14.4g %-12.4g %s%s%s\n", r.name.c_str(), r.measured, r.tolerance,
                    r.pass ? "PASS" : "FAIL", r.note.empty() ? "" : "  # ", r.note.c_str());
    }
    std::printf("%zu/%zu checks passed\n", results.size() - failed, results.size());
    return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ncatab: soft nearest-neighbor tabular learner"};
    app.require_subcommand(1);

    std::string manifest_path;
    auto* train_cmd = app.add_subcommand("train", "train a model from a run manifest");
    train_cmd->add_option("--manifest", manifest_path, "run manifest (JSON)")->required();

    std::string checkpoint_path, train_csv, query_csv, out_path = "predictions.csv";
    auto* predict_cmd = app.add_subcommand("predict", "predict labels for a query CSV");
    predict_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    predict_cmd->add_option("--train-csv", train_csv, "candidate (training) rows")->required();
    predict_cmd->add_option("--queries", query_csv, "query rows (label column optional)")
        ->required();
    predict_cmd->add_option("--out", out_path, "output CSV path");

    std::string ablate_manifest, axes = "variant";
    auto* ablate_cmd = app.add_subcommand("ablate", "run ablation axes and emit rank tables");
    ablate_cmd->add_option("--manifest", ablate_manifest, "run manifest (JSON)")->required();
    ablate_cmd->add_option("--axes", axes,
                           "comma-separated: variant,distance,loss,sampling,architecture,"
                           "sns_ratio");

    bool inject_fault = false;
    auto* verify_cmd = app.add_subcommand("verify", "run the invariant suite");
    verify_cmd->add_flag("--inject-fault", inject_fault,
                         "corrupt one gradient to prove the suite can fail");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(manifest_path);
        if (predict_cmd->parsed()) return cmd_predict(checkpoint_path, train_csv, query_csv, out_path);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_manifest, axes);
        if (verify_cmd->parsed()) return cmd_verify(inject_fault);
    } catch (const ncatab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
