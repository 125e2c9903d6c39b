// Copyright (c) 2026 ncatab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "ncatab/common.hpp"
#include "ncatab/data.hpp"
#include "ncatab/eval.hpp"
#include "ncatab/training.hpp"

namespace ncatab {

struct AblationCell {
    std::string id;
    TrainConfig cfg;
};

struct NamedDataset {
    std::string name;
    Dataset data;
};

/// One axis of the paper's ablation surface. Cell order follows the
/// corresponding table/figure layout.
inline std::vector<AblationCell> ablation_cells(const std::string& axis, const TrainConfig& base,
                                                TaskKind task, Eigen::Index d_input_raw) {
    std::vector<AblationCell> cells;
    if (axis == "variant") {
        // the NCAv0..NCAv4 ladder plus ModernNCA
        for (Variant v : {Variant::ncav0, Variant::ncav1, Variant::ncav2, Variant::ncav3,
                          Variant::ncav4_lnca, Variant::modern_nca}) {
            AblationCell cell;
            cell.id = to_string(v);
            cell.cfg = variant_preset(v, task, d_input_raw);
            cell.cfg.max_epochs = base.max_epochs;
            cell.cfg.patience = base.patience;
            cells.push_back(std::move(cell));
        }
        return cells;
    }
    if (axis == "distance") {
        for (DistanceKind k : {DistanceKind::euclid, DistanceKind::neg_dot,
                               DistanceKind::neg_cosine, DistanceKind::squared_euclid,
                               DistanceKind::l1}) {
            AblationCell cell;
            cell.id = to_string(k);
            cell.cfg = base;
            cell.cfg.distance = k;
            cells.push_back(std::move(cell));
        }
        return cells;
    }
    if (axis == "loss") {
        std::vector<LossKind> kinds;
        if (task == TaskKind::classification)
            kinds = {LossKind::log_softnn, LossKind::nca_sum_prob, LossKind::mcml,
                     LossKind::t_distribution};
        else
            kinds = {LossKind::mse_softnn, LossKind::t_distribution};
        for (LossKind k : kinds) {
            AblationCell cell;
            cell.id = to_string(k);
            cell.cfg = base;
            cell.cfg.loss = k;
            cells.push_back(std::move(cell));
        }
        return cells;
    }
    if (axis == "sampling") {
        std::vector<SamplingKind> kinds = task == TaskKind::classification
                                              ? std::vector<SamplingKind>{SamplingKind::random_uniform,
                                                                          SamplingKind::classwise,
                                                                          SamplingKind::distance_weighted}
                                              : std::vector<SamplingKind>{SamplingKind::random_uniform,
                                                                          SamplingKind::distance_weighted};
        for (SamplingKind k : kinds) {
            AblationCell cell;
            cell.id = to_string(k);
            cell.cfg = base;
            cell.cfg.sampling = k;
            cells.push_back(std::move(cell));
        }
        return cells;
    }
    if (axis == "architecture") {
        // fixed two-block MLP; swap the norm / add the residual link
        auto fixed = base;
        fixed.arch.n_blocks = std::max(2, base.arch.n_blocks);
        AblationCell mlp{"mlp", fixed};
        AblationCell ln{"layernorm", fixed};
        ln.cfg.arch.norm_kind = NormKind::layer;
        AblationCell res{"resnet", fixed};
        res.cfg.arch.residual = true;
        cells = {std::move(mlp), std::move(ln), std::move(res)};
        return cells;
    }
    if (axis == "sns_ratio") {
        for (double r : {0.1, 0.3, 0.5, 0.8, 1.0}) {
            AblationCell cell;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "ratio_%g", r);
            cell.id = buf;
            cell.cfg = base;
            cell.cfg.sns_ratio = r;
            cells.push_back(std::move(cell));
        }
        return cells;
    }
    fail("unknown ablation axis '" + axis + "' (expected variant, distance, loss, sampling, "
         "architecture, or sns_ratio)");
}

struct AblationRun {
    std::string axis;
    std::vector<std::string> cell_ids;
    std::vector<std::string> dataset_names;
    // grid[cell][dataset]; failed cells carry empty seed_values
    std::vector<std::vector<MetricValue>> grid;
    std::vector<std::string> failures;  // "cell/dataset: message"
};

/// Trains every cell of one axis on every dataset with shared seeds.
/// Failed cells are recorded and skipped; the run continues.
inline AblationRun run_ablation_axis(const std::string& axis, const TrainConfig& base,
                                     const std::vector<NamedDataset>& datasets,
                                     const std::vector<std::uint64_t>& seeds,
                                     std::uint64_t split_seed) {
    check(!datasets.empty(), "ablate: no datasets");
    AblationRun run;
    run.axis = axis;
    const TaskKind task = datasets[0].data.task;
    for (const auto& nd : datasets)
        check(nd.data.task == task, "ablate: datasets mix classification and regression");

    const auto cells = ablation_cells(
        axis, base, task, datasets[0].data.num_width() + datasets[0].data.cat_width());
    for (const auto& c : cells) run.cell_ids.push_back(c.id);
    for (const auto& d : datasets) run.dataset_names.push_back(d.name);

    run.grid.resize(cells.size());
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        for (const auto& nd : datasets) {
            MetricValue mv;
            mv.method_id = cells[ci].id;
            mv.dataset_id = nd.name;
            mv.direction = direction_for(task);
            TrainConfig cfg = cells[ci].cfg;
            if (axis == "variant" && cfg.arch.variant == Variant::ncav0)
                cfg.arch.d_prime = static_cast<int>(nd.data.num_width() + nd.data.cat_width());
            try {
                const auto result = run_seeds(cfg, nd.data, seeds, split_seed);
                mv.seed_values = result.metrics;
            } catch (const std::exception& e) {
                run.failures.push_back(cells[ci].id + "/" + nd.name + ": " + e.what());
            }
            run.grid[ci].push_back(std::move(mv));
        }
    }
    return run;
}

/// Per-seed metrics CSV: one row per (cell, dataset, seed) plus mean rows.
inline std::string ablation_metrics_csv(const AblationRun& run,
                                        const std::vector<std::uint64_t>& seeds) {
    std::string out = "axis,cell,dataset,seed,metric\n";
    for (std::size_t ci = 0; ci < run.grid.size(); ++ci) {
        for (const auto& mv : run.grid[ci]) {
            if (mv.seed_values.empty()) {
                out += run.axis + "," + mv.method_id + "," + mv.dataset_id + ",-,FAILED\n";
                continue;
            }
            for (std::size_t s = 0; s < mv.seed_values.size(); ++s)
                out += run.axis + "," + mv.method_id + "," + mv.dataset_id + "," +
                       std::to_string(seeds[s]) + "," + format_double(mv.seed_values[s]) + "\n";
            out += run.axis + "," + mv.method_id + "," + mv.dataset_id + ",mean," +
                   format_double(mv.mean()) + "\n";
        }
    }
    return out;
}

/// Average-rank table over the cells that succeeded on every dataset.
inline RankTable ablation_rank_table(const AblationRun& run) {
    std::vector<std::vector<MetricValue>> complete;
    for (const auto& row : run.grid) {
        bool ok = true;
        for (const auto& mv : row)
            if (mv.seed_values.empty()) ok = false;
        if (ok) complete.push_back(row);
    }
    check(!complete.empty(), "ablate: every cell failed; no rank table");
    return average_rank(complete);
}

}  // namespace ncatab
