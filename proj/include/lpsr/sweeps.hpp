#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lpsr/engine.hpp"

namespace lpsr {

struct LayerAucRow {
    int layer = 0;
    std::optional<double> auc;  // empty on single-class label sets
    long positives = 0;
    long negatives = 0;
};

/// Per-layer reversal-score AUC from traces captured with all-layer hooks in
/// one pass. The score for a trace is the negated minimum consecutive cosine
/// at that layer; labels mark traces whose final answer is wrong.
std::vector<LayerAucRow> layer_auc(std::span<const GenerationTrace> traces,
                                   std::span<const int> incorrect_labels);

struct GridAxes {
    std::vector<double> tau_phi;
    std::vector<double> tau_h;
    std::vector<double> alpha_max;
    std::vector<int> l_crit;
};

struct GridRow {
    double tau_phi = 0.0;
    double tau_h = 0.0;
    double alpha_max = 0.0;
    int l_crit = 0;
    std::optional<double> accuracy;
    double rollback_rate = 0.0;
    double mean_rollbacks = 0.0;
};

// Cells enumerate in axis-list order: tau_phi outermost, l_crit innermost.
std::vector<GridRow> make_grid(const GridAxes& axes);

void write_layer_sweep_csv(const std::string& path, std::span<const LayerAucRow> rows);
void write_grid_csv(const std::string& path, std::span<const GridRow> rows);

}  // namespace lpsr
