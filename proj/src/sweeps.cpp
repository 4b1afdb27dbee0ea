#include "lpsr/sweeps.hpp"

#include <fstream>
#include <stdexcept>

#include "lpsr/stats.hpp"
#include "lpsr/trace_io.hpp"

namespace lpsr {

std::vector<LayerAucRow> layer_auc(std::span<const GenerationTrace> traces,
                                   std::span<const int> incorrect_labels) {
    if (traces.empty()) throw std::invalid_argument("layer_auc: no traces");
    if (traces.size() != incorrect_labels.size())
        throw std::invalid_argument("layer_auc: label count mismatch");
    const std::size_t layers = traces.front().layer_min_cosine.size();
    if (layers == 0)
        throw std::invalid_argument("layer_auc: traces lack per-layer capture");
    for (const GenerationTrace& t : traces)
        if (t.layer_min_cosine.size() != layers)
            throw std::invalid_argument("layer_auc: inconsistent layer capture");

    long positives = 0;
    for (int l : incorrect_labels) positives += l != 0;
    const long negatives = static_cast<long>(traces.size()) - positives;

    std::vector<LayerAucRow> rows(layers);
    std::vector<double> scores(traces.size());
    std::vector<int> labels(incorrect_labels.begin(), incorrect_labels.end());
    for (std::size_t l = 0; l < layers; ++l) {
        rows[l].layer = static_cast<int>(l);
        rows[l].positives = positives;
        rows[l].negatives = negatives;
        for (std::size_t i = 0; i < traces.size(); ++i)
            scores[i] = -traces[i].layer_min_cosine[l];
        if (positives > 0 && negatives > 0) rows[l].auc = roc_auc(scores, labels);
    }
    return rows;
}

std::vector<GridRow> make_grid(const GridAxes& axes) {
    if (axes.tau_phi.empty() || axes.tau_h.empty() || axes.alpha_max.empty() ||
        axes.l_crit.empty())
        throw std::invalid_argument("make_grid: empty axis");
    std::vector<GridRow> rows;
    rows.reserve(axes.tau_phi.size() * axes.tau_h.size() * axes.alpha_max.size() *
                 axes.l_crit.size());
    for (double tp : axes.tau_phi)
        for (double th : axes.tau_h)
            for (double am : axes.alpha_max)
                for (int lc : axes.l_crit) {
                    GridRow r;
                    r.tau_phi = tp;
                    r.tau_h = th;
                    r.alpha_max = am;
                    r.l_crit = lc;
                    rows.push_back(r);
                }
    return rows;
}

void write_layer_sweep_csv(const std::string& path, std::span<const LayerAucRow> rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_layer_sweep_csv: cannot open " + path);
    f << "layer,auc,positives,negatives\n";
    for (const LayerAucRow& r : rows)
        f << r.layer << ',' << csv_double(r.auc) << ',' << r.positives << ','
          << r.negatives << '\n';
}

void write_grid_csv(const std::string& path, std::span<const GridRow> rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_grid_csv: cannot open " + path);
    f << "tau_phi,tau_h,alpha_max,l_crit,accuracy,rollback_rate,mean_rollbacks_per_problem\n";
    for (const GridRow& r : rows)
        f << csv_double(r.tau_phi) << ',' << csv_double(r.tau_h) << ','
          << csv_double(r.alpha_max) << ',' << r.l_crit << ',' << csv_double(r.accuracy)
          << ',' << csv_double(r.rollback_rate) << ',' << csv_double(r.mean_rollbacks)
          << '\n';
}

}  // namespace lpsr
