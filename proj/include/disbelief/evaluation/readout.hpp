#pragma once

#include <vector>

#include "disbelief/belief_oracle.hpp"
#include "disbelief/evaluation/export.hpp"
#include "disbelief/evaluation/probe.hpp"

namespace disbelief {

/// Task readout from the full amortized belief at one encoder step, scored
/// against the exact discrete filter on the same test trajectories. Encoder
/// step t and exact entry t + 1 condition on the same evidence.
struct ReadoutRow {
    std::size_t step = 0;
    double readout_accuracy = 0; ///< percent, logistic probe on [mu_z, sigma_z, mu_s, sigma_s]
    double exact_accuracy = 0;   ///< percent, exact MAP task
    double agreement = 0;        ///< percent of test trajectories where both MAPs coincide
    bool converged = false;
};

inline std::vector<ReadoutRow> belief_readout(Hssm& model, const DiscreteMetaPOMDPSpec& spec,
                                              const std::vector<Trajectory>& fit_set,
                                              const std::vector<Trajectory>& test_set,
                                              const std::vector<std::size_t>& steps, const ProbeConfig& cfg = {}) {
    if (fit_set.empty() || test_set.empty()) throw ValueError("belief readout: need fit and test trajectories");
    std::vector<const Trajectory*> all;
    for (const auto& t : fit_set) all.push_back(&t);
    for (const auto& t : test_set) all.push_back(&t);
    const std::size_t T = all.front()->length();
    for (std::size_t s : steps)
        if (s >= T) throw ValueError("belief readout: step " + std::to_string(s) + " is past the sequence end");

    std::vector<std::vector<std::vector<double>>> beliefs(steps.size());
    const std::size_t chunk = 100;
    for (std::size_t begin = 0; begin < all.size(); begin += chunk) {
        std::vector<const Trajectory*> part(all.begin() + static_cast<std::ptrdiff_t>(begin),
                                            all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), begin + chunk)));
        auto enc = encode_sequence(model, make_batch(model.config, part));
        for (std::size_t k = 0; k < steps.size(); ++k) {
            Tensor b = enc[steps[k]].belief();
            for (std::size_t i = 0; i < part.size(); ++i) beliefs[k].emplace_back(b.row(i).begin(), b.row(i).end());
        }
    }
    std::vector<std::vector<ExactBelief>> exact;
    for (const auto& t : test_set) exact.push_back(filter_trajectory(spec, t));

    std::vector<ReadoutRow> rows;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        ProbeDataset ds;
        ds.classes = spec.tasks;
        ds.train_count = fit_set.size();
        ds.has_task_latent = true;
        ds.task_means = beliefs[k];
        for (const auto* t : all) ds.labels.push_back(static_cast<std::size_t>(t->task.index));
        auto fit = train_logistic_probe(ds, ProbeFeature::Task, cfg);
        ReadoutRow row{steps[k], fit.test_accuracy, 0, 0, fit.converged};
        for (std::size_t i = 0; i < test_set.size(); ++i) {
            const std::size_t truth = static_cast<std::size_t>(test_set[i].task.index);
            const std::size_t map = exact[i][steps[k] + 1].map_task();
            const std::size_t read = fit.model.predict(beliefs[k][fit_set.size() + i]);
            row.exact_accuracy += map == truth;
            row.agreement += map == read;
        }
        row.exact_accuracy *= 100.0 / static_cast<double>(test_set.size());
        row.agreement *= 100.0 / static_cast<double>(test_set.size());
        rows.push_back(row);
    }
    return rows;
}

inline CsvTable readout_table(const std::vector<ReadoutRow>& rows) {
    CsvTable t{{"step", "readout_accuracy", "exact_accuracy", "agreement", "converged"}, {}};
    for (const auto& r : rows)
        t.add_row({std::to_string(r.step), format_number(r.readout_accuracy), format_number(r.exact_accuracy),
                   format_number(r.agreement), r.converged ? "1" : "0"});
    return t;
}

} // namespace disbelief
