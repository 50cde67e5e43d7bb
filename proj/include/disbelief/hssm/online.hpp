#pragma once

#include <vector>

#include "disbelief/hssm/inference.hpp"

namespace disbelief {

/// Streams encoder updates for B environments stepped in lockstep.
class OnlineEncoder {
public:
    OnlineEncoder(Hssm& model, std::size_t batch)
        : model_(&model), hidden_(Tensor::zeros(batch, model.config.encoder_hidden)) {}

    std::size_t batch() const noexcept { return hidden_.rows(); }
    const Tensor& hidden() const noexcept { return hidden_; }

    void reset() { hidden_.fill(0.0); }

    /// Consumes one encoder input row per environment and returns the updated beliefs.
    Tensor step(const Tensor& inputs) {
        if (inputs.rows() != batch() || inputs.cols() != model_->config.encoder_input_dim())
            throw ShapeError("online encoder: expected inputs [" + std::to_string(batch()) + ", " +
                             std::to_string(model_->config.encoder_input_dim()) + "], got " + shape_str(inputs.shape()));
        Graph g;
        Var h = model_->encoder.step(g, g.constant(hidden_), g.constant(inputs));
        hidden_ = h.value();
        auto qs = values_of(model_->state_head(g, h));
        std::optional<GaussianParams> qz;
        if (model_->config.has_task_latent()) qz = values_of(model_->task_head(g, h));
        return belief_from_posteriors(qs, qz);
    }

private:
    Hssm* model_;
    Tensor hidden_;
};

} // namespace disbelief
