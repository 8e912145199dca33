#pragma once

// ADAM and the validation-plateau learning rate schedule.

#include <cmath>
#include <limits>
#include <vector>

#include "pitsep/errors.hpp"
#include "pitsep/layers.hpp"

namespace pitsep {

template <class S>
struct AdamState {
    std::vector<Mat<S>> m, v;
    long step = 0;

    void init(const std::vector<ParamRef<S>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.push_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
            v.push_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
        }
        step = 0;
    }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class S>
void adam_step(std::vector<ParamRef<S>>& params, AdamState<S>& state, double lr,
               const AdamConfig& cfg = {}) {
    if (state.m.size() != params.size()) throw ParamError("adam: state/parameter count mismatch");
    state.step += 1;
    const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Mat<S>& g = *params[i].grad;
        if (!g.allFinite())
            throw TrainingError("adam: non-finite gradient for parameter " + params[i].name);
        state.m[i] = S(cfg.beta1) * state.m[i] + S(1.0 - cfg.beta1) * g;
        state.v[i] = (S(cfg.beta2) * state.v[i].array() +
                      S(1.0 - cfg.beta2) * g.array().square())
                         .matrix();
        const auto mhat = state.m[i].array() / S(b1t);
        const auto vhat = state.v[i].array() / S(b2t);
        params[i].value->array() -= S(lr) * mhat / (vhat.sqrt() + S(cfg.eps));
    }
}

// Halve the LR after `patience` consecutive epochs without strict improvement.
struct LrSchedule {
    double lr = 1e-3;
    double best_loss = std::numeric_limits<double>::infinity();
    int epochs_without_improvement = 0;
    int patience = 5;

    double update(double validation_loss) {
        if (validation_loss < best_loss) {
            best_loss = validation_loss;
            epochs_without_improvement = 0;
        } else {
            ++epochs_without_improvement;
            if (epochs_without_improvement >= patience) {
                lr /= 2.0;
                epochs_without_improvement = 0;
            }
        }
        return lr;
    }
};

}  // namespace pitsep
