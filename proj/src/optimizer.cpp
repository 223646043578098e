#include <cmath>

#include "gdpo/error.hpp"
#include "gdpo/train.hpp"

namespace gdpo {

namespace {

void check_grad(std::span<double> theta, std::span<const double> grad) {
    if (theta.size() != grad.size()) {
        throw ConfigError("gradient and parameter sizes differ");
    }
    for (double g : grad) {
        if (!std::isfinite(g)) {
            throw NumericError("non-finite gradient");
        }
    }
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
    return kind == OptimizerKind::rmsprop ? "rmsprop" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view text) {
    if (text == "rmsprop") {
        return OptimizerKind::rmsprop;
    }
    if (text == "sgd") {
        return OptimizerKind::sgd;
    }
    throw ConfigError("unknown optimizer \"" + std::string(text) + "\" (expected rmsprop or sgd)");
}

double warmup_lr(double lr, std::size_t step, std::size_t warmup_steps) {
    if (warmup_steps == 0 || step >= warmup_steps) {
        return lr;
    }
    return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

void rmsprop_step(std::span<double> theta, std::span<const double> grad, RmsPropState& state, double lr,
                  std::size_t warmup_steps, double decay, double eps) {
    check_grad(theta, grad);
    if (state.sq_avg.empty()) {
        state.sq_avg.assign(theta.size(), 0.0);
    }
    if (state.sq_avg.size() != theta.size()) {
        throw ConfigError("optimizer state does not match the parameters");
    }
    ++state.step;
    const double lr_eff = warmup_lr(lr, state.step, warmup_steps);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad[i];
        double& v = state.sq_avg[i];
        v = decay * v + (1.0 - decay) * g * g;
        theta[i] -= lr_eff * g / (std::sqrt(v) + eps);
    }
}

void sgd_step(std::span<double> theta, std::span<const double> grad, std::size_t& step, double lr,
              std::size_t warmup_steps) {
    check_grad(theta, grad);
    ++step;
    const double lr_eff = warmup_lr(lr, step, warmup_steps);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] -= lr_eff * grad[i];
    }
}

}  // namespace gdpo
