#include "sambo/environments.hpp"

#include <algorithm>
#include <cmath>

namespace sambo {

void GridSpec::validate() const {
    if (n_cells < 2) throw InvalidInput("grid needs at least 2 cells");
    if (!(base_reward > 0.0)) throw InvalidInput("base reward must be positive");
    if (reward_placements.empty()) throw InvalidInput("grid needs at least one reward placement");
    for (const auto& p : reward_placements) {
        if (p.state >= n_cells) throw InvalidInput("reward placement outside the grid");
        if (!(p.value > 0.0)) throw InvalidInput("placed rewards must be positive");
    }
}

void BiasSpec::validate() const {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InvalidInput("bias epsilon must lie in [0,1)");
}

std::string to_string(BiasKind kind) {
    return kind == BiasKind::Overestimating ? "overestimating" : "underestimating";
}

BiasKind bias_kind_from_string(const std::string& name) {
    if (name == "overestimating" || name == "om") return BiasKind::Overestimating;
    if (name == "underestimating" || name == "um") return BiasKind::Underestimating;
    throw InvalidInput("unknown bias kind '" + name + "'");
}

namespace {

std::size_t move(std::size_t s, std::size_t action, std::size_t n_cells) {
    if (action == kLeft) return s == 0 ? 0 : s - 1;
    return std::min(s + 1, n_cells - 1);
}

double entering_reward(const GridSpec& spec, std::size_t next) {
    for (const auto& p : spec.reward_placements)
        if (p.state == next) return p.value;
    return spec.base_reward;
}

}  // namespace

std::size_t best_reward_cell(const GridSpec& spec) {
    spec.validate();
    const auto best = std::max_element(spec.reward_placements.begin(), spec.reward_placements.end(),
                                       [](const auto& x, const auto& y) { return x.value < y.value; });
    return best->state;
}

TabularMdp build_grid(const GridSpec& spec, double gamma) {
    spec.validate();
    const std::size_t n = spec.n_cells;
    std::vector<double> probs(n * 2 * n, 0.0);
    Table reward(n, 2);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t a : {kLeft, kRight}) {
            const std::size_t next = move(s, a, n);
            probs[(s * 2 + a) * n + next] = 1.0;
            reward(s, a) = entering_reward(spec, next);
        }
    return {TransitionKernel(n, 2, std::move(probs)), std::move(reward), Eigen::VectorXd::Constant(n, 1.0 / double(n)),
            gamma};
}

TransitionKernel make_biased_model(const TransitionKernel& true_kernel, const GridSpec& grid, const BiasSpec& spec) {
    spec.validate();
    const std::size_t n = true_kernel.n_states();
    if (n != grid.n_cells) throw InvalidInput("kernel does not match the grid");
    const std::size_t target = best_reward_cell(grid);
    const double eps = spec.epsilon;

    auto shifted = [&](std::size_t s) -> std::size_t {
        const bool toward = spec.kind == BiasKind::Overestimating;
        if (s == target) {
            // Already there: progress means staying, regress means stepping off.
            if (toward) return s;
            return s > 0 ? s - 1 : std::min(s + 1, n - 1);
        }
        const bool target_right = target > s;
        const bool step_right = toward ? target_right : !target_right;
        return step_right ? std::min(s + 1, n - 1) : (s == 0 ? 0 : s - 1);
    };

    std::vector<double> probs(true_kernel.data().size());
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t succ = shifted(s);
        for (std::size_t a = 0; a < true_kernel.n_actions(); ++a) {
            const auto row = true_kernel.row(s, a);
            double* out = probs.data() + (s * true_kernel.n_actions() + a) * n;
            for (std::size_t s2 = 0; s2 < n; ++s2) out[s2] = (1.0 - eps) * row[s2];
            out[succ] += eps;
        }
    }
    return {n, true_kernel.n_actions(), std::move(probs)};
}

SoftmaxPolicy uniform_behavior(std::size_t n_cells) { return SoftmaxPolicy::uniform(n_cells, 2); }

SoftmaxPolicy anti_optimal_behavior(std::size_t n_cells, double sharpness) {
    Table logits = Table::Zero(n_cells, 2);
    logits.col(kLeft).setConstant(sharpness);
    return SoftmaxPolicy(std::move(logits));
}

}  // namespace sambo
