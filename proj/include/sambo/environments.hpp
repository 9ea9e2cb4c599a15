#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sambo/mdp.hpp"

namespace sambo {

inline constexpr std::size_t kLeft = 0;
inline constexpr std::size_t kRight = 1;

struct RewardPlacement {
    std::size_t state = 0;
    double value = 0.0;
};

/// 1D corridor: reward `value` for entering a placed state, `base_reward` otherwise.
struct GridSpec {
    std::size_t n_cells = 5;
    std::vector<RewardPlacement> reward_placements{{4, 1.0}, {0, 0.3}};
    double base_reward = 0.01;

    void validate() const;
};

enum class BiasKind { Overestimating, Underestimating };

struct BiasSpec {
    BiasKind kind = BiasKind::Overestimating;
    double epsilon = 0.2;

    void validate() const;
};

std::string to_string(BiasKind kind);
BiasKind bias_kind_from_string(const std::string& name);

inline constexpr double kDefaultGridGamma = 0.95;

/// Two actions (L, R) moving deterministically with walls at both ends; uniform mu0.
TabularMdp build_grid(const GridSpec& spec, double gamma = kDefaultGridGamma);

/// Cell holding the largest placed reward.
std::size_t best_reward_cell(const GridSpec& spec);

/// Mixes every row with a point mass one cell toward (Overestimating) or away
/// from (Underestimating) the best reward cell, clipped at the walls.
TransitionKernel make_biased_model(const TransitionKernel& true_kernel, const GridSpec& grid, const BiasSpec& spec);

/// Uniform behavior policy on the corridor.
SoftmaxPolicy uniform_behavior(std::size_t n_cells);
/// Softmax sharply favoring L everywhere, the reverse of the grid optimum.
SoftmaxPolicy anti_optimal_behavior(std::size_t n_cells, double sharpness = 3.0);

}  // namespace sambo
