#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

#include "sambo/mdp.hpp"

namespace sambo {

enum class SampleSource { Env, Model };

struct TransitionSample {
    std::size_t state = 0;
    std::size_t action = 0;
    double reward = 0.0;
    std::size_t next_state = 0;
    SampleSource source = SampleSource::Env;

    bool operator==(const TransitionSample&) const = default;
};

enum class BufferTag { Env, Model, Policy };

/// Tagged transition store; drops the oldest samples once a finite capacity is reached.
class ReplayBuffer {
  public:
    static constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

    explicit ReplayBuffer(BufferTag tag, std::size_t capacity = kUnbounded);

    BufferTag tag() const { return tag_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    const TransitionSample& operator[](std::size_t i) const { return samples_[i]; }
    const std::deque<TransitionSample>& samples() const { return samples_; }

    void add(const TransitionSample& sample);
    void add(const std::vector<TransitionSample>& samples);
    void clear() { samples_.clear(); }

    const TransitionSample& sample(Rng& rng) const;

    /// Checks every index against the given state/action counts.
    void validate(std::size_t n_states, std::size_t n_actions) const;

  private:
    BufferTag tag_;
    std::size_t capacity_;
    std::deque<TransitionSample> samples_;
};

/// Dataset of `n_samples` transitions from episodes of `episode_length` steps
/// of `policy` in `mdp`, tagged Env.
ReplayBuffer collect_dataset(const TabularMdp& mdp, const SoftmaxPolicy& policy, std::size_t n_samples,
                             std::size_t episode_length, std::uint64_t seed);

struct TabularModelEnsemble {
    std::vector<TransitionKernel> members;
    double smoothing = 1.0;

    std::size_t size() const { return members.size(); }
    /// Average of the member kernels.
    TransitionKernel mean_kernel() const;
    /// Largest entry-wise distance between any two members.
    double max_pairwise_distance() const;
};

inline constexpr std::size_t kDefaultEnsembleSize = 5;
inline constexpr double kDefaultSmoothing = 1.0;

/// Dirichlet-smoothed count model of the samples.
TransitionKernel fit_counts(const std::vector<const TransitionSample*>& samples, std::size_t n_states,
                            std::size_t n_actions, double smoothing);

/// Each member is fit on an independent bootstrap resample of `data`.
TabularModelEnsemble fit_ensemble(const ReplayBuffer& data, std::size_t n_states, std::size_t n_actions,
                                  std::size_t n_members, double smoothing, std::uint64_t seed);

/// `b` branched rollouts of length `h` starting from dataset states; one member
/// is drawn uniformly per step and the reward comes from `reward`.
std::vector<TransitionSample> rollout(const TabularModelEnsemble& ensemble, const Table& reward,
                                      const SoftmaxPolicy& policy, const ReplayBuffer& init_source, std::size_t h,
                                      std::size_t b, std::uint64_t seed);

}  // namespace sambo
