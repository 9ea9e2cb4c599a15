#include "sambo/model_learning.hpp"

#include <algorithm>
#include <cmath>

namespace sambo {

ReplayBuffer::ReplayBuffer(BufferTag tag, std::size_t capacity) : tag_(tag), capacity_(capacity) {
    if (capacity == 0) throw InvalidInput("replay buffer capacity must be positive");
}

void ReplayBuffer::add(const TransitionSample& sample) {
    if (samples_.size() == capacity_) samples_.pop_front();
    samples_.push_back(sample);
}

void ReplayBuffer::add(const std::vector<TransitionSample>& samples) {
    for (const auto& s : samples) add(s);
}

const TransitionSample& ReplayBuffer::sample(Rng& rng) const {
    if (samples_.empty()) throw InvalidInput("cannot sample from an empty buffer");
    return samples_[uniform_index(samples_.size(), rng)];
}

void ReplayBuffer::validate(std::size_t n_states, std::size_t n_actions) const {
    for (const auto& s : samples_)
        if (s.state >= n_states || s.next_state >= n_states || s.action >= n_actions)
            throw InvalidInput("transition sample index out of range");
}

ReplayBuffer collect_dataset(const TabularMdp& mdp, const SoftmaxPolicy& policy, std::size_t n_samples,
                             std::size_t episode_length, std::uint64_t seed) {
    if (episode_length == 0) throw InvalidInput("episode length must be positive");
    ReplayBuffer buffer(BufferTag::Env);
    Rng rng = make_rng(seed);
    while (buffer.size() < n_samples) {
        const auto traj = sample_trajectory(mdp.transition(), mdp.reward(), mdp.mu0(), policy,
                                            std::min(episode_length, n_samples - buffer.size()), rng);
        for (const auto& st : traj.steps)
            buffer.add({st.state, st.action, st.reward, st.next_state, SampleSource::Env});
    }
    return buffer;
}

TransitionKernel TabularModelEnsemble::mean_kernel() const {
    if (members.empty()) throw InvalidInput("empty ensemble");
    std::vector<double> mean(members.front().data().size(), 0.0);
    for (const auto& m : members)
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += m.data()[i];
    for (double& x : mean) x /= double(members.size());
    // Renormalize rows so floating-point drift stays inside the simplex tolerance.
    const std::size_t ns = members.front().n_states();
    for (std::size_t r = 0; r < mean.size(); r += ns) {
        double total = 0.0;
        for (std::size_t k = 0; k < ns; ++k) total += mean[r + k];
        for (std::size_t k = 0; k < ns; ++k) mean[r + k] /= total;
    }
    return {members.front().n_states(), members.front().n_actions(), std::move(mean)};
}

double TabularModelEnsemble::max_pairwise_distance() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = i + 1; j < members.size(); ++j)
            worst = std::max(worst, members[i].max_abs_diff(members[j]));
    return worst;
}

TransitionKernel fit_counts(const std::vector<const TransitionSample*>& samples, std::size_t n_states,
                            std::size_t n_actions, double smoothing) {
    if (!(smoothing > 0.0)) throw InvalidInput("smoothing must be positive");
    std::vector<double> counts(n_states * n_actions * n_states, 0.0);
    for (const auto* s : samples) counts[(s->state * n_actions + s->action) * n_states + s->next_state] += 1.0;
    for (std::size_t r = 0; r < counts.size(); r += n_states) {
        double total = 0.0;
        for (std::size_t k = 0; k < n_states; ++k) total += counts[r + k];
        const double denom = total + smoothing * double(n_states);
        for (std::size_t k = 0; k < n_states; ++k) counts[r + k] = (counts[r + k] + smoothing) / denom;
    }
    return {n_states, n_actions, std::move(counts)};
}

TabularModelEnsemble fit_ensemble(const ReplayBuffer& data, std::size_t n_states, std::size_t n_actions,
                                  std::size_t n_members, double smoothing, std::uint64_t seed) {
    if (data.empty()) throw InvalidInput("cannot fit a model on an empty dataset");
    if (n_members == 0) throw InvalidInput("ensemble needs at least one member");
    if (!(smoothing > 0.0)) throw InvalidInput("smoothing must be positive");
    data.validate(n_states, n_actions);

    TabularModelEnsemble ensemble;
    ensemble.smoothing = smoothing;
    std::vector<const TransitionSample*> resample(data.size());
    for (std::size_t m = 0; m < n_members; ++m) {
        Rng rng = make_rng(seed, m);
        for (auto& ptr : resample) ptr = &data[uniform_index(data.size(), rng)];
        ensemble.members.push_back(fit_counts(resample, n_states, n_actions, smoothing));
    }
    return ensemble;
}

std::vector<TransitionSample> rollout(const TabularModelEnsemble& ensemble, const Table& reward,
                                      const SoftmaxPolicy& policy, const ReplayBuffer& init_source, std::size_t h,
                                      std::size_t b, std::uint64_t seed) {
    if (init_source.empty()) throw InvalidInput("rollouts need a non-empty start-state source");
    if (h == 0 || b == 0) throw InvalidInput("rollout length and count must be positive");
    if (ensemble.members.empty()) throw InvalidInput("empty ensemble");

    std::vector<TransitionSample> out(h * b);
    // Branches draw from their own streams and write to fixed slots.
    for (std::size_t branch = 0; branch < b; ++branch) {
        Rng rng = make_rng(seed, branch);
        std::size_t s = init_source.sample(rng).state;
        for (std::size_t j = 0; j < h; ++j) {
            const std::size_t a = sample_categorical(policy.row(s), rng);
            const auto& member = ensemble.members[uniform_index(ensemble.size(), rng)];
            const std::size_t next = sample_categorical(member.row(s, a), rng);
            out[branch * h + j] = {s, a, reward(s, a), next, SampleSource::Model};
            s = next;
        }
    }
    return out;
}

}  // namespace sambo
