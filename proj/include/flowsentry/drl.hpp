#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "flowsentry/matrix.hpp"
#include "flowsentry/neuralnet.hpp"
#include "flowsentry/random.hpp"

namespace flowsentry {

struct AgentConfig {
    double epsilon_start = 0.2;
    double epsilon_decay = 0.01;  // per experience replay
    double epsilon_floor = 0.05;
    int replays_per_episode = 2;
    int replay_epochs = 20;
    std::size_t replay_batch_size = 32;  // inner batch while fitting a minibatch
    std::size_t min_stable_episodes = 3;
    double stability_range = 0.05;
    double minibatch_fraction = 0.025;
    double memory_fraction = 0.0375;
    int max_episodes = 1000;

    void validate() const;
};

nlohmann::json to_json(const AgentConfig& config);
AgentConfig agent_config_from_json(const nlohmann::json& j);

/// ceil(fraction * n), at least 1.
std::size_t fraction_count(double fraction, std::size_t n);

struct StepResult {
    double reward = 0.0;
    bool done = false;
};

/// Walks a fixed list of flows; each step scores one prediction.
class Environment {
public:
    Environment(const Matrix& x, std::span<const std::size_t> labels, std::size_t n_classes);

    /// Starts an episode over the given rows (the step budget is their count).
    void reset(std::vector<std::size_t> rows);

    std::span<const double> state() const;
    std::size_t current_label() const;
    bool done() const noexcept { return cursor_ >= rows_.size(); }
    std::size_t n_classes() const noexcept { return n_classes_; }

    /// Reward 1 iff the action is the current flow's class, then advances.
    StepResult step(std::size_t action);

private:
    const Matrix& x_;
    std::span<const std::size_t> labels_;
    std::size_t n_classes_;
    std::vector<std::size_t> rows_;
    std::size_t cursor_ = 0;
};

struct Experience {
    std::vector<double> state;
    std::size_t action = 0;
    double reward = 0.0;
};

/// Bounded FIFO; the oldest experience is evicted first.
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity);

    void remember(Experience e);
    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    const Experience& at(std::size_t i) const { return items_.at(i); }

    /// Uniform draw of k distinct experiences.
    std::vector<const Experience*> sample(std::size_t k, Rng& rng) const;

private:
    std::size_t capacity_;
    std::deque<Experience> items_;
};

struct ActionChoice {
    std::size_t action = 0;
    bool explored = false;
};

/// Training targets for sampled experiences: the target network's output
/// with the taken action's entry replaced by the reward. No future-reward
/// term. Single sigmoid head: action 1 -> reward, action 0 -> 1 - reward.
/// Softmax heads are renormalized to sum 1 (uniform if all mass vanished).
Matrix replay_targets(const Mlp& target_net, std::span<const Experience* const> batch);

class Agent {
public:
    Agent(std::size_t n_features, std::size_t n_classes, std::size_t train_size, const AgentConfig& config,
          std::uint64_t seed);

    ActionChoice select_action(std::span<const double> state, Rng& rng) const;
    void remember(Experience e) { memory_.remember(std::move(e)); }

    /// Fits the active network on one minibatch for replay_epochs epochs and
    /// decays epsilon. Returns the mean epoch loss, or nothing when memory
    /// holds fewer experiences than a minibatch. epoch_losses, when given,
    /// receives each epoch's mean loss.
    std::optional<double> experience_replay(Rng& rng, std::vector<double>* epoch_losses = nullptr);

    void sync_target() { target_ = active_; }

    const Mlp& active() const noexcept { return active_; }
    Mlp& active() noexcept { return active_; }
    const Mlp& target() const noexcept { return target_; }
    const ReplayMemory& memory() const noexcept { return memory_; }
    double epsilon() const noexcept { return epsilon_; }
    void set_epsilon(double e) { epsilon_ = e; }
    std::size_t minibatch_size() const noexcept { return minibatch_; }
    std::size_t n_classes() const noexcept { return n_classes_; }

private:
    AgentConfig config_;
    std::size_t n_classes_;
    std::size_t minibatch_;
    Mlp active_;
    Mlp target_;
    AdamState adam_;
    ReplayMemory memory_;
    double epsilon_;
    int decays_ = 0;
};

/// True iff the history holds at least window + 1 values and the latest is
/// within `range` of each of the `window` values before it.
bool is_stable(std::span<const double> history, std::size_t window, double range);

struct EpisodeRecord {
    int episode = 0;
    double epsilon = 0.0;    // after the episode's replays
    double mean_loss = 0.0;  // mean of the episode's replay losses
};

struct DrlResult {
    Mlp network;
    std::vector<EpisodeRecord> episodes;
    std::vector<double> epsilon_trace;  // epsilon after every replay
    std::size_t peak_memory = 0;
    std::size_t memory_capacity = 0;
    bool converged = false;
};

/// Episodes of memory-capacity steps over uniformly drawn training flows,
/// replays_per_episode replays each, target sync at episode end, stopping at
/// loss stability. Without convergence the lowest-loss network is returned.
DrlResult train_agent(const Matrix& x, std::span<const std::size_t> labels, std::size_t n_classes,
                      const AgentConfig& config, std::uint64_t seed);

void write_episode_log(std::ostream& out, std::span<const EpisodeRecord> episodes);

}  // namespace flowsentry
