#include "flowsentry/drl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "flowsentry/csv.hpp"
#include "flowsentry/error.hpp"

namespace flowsentry {

void AgentConfig::validate() const {
    if (!(epsilon_floor >= 0.0 && epsilon_floor <= epsilon_start && epsilon_start <= 1.0)) {
        throw InvalidArgument("epsilon needs 0 <= floor <= start <= 1");
    }
    if (epsilon_decay < 0.0) throw InvalidArgument("epsilon decay must be non-negative");
    if (replays_per_episode < 1 || replay_epochs < 1 || replay_batch_size == 0) {
        throw InvalidArgument("replay counts must be positive");
    }
    if (min_stable_episodes == 0 || stability_range < 0.0) throw InvalidArgument("bad stability settings");
    auto fraction_ok = [](double f) { return f > 0.0 && f < 1.0; };
    if (!fraction_ok(minibatch_fraction) || !fraction_ok(memory_fraction)) {
        throw InvalidArgument("memory and minibatch fractions must lie in (0, 1)");
    }
    if (max_episodes < 1) throw InvalidArgument("max_episodes must be positive");
}

nlohmann::json to_json(const AgentConfig& c) {
    return {{"epsilon_start", c.epsilon_start},
            {"epsilon_decay", c.epsilon_decay},
            {"epsilon_floor", c.epsilon_floor},
            {"replays_per_episode", c.replays_per_episode},
            {"replay_epochs", c.replay_epochs},
            {"replay_batch_size", c.replay_batch_size},
            {"min_stable_episodes", c.min_stable_episodes},
            {"stability_range", c.stability_range},
            {"minibatch_fraction", c.minibatch_fraction},
            {"memory_fraction", c.memory_fraction},
            {"max_episodes", c.max_episodes}};
}

AgentConfig agent_config_from_json(const nlohmann::json& j) {
    AgentConfig c;
    c.epsilon_start = j.value("epsilon_start", c.epsilon_start);
    c.epsilon_decay = j.value("epsilon_decay", c.epsilon_decay);
    c.epsilon_floor = j.value("epsilon_floor", c.epsilon_floor);
    c.replays_per_episode = j.value("replays_per_episode", c.replays_per_episode);
    c.replay_epochs = j.value("replay_epochs", c.replay_epochs);
    c.replay_batch_size = j.value("replay_batch_size", c.replay_batch_size);
    c.min_stable_episodes = j.value("min_stable_episodes", c.min_stable_episodes);
    c.stability_range = j.value("stability_range", c.stability_range);
    c.minibatch_fraction = j.value("minibatch_fraction", c.minibatch_fraction);
    c.memory_fraction = j.value("memory_fraction", c.memory_fraction);
    c.max_episodes = j.value("max_episodes", c.max_episodes);
    c.validate();
    return c;
}

std::size_t fraction_count(double fraction, std::size_t n) {
    const auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    return std::max<std::size_t>(1, count);
}

Environment::Environment(const Matrix& x, std::span<const std::size_t> labels, std::size_t n_classes)
    : x_(x), labels_(labels), n_classes_(n_classes) {
    if (x.rows() != labels.size()) throw InvalidArgument("environment features and labels differ in length");
    if (n_classes < 2) throw InvalidArgument("environment needs at least two classes");
    cursor_ = 0;
}

void Environment::reset(std::vector<std::size_t> rows) {
    for (auto r : rows) {
        if (r >= x_.rows()) throw InvalidArgument("episode row out of range");
    }
    rows_ = std::move(rows);
    cursor_ = 0;
}

std::span<const double> Environment::state() const {
    if (done()) throw InvalidArgument("no state: the episode is over");
    return x_.row(rows_[cursor_]);
}

std::size_t Environment::current_label() const {
    if (done()) throw InvalidArgument("no label: the episode is over");
    return labels_[rows_[cursor_]];
}

StepResult Environment::step(std::size_t action) {
    if (done()) throw InvalidArgument("step called after the episode ended");
    StepResult r;
    r.reward = action == labels_[rows_[cursor_]] ? 1.0 : 0.0;
    ++cursor_;
    r.done = done();
    return r;
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw InvalidArgument("replay memory capacity must be positive");
}

void ReplayMemory::remember(Experience e) {
    items_.push_back(std::move(e));
    while (items_.size() > capacity_) items_.pop_front();
}

std::vector<const Experience*> ReplayMemory::sample(std::size_t k, Rng& rng) const {
    if (k > items_.size()) throw InvalidArgument("cannot sample more experiences than stored");
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<const Experience*> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
        out.push_back(&items_[idx[i]]);
    }
    return out;
}

Matrix replay_targets(const Mlp& target_net, std::span<const Experience* const> batch) {
    const std::size_t outputs = target_net.output_size();
    Matrix t(batch.size(), outputs);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& e = *batch[i];
        if (target_net.head() == OutputActivation::Sigmoid) {
            if (e.action > 1) throw InvalidArgument("binary action out of range");
            t(i, 0) = e.action == 1 ? e.reward : 1.0 - e.reward;
            continue;
        }
        if (e.action >= outputs) throw InvalidArgument("action out of range");
        auto q = forward(target_net, e.state);
        q[e.action] = e.reward;
        double sum = std::accumulate(q.begin(), q.end(), 0.0);
        for (std::size_t k = 0; k < outputs; ++k) {
            t(i, k) = sum > 0.0 ? q[k] / sum : 1.0 / static_cast<double>(outputs);
        }
    }
    return t;
}

Agent::Agent(std::size_t n_features, std::size_t n_classes, std::size_t train_size, const AgentConfig& config,
             std::uint64_t seed)
    : config_(config),
      n_classes_(n_classes),
      minibatch_(fraction_count(config.minibatch_fraction, train_size)),
      active_(Mlp::table8(n_features, n_classes)),
      adam_(0),
      memory_(fraction_count(config.memory_fraction, train_size)),
      epsilon_(config.epsilon_start) {
    config_.validate();
    active_.init_he_uniform(seed);
    target_ = active_;
    adam_ = AdamState(active_.params().size());
}

ActionChoice Agent::select_action(std::span<const double> state, Rng& rng) const {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon_) {
        std::uniform_int_distribution<std::size_t> pick(0, n_classes_ - 1);
        return {pick(rng), true};
    }
    return {predicted_class(forward(active_, state)), false};
}

std::optional<double> Agent::experience_replay(Rng& rng, std::vector<double>* epoch_losses) {
    if (memory_.size() < minibatch_) return std::nullopt;
    auto batch = memory_.sample(minibatch_, rng);
    Matrix targets = replay_targets(target_, batch);
    Matrix states(batch.size(), active_.input_size());
    for (std::size_t i = 0; i < batch.size(); ++i) std::copy(batch[i]->state.begin(), batch[i]->state.end(), states.row(i).begin());

    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    double loss_sum = 0.0;
    for (int epoch = 0; epoch < config_.replay_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config_.replay_batch_size) {
            const auto end = std::min(order.size(), start + config_.replay_batch_size);
            std::span<const std::size_t> rows(order.data() + start, end - start);
            epoch_loss += train_step(active_, adam_, states, targets, rows) * static_cast<double>(rows.size());
        }
        loss_sum += epoch_loss / static_cast<double>(order.size());
        if (epoch_losses) epoch_losses->push_back(epoch_loss / static_cast<double>(order.size()));
    }
    ++decays_;
    epsilon_ = std::max(config_.epsilon_floor, config_.epsilon_start - config_.epsilon_decay * decays_);
    return loss_sum / config_.replay_epochs;
}

bool is_stable(std::span<const double> history, std::size_t window, double range) {
    if (history.size() < window + 1) return false;
    const double latest = history.back();
    for (std::size_t i = history.size() - 1 - window; i + 1 < history.size(); ++i) {
        if (std::abs(latest - history[i]) > range) return false;
    }
    return true;
}

DrlResult train_agent(const Matrix& x, std::span<const std::size_t> labels, std::size_t n_classes,
                      const AgentConfig& config, std::uint64_t seed) {
    config.validate();
    if (x.rows() == 0) throw InvalidArgument("DRL training set is empty");
    if (x.rows() != labels.size()) throw InvalidArgument("DRL features and labels differ in length");
    for (auto l : labels) {
        if (l >= n_classes) throw InvalidArgument("DRL label out of range");
    }

    Agent agent(x.cols(), n_classes, x.rows(), config, derive_seed(seed, 0));
    Environment env(x, labels, n_classes);
    auto rng = make_rng(seed, 1);
    const std::size_t budget = agent.memory().capacity();

    DrlResult result;
    result.memory_capacity = budget;
    std::vector<double> history;
    std::optional<double> best_loss;
    Mlp best = agent.active();

    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), 0);
    for (int episode = 0; episode < config.max_episodes; ++episode) {
        std::vector<std::size_t> rows;
        rows.reserve(budget);
        const std::size_t draw = std::min(budget, all.size());
        for (std::size_t i = 0; i < draw; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
            std::swap(all[i], all[pick(rng)]);
            rows.push_back(all[i]);
        }
        env.reset(std::move(rows));
        while (!env.done()) {
            auto state = env.state();
            auto choice = agent.select_action(state, rng);
            auto step = env.step(choice.action);
            agent.remember({std::vector<double>(state.begin(), state.end()), choice.action, step.reward});
            result.peak_memory = std::max(result.peak_memory, agent.memory().size());
        }

        double loss_total = 0.0;
        int replays = 0;
        for (int r = 0; r < config.replays_per_episode; ++r) {
            auto loss = agent.experience_replay(rng);
            if (!loss) continue;
            loss_total += *loss;
            ++replays;
            result.epsilon_trace.push_back(agent.epsilon());
        }
        agent.sync_target();
        if (replays == 0) continue;

        const double mean = loss_total / replays;
        history.push_back(mean);
        result.episodes.push_back({episode, agent.epsilon(), mean});
        if (!best_loss || mean < *best_loss) {
            best_loss = mean;
            best = agent.active();
        }
        if (is_stable(history, config.min_stable_episodes, config.stability_range)) {
            result.converged = true;
            result.network = agent.active();
            return result;
        }
    }
    result.network = std::move(best);
    return result;
}

void write_episode_log(std::ostream& out, std::span<const EpisodeRecord> episodes) {
    out << "episode,epsilon,mean_replay_loss\n";
    for (const auto& e : episodes) {
        out << e.episode << ',' << csv::format_double(e.epsilon) << ',' << csv::format_double(e.mean_loss) << '\n';
    }
}

}  // namespace flowsentry
