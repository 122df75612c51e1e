#include "knobtuner/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "knobtuner/errors.hpp"

namespace knobtuner {

double priority(double delta, double actor_grad_sq,
                std::optional<double> hint_prior, const BufferConfig& cfg) {
  double p = delta * delta + cfg.lambda1 * actor_grad_sq + cfg.epsilon;
  if (hint_prior) p += cfg.lambda2 * *hint_prior;
  return p;
}

double nstep_return(std::span<const double> rewards, double gamma,
                    double terminal_q) {
  if (rewards.empty()) throw std::invalid_argument("nstep_return: empty window");
  double acc = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    acc += discount * r;
    discount *= gamma;
  }
  return acc + discount * terminal_q;
}

ReplayBuffer::ReplayBuffer(BufferConfig cfg) : cfg_(cfg) {
  if (cfg_.alpha < 0.0 || cfg_.alpha > 1.0) {
    throw ConfigError("replay: alpha must be in [0, 1]");
  }
  if (cfg_.epsilon <= 0.0) throw ConfigError("replay: epsilon must be positive");
  if (cfg_.capacity == 0) throw ConfigError("replay: capacity must be positive");
}

double ReplayBuffer::max_priority() const {
  double m = 0.0;
  for_each([&](std::uint64_t, const Experience& e) {
    m = std::max(m, e.stored_priority);
  });
  return m;
}

double ReplayBuffer::enter_priority() const {
  return empty() ? cfg_.epsilon : max_priority();
}

std::uint64_t ReplayBuffer::push_transition(Experience exp) {
  exp.stored_priority = enter_priority();
  std::uint64_t id = next_id_++;
  transitions_.emplace_back(id, std::move(exp));
  if (transitions_.size() > cfg_.capacity) transitions_.pop_front();
  return id;
}

std::uint64_t ReplayBuffer::push_demonstration(Experience exp) {
  if (!exp.hint_id) {
    throw std::invalid_argument("push_demonstration: record has no hint link");
  }
  exp.stored_priority = enter_priority();
  std::uint64_t id = next_id_++;
  demos_.emplace_back(id, std::move(exp));
  return id;
}

std::vector<ReplayBuffer::Sample> ReplayBuffer::sample(std::size_t batch,
                                                       Rng& rng) const {
  if (empty()) throw std::logic_error("sample: empty replay buffer");

  std::vector<std::uint64_t> ids;
  std::vector<const Experience*> exps;
  std::vector<double> cumulative;
  ids.reserve(size());
  exps.reserve(size());
  cumulative.reserve(size());
  double total = 0.0;
  for_each([&](std::uint64_t id, const Experience& e) {
    total += std::pow(e.stored_priority, cfg_.alpha);
    ids.push_back(id);
    exps.push_back(&e);
    cumulative.push_back(total);
  });

  std::vector<Sample> out;
  out.reserve(batch);
  double max_weight = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double u = rng.uniform() * total;
    std::size_t i = static_cast<std::size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) -
        cumulative.begin());
    if (i >= ids.size()) i = ids.size() - 1;
    Sample s;
    s.id = ids[i];
    s.exp = exps[i];
    double prev = i == 0 ? 0.0 : cumulative[i - 1];
    s.probability = (cumulative[i] - prev) / total;
    if (cfg_.is_weights) {
      s.is_weight = std::pow(static_cast<double>(size()) * s.probability,
                             -cfg_.is_exponent);
      max_weight = std::max(max_weight, s.is_weight);
    }
    out.push_back(s);
  }
  if (cfg_.is_weights && max_weight > 0.0) {
    for (Sample& s : out) s.is_weight /= max_weight;
  }
  return out;
}

void ReplayBuffer::update_priorities(std::span<const std::uint64_t> ids,
                                     std::span<const double> deltas,
                                     std::span<const double> grad_sqs,
                                     const std::map<std::uint64_t, double>& hint_priors) {
  if (ids.size() != deltas.size() || ids.size() != grad_sqs.size()) {
    throw std::invalid_argument("update_priorities: length mismatch");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Experience* exp = find(ids[i]);
    if (!exp) continue;  // evicted since sampling
    exp->td_error = deltas[i];
    exp->actor_grad_sq = grad_sqs[i];
    std::optional<double> prior;
    if (exp->hint_id) {
      auto it = hint_priors.find(*exp->hint_id);
      prior = it != hint_priors.end() ? it->second : 0.0;
    }
    exp->stored_priority = priority(deltas[i], grad_sqs[i], prior, cfg_);
  }
}

void ReplayBuffer::attach_window(std::uint64_t id, NStepWindow window) {
  if (Experience* exp = find(id)) exp->window = std::move(window);
}

const Experience* ReplayBuffer::find(std::uint64_t id) const {
  return const_cast<ReplayBuffer*>(this)->find(id);
}

Experience* ReplayBuffer::find(std::uint64_t id) {
  for (auto& [eid, exp] : demos_) {
    if (eid == id) return &exp;
  }
  // Transitions are FIFO with monotone ids: binary search by id.
  auto it = std::lower_bound(
      transitions_.begin(), transitions_.end(), id,
      [](const auto& entry, std::uint64_t key) { return entry.first < key; });
  if (it != transitions_.end() && it->first == id) return &it->second;
  return nullptr;
}

void ReplayBuffer::restore(std::uint64_t id, Experience exp) {
  next_id_ = std::max(next_id_, id + 1);
  if (exp.hint_id) {
    demos_.emplace_back(id, std::move(exp));
  } else {
    transitions_.emplace_back(id, std::move(exp));
  }
}

}  // namespace knobtuner
