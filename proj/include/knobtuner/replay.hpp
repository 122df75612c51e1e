#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "knobtuner/rng.hpp"

namespace knobtuner {

// Tail window for an n-step return: up to n rewards following the record's
// own step (its own reward first) and the state reached after the last of
// them. Truncated below n at episode boundaries.
struct NStepWindow {
  std::vector<double> rewards;
  std::vector<double> end_state;
};

// Unified replay record. A linked hint id marks a demonstration; those are
// never evicted and their priority tracks the hint's current priority.
struct Experience {
  std::vector<double> state;
  std::vector<double> action;   // normalized, what was actually evaluated
  double reward = 0.0;          // shaped reward (demonstrations: perf_imp)
  std::vector<double> next_state;
  std::optional<std::uint64_t> hint_id;
  std::optional<NStepWindow> window;
  double td_error = 0.0;
  double actor_grad_sq = 0.0;
  double stored_priority = 0.0;

  bool is_demonstration() const { return hint_id.has_value(); }
};

struct BufferConfig {
  std::size_t capacity = 4096;  // transitions only; demonstrations are extra
  double alpha = 0.3;           // prioritization exponent
  double epsilon = 1e-3;        // priority floor
  double lambda1 = 0.05;        // actor-gradient weight
  double lambda2 = 1.0;         // hint-priority weight
  std::size_t nstep = 5;
  double gamma = 0.99;
  // Importance-sampling correction is off by default: the sampling and
  // priority definitions here do not include it, and default behavior
  // follows them exactly. The flag enables standard (N*P)^-is_exponent
  // weights, normalized by the batch max, for experimentation.
  bool is_weights = false;
  double is_exponent = 0.4;
};

// p = delta^2 + lambda1 * |grad_a Q|^2 + epsilon + lambda2 * hint_prior,
// with the last term absent for plain transitions.
double priority(double delta, double actor_grad_sq,
                std::optional<double> hint_prior, const BufferConfig& cfg);

// R = sum_i gamma^i r_i + gamma^len * terminal_q. Throws on an empty window.
double nstep_return(std::span<const double> rewards, double gamma,
                    double terminal_q);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(BufferConfig cfg);

  const BufferConfig& config() const { return cfg_; }

  // FIFO-evicts the oldest transition at capacity; returns the record id.
  std::uint64_t push_transition(Experience exp);
  // Requires exp.hint_id; never counted against capacity, never evicted.
  std::uint64_t push_demonstration(Experience exp);

  struct Sample {
    std::uint64_t id = 0;
    const Experience* exp = nullptr;
    double probability = 0.0;
    double is_weight = 1.0;
  };
  // Draws `batch` records with replacement, P(i) = p_i^alpha / sum p^alpha.
  std::vector<Sample> sample(std::size_t batch, Rng& rng) const;

  // Recomputes the stored priority per id from fresh TD errors and actor
  // gradients; demonstrations read their hint's priority from `hint_priors`
  // (absent entries keep the last known value). Evicted ids are skipped.
  void update_priorities(std::span<const std::uint64_t> ids,
                         std::span<const double> deltas,
                         std::span<const double> grad_sqs,
                         const std::map<std::uint64_t, double>& hint_priors);

  // Completes the n-step window of a stored record; no-op if evicted.
  void attach_window(std::uint64_t id, NStepWindow window);

  const Experience* find(std::uint64_t id) const;
  Experience* find(std::uint64_t id);

  std::size_t size() const { return demos_.size() + transitions_.size(); }
  std::size_t transition_count() const { return transitions_.size(); }
  std::size_t demonstration_count() const { return demos_.size(); }
  bool empty() const { return size() == 0; }

  double max_priority() const;

  // Deterministic iteration order: demonstrations first, then transitions,
  // both oldest first. Used by sampling, checkpoints and diagnostics.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [id, exp] : demos_) fn(id, exp);
    for (const auto& [id, exp] : transitions_) fn(id, exp);
  }

  // Checkpoint support: restores a record with its original id.
  void restore(std::uint64_t id, Experience exp);
  std::uint64_t next_id() const { return next_id_; }
  void set_next_id(std::uint64_t id) { next_id_ = id; }

 private:
  double enter_priority() const;

  BufferConfig cfg_;
  std::deque<std::pair<std::uint64_t, Experience>> demos_;
  std::deque<std::pair<std::uint64_t, Experience>> transitions_;
  std::uint64_t next_id_ = 0;
};

}  // namespace knobtuner
