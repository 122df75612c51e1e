#pragma once

#include <optional>
#include <vector>

#include "knobtuner/mlp.hpp"
#include "knobtuner/rng.hpp"

namespace knobtuner {

struct AgentHyper {
  std::vector<int> hidden = {64, 64};
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double tau_soft = 0.005;
  double beta1 = 0.5;    // n-step loss weight
  double beta2 = 1e-5;   // L2 regularization weight
  double noise_sigma = 0.2;
  double noise_decay = 0.99;  // per-episode exploration decay
};

// Deterministic-policy actor/critic pair with target copies. The actor maps
// state -> tanh-bounded action; the critic maps (state, action) -> scalar.
// Losses and gradients are analytic; targets are supplied by the caller
// (computed against the target networks, no gradient flows through them).
class Agent {
 public:
  Agent(int state_dim, int action_dim, AgentHyper hp, Rng& rng);

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  const AgentHyper& hyper() const { return hp_; }

  Eigen::VectorXd act(const Eigen::VectorXd& state) const;
  double q_value(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;
  Eigen::VectorXd act_target(const Eigen::VectorXd& state) const;
  double q_target(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;

  // Policy output plus clamped Gaussian noise; noise_scale 0 is greedy.
  Eigen::VectorXd explore(const Eigen::VectorXd& state, double noise_scale,
                          Rng& rng) const;

  struct CriticBatch {
    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> actions;
    std::vector<double> targets_1step;                 // y1 per sample
    std::vector<std::optional<double>> targets_nstep;  // Rn; nullopt skips Ln
    std::vector<double> is_weights;                    // empty -> all ones
  };
  struct CriticEval {
    double loss = 0.0;
    double l1_mean = 0.0;             // unweighted mean of the 1-step term
    std::vector<double> deltas;       // y1 - Q(s, a) per sample
    Eigen::VectorXd grad;
  };
  // L = mean_i w_i (0.5 (y1 - Q)^2 + beta1 0.5 (Rn - Q)^2) + beta2 L2(critic)
  CriticEval critic_loss(const CriticBatch& batch) const;
  CriticEval critic_update(const CriticBatch& batch);

  struct ActorEval {
    double loss = 0.0;
    std::vector<double> grad_a_sq;  // |grad_a Q(s, pi(s))|^2 per sample
    Eigen::VectorXd grad;
  };
  // L = -mean_i w_i Q(s, pi(s)) + beta2 L2(actor); gradient by chain rule
  // of the critic through the policy action.
  ActorEval actor_loss(const std::vector<Eigen::VectorXd>& states,
                       const std::vector<double>& is_weights) const;
  ActorEval actor_update(const std::vector<Eigen::VectorXd>& states,
                         const std::vector<double>& is_weights);

  // theta' <- tau * theta + (1 - tau) * theta'
  void soft_update_targets();

  Mlp& actor() { return actor_; }
  Mlp& critic() { return critic_; }
  Mlp& actor_target() { return actor_target_; }
  Mlp& critic_target() { return critic_target_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  const Mlp& actor_target() const { return actor_target_; }
  const Mlp& critic_target() const { return critic_target_; }
  Adam& actor_opt() { return actor_opt_; }
  Adam& critic_opt() { return critic_opt_; }
  const Adam& actor_opt() const { return actor_opt_; }
  const Adam& critic_opt() const { return critic_opt_; }

 private:
  int state_dim_, action_dim_;
  AgentHyper hp_;
  Mlp actor_, critic_, actor_target_, critic_target_;
  Adam actor_opt_, critic_opt_;
};

}  // namespace knobtuner
