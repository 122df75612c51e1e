#include "knobtuner/agent.hpp"

#include <cmath>

#include "knobtuner/errors.hpp"

namespace knobtuner {

namespace {

MlpShape actor_shape(int state_dim, int action_dim, const AgentHyper& hp) {
  return {state_dim, hp.hidden, action_dim, MlpShape::OutputActivation::Tanh};
}

MlpShape critic_shape(int state_dim, int action_dim, const AgentHyper& hp) {
  return {state_dim + action_dim, hp.hidden, 1,
          MlpShape::OutputActivation::Identity};
}

Eigen::VectorXd concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw TrainError(std::string(what) + " is not finite");
  }
}

}  // namespace

Agent::Agent(int state_dim, int action_dim, AgentHyper hp, Rng& rng)
    : state_dim_(state_dim),
      action_dim_(action_dim),
      hp_(std::move(hp)),
      actor_(actor_shape(state_dim, action_dim, hp_), &rng),
      critic_(critic_shape(state_dim, action_dim, hp_), &rng),
      actor_target_(actor_shape(state_dim, action_dim, hp_), nullptr),
      critic_target_(critic_shape(state_dim, action_dim, hp_), nullptr),
      actor_opt_(actor_.params().size(), hp_.actor_lr),
      critic_opt_(critic_.params().size(), hp_.critic_lr) {
  actor_target_.params() = actor_.params();
  critic_target_.params() = critic_.params();
}

Eigen::VectorXd Agent::act(const Eigen::VectorXd& state) const {
  return actor_.forward(state);
}

double Agent::q_value(const Eigen::VectorXd& state,
                      const Eigen::VectorXd& action) const {
  return critic_.forward(concat(state, action))[0];
}

Eigen::VectorXd Agent::act_target(const Eigen::VectorXd& state) const {
  return actor_target_.forward(state);
}

double Agent::q_target(const Eigen::VectorXd& state,
                       const Eigen::VectorXd& action) const {
  return critic_target_.forward(concat(state, action))[0];
}

Eigen::VectorXd Agent::explore(const Eigen::VectorXd& state, double noise_scale,
                               Rng& rng) const {
  Eigen::VectorXd action = act(state);
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    action[i] = std::clamp(action[i] + noise_scale * rng.normal(), -1.0, 1.0);
  }
  return action;
}

Agent::CriticEval Agent::critic_loss(const CriticBatch& batch) const {
  const std::size_t n = batch.states.size();
  if (n == 0 || batch.actions.size() != n || batch.targets_1step.size() != n ||
      batch.targets_nstep.size() != n) {
    throw TrainError("critic_loss: inconsistent batch");
  }
  CriticEval eval;
  eval.grad = Eigen::VectorXd::Zero(critic_.params().size());
  eval.deltas.resize(n);
  double inv_n = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    double w = batch.is_weights.empty() ? 1.0 : batch.is_weights[i];
    Mlp::Trace trace;
    double q = critic_.forward(concat(batch.states[i], batch.actions[i]), trace)[0];

    double e1 = q - batch.targets_1step[i];
    eval.deltas[i] = batch.targets_1step[i] - q;
    double d_q = w * e1;
    eval.loss += w * 0.5 * e1 * e1;
    eval.l1_mean += 0.5 * e1 * e1;
    if (batch.targets_nstep[i]) {
      double en = q - *batch.targets_nstep[i];
      eval.loss += w * hp_.beta1 * 0.5 * en * en;
      d_q += w * hp_.beta1 * en;
    }
    Eigen::VectorXd d_out(1);
    d_out[0] = d_q * inv_n;
    critic_.backward(trace, d_out, &eval.grad);
  }
  eval.loss *= inv_n;
  eval.l1_mean *= inv_n;
  eval.loss += hp_.beta2 * critic_.l2_weights();
  critic_.add_l2_gradient(hp_.beta2, eval.grad);
  check_finite(eval.loss, "critic loss");
  return eval;
}

Agent::CriticEval Agent::critic_update(const CriticBatch& batch) {
  CriticEval eval = critic_loss(batch);
  critic_opt_.step(critic_.params(), eval.grad);
  return eval;
}

Agent::ActorEval Agent::actor_loss(const std::vector<Eigen::VectorXd>& states,
                                   const std::vector<double>& is_weights) const {
  const std::size_t n = states.size();
  if (n == 0) throw TrainError("actor_loss: empty batch");
  ActorEval eval;
  eval.grad = Eigen::VectorXd::Zero(actor_.params().size());
  eval.grad_a_sq.resize(n);
  double inv_n = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    double w = is_weights.empty() ? 1.0 : is_weights[i];
    Mlp::Trace actor_trace;
    Eigen::VectorXd action = actor_.forward(states[i], actor_trace);

    Mlp::Trace critic_trace;
    double q = critic_.forward(concat(states[i], action), critic_trace)[0];
    eval.loss -= w * q * inv_n;

    Eigen::VectorXd one(1);
    one[0] = 1.0;
    Eigen::VectorXd d_input = critic_.backward(critic_trace, one, nullptr);
    Eigen::VectorXd d_action = d_input.tail(action_dim_);
    eval.grad_a_sq[i] = d_action.squaredNorm();

    // dL/d_action = -w/n * dQ/d_action, chained through the actor.
    actor_.backward(actor_trace, (-w * inv_n) * d_action, &eval.grad);
  }
  eval.loss += hp_.beta2 * actor_.l2_weights();
  actor_.add_l2_gradient(hp_.beta2, eval.grad);
  check_finite(eval.loss, "actor loss");
  return eval;
}

Agent::ActorEval Agent::actor_update(const std::vector<Eigen::VectorXd>& states,
                                     const std::vector<double>& is_weights) {
  ActorEval eval = actor_loss(states, is_weights);
  actor_opt_.step(actor_.params(), eval.grad);
  return eval;
}

void Agent::soft_update_targets() {
  double tau = hp_.tau_soft;
  actor_target_.params() =
      tau * actor_.params() + (1.0 - tau) * actor_target_.params();
  critic_target_.params() =
      tau * critic_.params() + (1.0 - tau) * critic_target_.params();
}

}  // namespace knobtuner
