#pragma once

#include <vector>

#include <Eigen/Core>

#include "knobtuner/rng.hpp"

namespace knobtuner {

// Small fully connected network with ReLU hidden layers. Parameters live in
// one flat vector (per layer: column-major weights, then biases) so the
// optimizer, soft target updates, checkpoints and finite-difference tests
// all operate on a single contiguous array. All arithmetic is double.
struct MlpShape {
  int input = 0;
  std::vector<int> hidden;
  int output = 0;
  enum class OutputActivation { Tanh, Identity };
  OutputActivation out = OutputActivation::Identity;

  std::vector<int> layer_sizes() const;  // input, hidden..., output
  int param_count() const;
};

class Mlp {
 public:
  // rng == nullptr leaves parameters zero (target copies overwrite anyway).
  // Hidden layers use fan-in scaled uniform init; the output layer starts
  // near zero so initial actions sit mid-range.
  Mlp(MlpShape shape, Rng* rng);

  const MlpShape& shape() const { return shape_; }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  struct Trace {
    std::vector<Eigen::VectorXd> inputs;  // activation entering each layer
    std::vector<Eigen::VectorXd> pre;     // pre-activation per layer
    Eigen::VectorXd output;
  };
  Eigen::VectorXd forward(const Eigen::VectorXd& x, Trace& trace) const;

  // Backpropagates d_loss/d_output. When param_grad is non-null the
  // parameter gradient is accumulated into it (same layout as params());
  // the return value is d_loss/d_input.
  Eigen::VectorXd backward(const Trace& trace, const Eigen::VectorXd& d_out,
                           Eigen::VectorXd* param_grad) const;

  // Sum of squared weight-matrix entries (biases excluded) and its gradient,
  // halved: the L2 regularization term.
  double l2_weights() const;
  void add_l2_gradient(double scale, Eigen::VectorXd& grad) const;

 private:
  struct LayerView {
    int w_offset, rows, cols, b_offset;
  };

  MlpShape shape_;
  std::vector<LayerView> layers_;
  Eigen::VectorXd params_;
};

// Per-parameter adaptive moment estimation.
class Adam {
 public:
  Adam(int n, double lr);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  double learning_rate() const { return lr_; }
  long step_count() const { return t_; }
  const Eigen::VectorXd& m() const { return m_; }
  const Eigen::VectorXd& v() const { return v_; }
  void restore(long t, Eigen::VectorXd m, Eigen::VectorXd v);

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  Eigen::VectorXd m_, v_;
};

}  // namespace knobtuner
