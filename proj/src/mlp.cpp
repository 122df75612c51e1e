#include "knobtuner/mlp.hpp"

#include <cmath>

#include "knobtuner/errors.hpp"

namespace knobtuner {

std::vector<int> MlpShape::layer_sizes() const {
  std::vector<int> sizes;
  sizes.push_back(input);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output);
  return sizes;
}

int MlpShape::param_count() const {
  auto sizes = layer_sizes();
  int n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    n += sizes[l + 1] * sizes[l] + sizes[l + 1];
  }
  return n;
}

Mlp::Mlp(MlpShape shape, Rng* rng) : shape_(std::move(shape)) {
  auto sizes = shape_.layer_sizes();
  int offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    LayerView v;
    v.rows = sizes[l + 1];
    v.cols = sizes[l];
    v.w_offset = offset;
    offset += v.rows * v.cols;
    v.b_offset = offset;
    offset += v.rows;
    layers_.push_back(v);
  }
  params_ = Eigen::VectorXd::Zero(offset);

  if (rng) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerView& v = layers_[l];
      bool last = l + 1 == layers_.size();
      double scale = last ? 3e-3 : 1.0 / std::sqrt(static_cast<double>(v.cols));
      for (int i = 0; i < v.rows * v.cols; ++i) {
        params_[v.w_offset + i] = rng->uniform(-scale, scale);
      }
      for (int i = 0; i < v.rows; ++i) {
        params_[v.b_offset + i] = rng->uniform(-scale, scale);
      }
    }
  }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  Trace trace;
  return forward(x, trace);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x, Trace& trace) const {
  if (x.size() != shape_.input) {
    throw TrainError("mlp forward: input has " + std::to_string(x.size()) +
                     " components, expected " + std::to_string(shape_.input));
  }
  trace.inputs.clear();
  trace.pre.clear();
  Eigen::VectorXd act = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerView& v = layers_[l];
    Eigen::Map<const Eigen::MatrixXd> W(params_.data() + v.w_offset, v.rows, v.cols);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + v.b_offset, v.rows);
    trace.inputs.push_back(act);
    Eigen::VectorXd pre = W * act + b;
    trace.pre.push_back(pre);
    if (l + 1 < layers_.size()) {
      act = pre.cwiseMax(0.0);
    } else if (shape_.out == MlpShape::OutputActivation::Tanh) {
      act = pre.array().tanh().matrix();
    } else {
      act = pre;
    }
  }
  trace.output = act;
  return act;
}

Eigen::VectorXd Mlp::backward(const Trace& trace, const Eigen::VectorXd& d_out,
                              Eigen::VectorXd* param_grad) const {
  Eigen::VectorXd d_act = d_out;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const LayerView& v = layers_[li];
    Eigen::Map<const Eigen::MatrixXd> W(params_.data() + v.w_offset, v.rows, v.cols);

    Eigen::VectorXd d_pre;
    if (li + 1 == layers_.size()) {
      if (shape_.out == MlpShape::OutputActivation::Tanh) {
        Eigen::ArrayXd t = trace.pre[li].array().tanh();
        d_pre = (d_act.array() * (1.0 - t * t)).matrix();
      } else {
        d_pre = d_act;
      }
    } else {
      d_pre = (d_act.array() * (trace.pre[li].array() > 0.0).cast<double>()).matrix();
    }

    if (param_grad) {
      Eigen::Map<Eigen::MatrixXd> dW(param_grad->data() + v.w_offset, v.rows, v.cols);
      Eigen::Map<Eigen::VectorXd> db(param_grad->data() + v.b_offset, v.rows);
      dW.noalias() += d_pre * trace.inputs[li].transpose();
      db += d_pre;
    }
    d_act = W.transpose() * d_pre;
  }
  return d_act;
}

double Mlp::l2_weights() const {
  double sum = 0.0;
  for (const LayerView& v : layers_) {
    sum += params_.segment(v.w_offset, v.rows * v.cols).squaredNorm();
  }
  return 0.5 * sum;
}

void Mlp::add_l2_gradient(double scale, Eigen::VectorXd& grad) const {
  for (const LayerView& v : layers_) {
    grad.segment(v.w_offset, v.rows * v.cols) +=
        scale * params_.segment(v.w_offset, v.rows * v.cols);
  }
}

Adam::Adam(int n, double lr)
    : lr_(lr), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_.array().matrix() +
       (1.0 - beta2_) * grad.array().square().matrix();
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -=
      lr_ * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + eps_);
}

void Adam::restore(long t, Eigen::VectorXd m, Eigen::VectorXd v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace knobtuner
