#include "fedtiny/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedtiny/error.hpp"

namespace fedtiny {

namespace {

void check_finite(const Tensor& t, const char* what) {
  require(t.all_finite(), ErrorCode::kState, std::string("non-finite values produced by ") + what);
}

Tensor linear_forward(const LinearLayer& lin, const Tensor& x) {
  const auto batch = x.rows(), in = lin.in_features(), out = lin.out_features();
  // Transposed copy keeps the inner loop a contiguous axpy.
  std::vector<double> wt(in * out);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = lin.weight[o * in + i];
  Tensor y = Tensor::matrix(batch, out);
  for (std::size_t b = 0; b < batch; ++b) {
    double* yr = y.data() + b * out;
    std::copy(lin.bias.data(), lin.bias.data() + out, yr);
    const double* xr = x.data() + b * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;
      const double* wr = wt.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  return y;
}

Tensor bn_apply_stored(const BNState& s, const Tensor& x) {
  const auto batch = x.rows(), f = x.cols();
  std::vector<double> a(f), c(f);
  for (std::size_t j = 0; j < f; ++j) {
    a[j] = s.scale[j] / std::sqrt(s.var[j] + s.eps);
    c[j] = s.shift[j] - a[j] * s.mean[j];
  }
  Tensor y = Tensor::matrix(batch, f);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < f; ++j) y.at(b, j) = a[j] * x.at(b, j) + c[j];
  return y;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

template <class Net>
Tensor run_forward(Net& net, const Tensor& batch, Mode mode, ForwardCache* cache) {
  require(batch.rank() == 2, ErrorCode::kShapeMismatch, "batch must be a rank-2 tensor");
  require(batch.cols() == net.input_dim(), ErrorCode::kShapeMismatch,
          "batch width " + std::to_string(batch.cols()) + " does not match network input " +
              std::to_string(net.input_dim()));
  const auto n = batch.rows();
  if (mode == Mode::kTrain)
    require(n >= 2, ErrorCode::kInvalidArgument, "train-mode forward needs a batch of at least 2");
  if (cache) {
    cache->mode = mode;
    cache->batch = n;
    cache->inputs.assign(net.size(), Tensor{});
    cache->bn_xhat.assign(net.size(), Tensor{});
    cache->bn_inv_std.assign(net.size(), {});
  }

  Tensor x = batch;
  for (std::size_t li = 0; li < net.size(); ++li) {
    auto& layer = net.layer(li);
    Tensor y;
    if (auto* lin = std::get_if<LinearLayer>(&layer)) {
      y = linear_forward(*lin, x);
    } else if (auto* bnl = std::get_if<BatchNormLayer>(&layer)) {
      auto& s = bnl->state;
      if (mode == Mode::kEval) {
        y = bn_apply_stored(s, x);
        if (cache) {
          std::vector<double> inv(s.features());
          Tensor xhat = Tensor::matrix(n, s.features());
          for (std::size_t j = 0; j < s.features(); ++j) inv[j] = 1.0 / std::sqrt(s.var[j] + s.eps);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < s.features(); ++j)
              xhat.at(b, j) = (x.at(b, j) - s.mean[j]) * inv[j];
          cache->bn_xhat[li] = std::move(xhat);
          cache->bn_inv_std[li] = std::move(inv);
        }
      } else {
        if constexpr (std::is_const_v<Net>) {
          fail(ErrorCode::kInternal, "train-mode forward on an immutable network");
        } else {
          const auto f = s.features();
          std::vector<double> mean(f, 0.0), var(f, 0.0), inv(f);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < f; ++j) mean[j] += x.at(b, j);
          for (auto& m : mean) m /= static_cast<double>(n);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < f; ++j) {
              const double d = x.at(b, j) - mean[j];
              var[j] += d * d;
            }
          for (auto& v : var) v /= static_cast<double>(n);
          Tensor xhat = Tensor::matrix(n, f);
          y = Tensor::matrix(n, f);
          for (std::size_t j = 0; j < f; ++j) inv[j] = 1.0 / std::sqrt(var[j] + s.eps);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < f; ++j) {
              const double h = (x.at(b, j) - mean[j]) * inv[j];
              xhat.at(b, j) = h;
              y.at(b, j) = s.scale[j] * h + s.shift[j];
            }
          for (std::size_t j = 0; j < f; ++j) {
            s.mean[j] = s.momentum * s.mean[j] + (1.0 - s.momentum) * mean[j];
            s.var[j] = s.momentum * s.var[j] + (1.0 - s.momentum) * var[j];
          }
          if (cache) {
            cache->bn_xhat[li] = std::move(xhat);
            cache->bn_inv_std[li] = std::move(inv);
          }
        }
      }
    } else {
      y = relu_forward(x);
    }
    if (cache) cache->inputs[li] = std::move(x);
    x = std::move(y);
  }
  check_finite(x, "forward");
  if (cache) cache->output = x;
  return x;
}

}  // namespace

std::size_t ForwardCache::activation_values() const noexcept {
  std::size_t n = output.size();
  for (std::size_t i = 1; i < inputs.size(); ++i) n += inputs[i].size();
  return n;
}

Tensor forward(Network& net, const Tensor& batch, Mode mode, ForwardCache* cache) {
  return run_forward(net, batch, mode, cache);
}

Tensor infer(const Network& net, const Tensor& batch, ForwardCache* cache) {
  return run_forward(net, batch, Mode::kEval, cache);
}

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require(logits.rank() == 2, ErrorCode::kShapeMismatch, "logits must be rank 2");
  const auto n = logits.rows(), k = logits.cols();
  require(labels.size() == n, ErrorCode::kShapeMismatch, "label count does not match batch");
  LossAndGrad out{{0.0, n}, Tensor::matrix(n, k)};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t b = 0; b < n; ++b) {
    const int y = labels[b];
    require(y >= 0 && static_cast<std::size_t>(y) < k, ErrorCode::kInvalidArgument,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    auto row = logits.row(b);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = std::log(z) + mx;
    out.loss.value += (log_z - row[y]) * inv_n;
    for (std::size_t j = 0; j < k; ++j)
      out.grad.at(b, j) = (std::exp(row[j] - log_z) - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_n;
  }
  return out;
}

LossAndGrad squared_error(const Tensor& output, const Tensor& target) {
  require(output.shape() == target.shape() && output.rank() == 2, ErrorCode::kShapeMismatch,
          "output and target shapes differ");
  const auto n = output.rows();
  LossAndGrad out{{0.0, n}, Tensor(output.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double d = output[i] - target[i];
    out.loss.value += 0.5 * d * d * inv_n;
    out.grad[i] = d * inv_n;
  }
  return out;
}

Gradients backward_from(const Network& net, const ForwardCache& cache, const Tensor& grad_output,
                        std::span<const std::size_t> only_layers) {
  require(cache.valid_for(net), ErrorCode::kState, "backward needs the cache of a forward pass");
  require(grad_output.shape() == cache.output.shape(), ErrorCode::kShapeMismatch,
          "output gradient shape does not match forward output");
  std::vector<bool> wanted(net.size(), only_layers.empty());
  std::size_t lowest = 0;
  if (!only_layers.empty()) {
    lowest = net.size();
    for (auto i : only_layers) {
      require(i < net.size(), ErrorCode::kInvalidArgument, "requested layer out of range");
      wanted[i] = true;
      lowest = std::min(lowest, i);
    }
  }

  Gradients grads = net.zero_gradients();
  const auto n = cache.batch;
  Tensor dy = grad_output;
  for (std::size_t li = net.size(); li-- > lowest;) {
    const Tensor& x = cache.inputs[li];
    const bool need_dx = li > lowest;
    Tensor dx;
    if (auto* lin = std::get_if<LinearLayer>(&net.layer(li))) {
      const auto in = lin->in_features(), out = lin->out_features();
      if (wanted[li]) {
        auto& dw = grads[li].weight;
        auto& db = grads[li].bias;
        for (std::size_t b = 0; b < n; ++b) {
          const double* xr = x.data() + b * in;
          for (std::size_t o = 0; o < out; ++o) {
            const double g = dy.at(b, o);
            db[o] += g;
            if (g == 0.0) continue;
            double* dwr = dw.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
          }
        }
      }
      if (need_dx) {
        dx = Tensor::matrix(n, in);
        for (std::size_t b = 0; b < n; ++b) {
          double* dxr = dx.data() + b * in;
          for (std::size_t o = 0; o < out; ++o) {
            const double g = dy.at(b, o);
            if (g == 0.0) continue;
            const double* wr = lin->weight.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
          }
        }
      }
    } else if (auto* bnl = std::get_if<BatchNormLayer>(&net.layer(li))) {
      const auto& s = bnl->state;
      const auto f = s.features();
      const auto& xhat = cache.bn_xhat[li];
      const auto& inv = cache.bn_inv_std[li];
      std::vector<double> sum_dy(f, 0.0), sum_dy_xhat(f, 0.0);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t j = 0; j < f; ++j) {
          sum_dy[j] += dy.at(b, j);
          sum_dy_xhat[j] += dy.at(b, j) * xhat.at(b, j);
        }
      if (wanted[li]) {
        for (std::size_t j = 0; j < f; ++j) {
          grads[li].weight[j] = sum_dy_xhat[j];
          grads[li].bias[j] = sum_dy[j];
        }
      }
      if (need_dx) {
        dx = Tensor::matrix(n, f);
        if (cache.mode == Mode::kEval) {
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < f; ++j) dx.at(b, j) = dy.at(b, j) * s.scale[j] * inv[j];
        } else {
          const double nn = static_cast<double>(n);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < f; ++j)
              dx.at(b, j) = s.scale[j] * inv[j] / nn *
                            (nn * dy.at(b, j) - sum_dy[j] - xhat.at(b, j) * sum_dy_xhat[j]);
        }
      }
    } else if (need_dx) {
      dx = dy;
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(x[i] > 0.0)) dx[i] = 0.0;
    }
    if (need_dx) dy = std::move(dx);
  }
  return grads;
}

BackwardResult backward(const Network& net, const Tensor& logits, std::span<const int> labels,
                        const ForwardCache& cache) {
  require(cache.valid_for(net), ErrorCode::kState, "backward needs the cache of a forward pass");
  auto lg = softmax_cross_entropy(logits, labels);
  return {lg.loss, backward_from(net, cache, lg.grad)};
}

void sgd_step(Network& net, const Gradients& grads, const Mask& mask, double lr) {
  require(std::isfinite(lr) && lr >= 0.0, ErrorCode::kInvalidArgument,
          "learning rate must be finite and non-negative");
  require(grads.size() == net.size(), ErrorCode::kShapeMismatch,
          "gradient list does not match network layers");
  mask.check_compatible(net);
  if (lr == 0.0) return;
  for (std::size_t li = 0; li < net.size(); ++li) {
    auto& layer = net.layer(li);
    const auto& g = grads[li];
    if (auto* lin = std::get_if<LinearLayer>(&layer)) {
      require(g.weight.shape() == lin->weight.shape() && g.bias.shape() == lin->bias.shape(),
              ErrorCode::kShapeMismatch, "gradient shape mismatch at layer " + std::to_string(li));
      const LayerMask* lm = lin->prunable ? mask.find(li) : nullptr;
      auto& w = lin->weight;
      if (lm) {
        for (std::size_t j = 0; j < w.size(); ++j)
          w[j] = lm->bits[j] ? w[j] - lr * g.weight[j] : 0.0;
      } else {
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g.weight[j];
      }
      for (std::size_t j = 0; j < lin->bias.size(); ++j) lin->bias[j] -= lr * g.bias[j];
      check_finite(w, "sgd_step");
    } else if (auto* bnl = std::get_if<BatchNormLayer>(&layer)) {
      auto& s = bnl->state;
      require(g.weight.size() == s.features() && g.bias.size() == s.features(),
              ErrorCode::kShapeMismatch, "gradient shape mismatch at layer " + std::to_string(li));
      for (std::size_t j = 0; j < s.features(); ++j) {
        s.scale[j] -= lr * g.weight[j];
        s.shift[j] -= lr * g.bias[j];
      }
    }
  }
}

}  // namespace fedtiny
