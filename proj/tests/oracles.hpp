#pragma once
// Reference implementations for the tests. None of these call the library
// routine they check; they are slow, direct transcriptions.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "fedtiny/engine.hpp"
#include "fedtiny/network.hpp"

namespace oracle {

// Central difference of f around x.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

// Train-mode batch loss on a scratch copy, so moving statistics never leak
// between evaluations.
inline double train_loss(const fedtiny::Network& net, const fedtiny::Tensor& x,
                         const std::vector<int>& y) {
  fedtiny::Network scratch = net;
  const auto logits = fedtiny::forward(scratch, x, fedtiny::Mode::kTrain);
  return fedtiny::softmax_cross_entropy(logits, y).loss.value;
}

// Worst relative error between backprop and finite differences over every
// parameter of `net` (weights, biases, BN scale/shift).
inline double gradient_check(fedtiny::Network net, const fedtiny::Tensor& x,
                             const std::vector<int>& y, double h = 1e-6) {
  fedtiny::Network scratch = net;
  fedtiny::ForwardCache cache;
  const auto logits = fedtiny::forward(scratch, x, fedtiny::Mode::kTrain, &cache);
  const auto grads = fedtiny::backward(scratch, logits, y, cache).grads;
  const auto f = [&] { return train_loss(net, x, y); };
  double worst = 0.0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    std::vector<double>* params[2] = {nullptr, nullptr};
    if (std::holds_alternative<fedtiny::LinearLayer>(net.layer(i))) {
      params[0] = &net.linear(i).weight.storage();
      params[1] = &net.linear(i).bias.storage();
    } else if (std::holds_alternative<fedtiny::BatchNormLayer>(net.layer(i))) {
      params[0] = &net.bn(i).scale;
      params[1] = &net.bn(i).shift;
    } else {
      continue;
    }
    const std::span<const double> analytic[2] = {grads[i].weight.values(), grads[i].bias.values()};
    for (int p = 0; p < 2; ++p)
      for (std::size_t j = 0; j < params[p]->size(); ++j) {
        const double num = central_difference(f, (*params[p])[j], h);
        worst = std::max(worst, relative_error(analytic[p][j], num));
      }
  }
  return worst;
}

// Rank order: |g| descending, then index ascending.
inline bool ranks_before(std::size_t ia, double a, std::size_t ib, double b) {
  if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
  return ia < ib;
}

// Indices of the top-a values among `eligible` positions, by full sort.
inline std::vector<std::size_t> topk_by_sort(std::span<const double> g,
                                             std::span<const std::uint8_t> eligible,
                                             std::size_t a) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (eligible.empty() || eligible[i]) idx.push_back(i);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t p, std::size_t q) { return ranks_before(p, g[p], q, g[q]); });
  idx.resize(std::min(a, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// sum_k w_k x_k / sum_k w_k, elementwise.
inline std::vector<double> weighted_mean(const std::vector<std::vector<double>>& xs,
                                         const std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> out(xs.front().size(), 0.0);
  for (std::size_t k = 0; k < xs.size(); ++k)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[k] * xs[k][j];
  for (auto& v : out) v /= total;
  return out;
}

inline std::uint64_t clog2(std::uint64_t x) {
  return x <= 1 ? 0 : static_cast<std::uint64_t>(std::bit_width(x - 1));
}

// Storage bits transcribed from the compression-scheme formulas.
//   dense   d in [0.9, 1]   s = n b
//   bitmap  d in [0.3, 0.9) o = n
//   COO     d in [0.1, 0.3) o = m ceil(log2 n)
//   CSR/CSC d in [0, 0.1)   o = m ceil(log2 n_c) + n_r ceil(log2 m), cheaper orientation
// Sparse schemes: s = o + m b.
inline std::uint64_t storage_bits(std::uint64_t n_r, std::uint64_t n_c, std::uint64_t m,
                                  std::uint64_t b) {
  const std::uint64_t n = n_r * n_c;
  const double d = static_cast<double>(m) / static_cast<double>(n);
  if (d >= 0.9) return n * b;
  std::uint64_t o = 0;
  if (d >= 0.3) {
    o = n;
  } else if (d >= 0.1) {
    o = m * clog2(n);
  } else {
    const auto csr = m * clog2(n_c) + n_r * clog2(m);
    const auto csc = m * clog2(n_r) + n_c * clog2(m);
    o = std::min(csr, csc);
  }
  return o + m * b;
}

}  // namespace oracle
