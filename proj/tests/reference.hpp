#pragma once

// Plain scalar CD-1, written without the library's linear algebra, used as
// the sequential oracle. Only the per-case random stream is shared with the
// library, since that is part of the job contract.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <span>
#include <vector>

#include "mrdl/case.hpp"
#include "mrdl/deepnet.hpp"
#include "mrdl/rbm.hpp"

namespace reference {

struct Layer {
  std::size_t nv = 0;
  std::size_t nh = 0;
  std::vector<double> w;  // nv * nh, w[i * nh + j]
  std::vector<double> a;  // visible bias
  std::vector<double> b;  // hidden bias

  static Layer from(const mrdl::rbm::LayerWeights& lw) {
    Layer r{lw.num_vis, lw.num_hid, {}, {}, {}};
    r.w.assign(lw.w.values().begin(), lw.w.values().end());
    r.a = lw.vbias.raw();
    r.b = lw.hbias.raw();
    return r;
  }
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Trace {
  std::vector<double> hid_prob, hid_state, vis_recon, hid_recon_prob;
  std::vector<double> deltas;  // w row-major, then vbias, then hbias
};

inline Trace cd1(const Layer& L, const std::vector<double>& v, double lr, mrdl::rbm::CaseRng& rng) {
  Trace t;
  t.hid_prob.resize(L.nh);
  t.hid_state.resize(L.nh);
  for (std::size_t j = 0; j < L.nh; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < L.nv; ++i) s += v[i] * L.w[i * L.nh + j];
    t.hid_prob[j] = logistic(s + L.b[j]);
  }
  for (std::size_t j = 0; j < L.nh; ++j) t.hid_state[j] = rng.uniform() < t.hid_prob[j] ? 1.0 : 0.0;

  t.vis_recon.resize(L.nv);
  for (std::size_t i = 0; i < L.nv; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < L.nh; ++j) s += L.w[i * L.nh + j] * t.hid_state[j];
    t.vis_recon[i] = logistic(s + L.a[i]);
  }
  t.hid_recon_prob.resize(L.nh);
  for (std::size_t j = 0; j < L.nh; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < L.nv; ++i) s += t.vis_recon[i] * L.w[i * L.nh + j];
    t.hid_recon_prob[j] = logistic(s + L.b[j]);
  }

  for (std::size_t i = 0; i < L.nv; ++i)
    for (std::size_t j = 0; j < L.nh; ++j)
      t.deltas.push_back(lr * (v[i] * t.hid_prob[j] - t.vis_recon[i] * t.hid_recon_prob[j]));
  for (std::size_t i = 0; i < L.nv; ++i) t.deltas.push_back(lr * (v[i] - t.vis_recon[i]));
  for (std::size_t j = 0; j < L.nh; ++j) t.deltas.push_back(lr * (t.hid_prob[j] - t.hid_recon_prob[j]));
  return t;
}

/// Summed deltas of one batch, cases visited one after another.
inline std::vector<double> batch_sum(const Layer& L, std::span<const mrdl::TrainingCase> batch, double lr,
                                     std::uint64_t job_seed) {
  std::vector<double> sum(L.nv * L.nh + L.nv + L.nh, 0.0);
  for (const auto& c : batch) {
    mrdl::rbm::CaseRng rng(job_seed, c.case_id);
    const Trace t = cd1(L, c.pixels.raw(), lr, rng);
    for (std::size_t p = 0; p < sum.size(); ++p) sum[p] += t.deltas[p];
  }
  return sum;
}

/// One training epoch of one layer: contiguous batches, momentum, weight
/// decay on w only.
inline void epoch(Layer& L, std::vector<double>& velocity, std::span<const mrdl::TrainingCase> data,
                  const mrdl::deepnet::NetworkConfig& cfg, std::size_t layer_index, std::size_t epoch_no) {
  const auto& hp = cfg.hp;
  const double momentum = epoch_no > hp.momentum_switch_epoch ? hp.final_momentum : hp.momentum;
  const std::size_t nw = L.nv * L.nh;
  if (velocity.empty()) velocity.assign(nw + L.nv + L.nh, 0.0);
  const std::size_t bs = cfg.batch_size == 0 ? data.size() : cfg.batch_size;
  for (std::size_t start = 0, b = 0; start < data.size(); start += bs, ++b) {
    const auto batch = data.subspan(start, std::min(bs, data.size() - start));
    const auto seed = mrdl::deepnet::rbm_job_seed(cfg.seed, layer_index, epoch_no, b);
    const auto sum = batch_sum(L, batch, hp.learning_rate, seed);
    const double n = static_cast<double>(batch.size());
    for (std::size_t p = 0; p < sum.size(); ++p) {
      double* x = p < nw ? &L.w[p] : p < nw + L.nv ? &L.a[p - nw] : &L.b[p - nw - L.nv];
      double upd = momentum * velocity[p] + sum[p] / n;
      if (p < nw) upd = upd - hp.learning_rate * hp.weight_decay * *x;
      *x += upd;
      velocity[p] = upd;
    }
  }
}

inline bool same(const Layer& r, const mrdl::rbm::LayerWeights& lw) {
  return r.w == std::vector<double>(lw.w.values().begin(), lw.w.values().end()) && r.a == lw.vbias.raw() &&
         r.b == lw.hbias.raw();
}

}  // namespace reference
